"""Limited-memory BFGS with a monotone backtracking line search."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np


@dataclass
class OptimResult:
    x: np.ndarray
    loss: float
    losses: list[float] = field(default_factory=list)
    steps: int = 0
    fallbacks: int = 0
    stopped: str = ""


def _two_loop(g, pairs, gamma):
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * np.dot(s, q)
        q -= a * y
        alphas.append(a)
    r = gamma * q
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        r += (a - rho * np.dot(y, r)) * s
    return -r


def _backtrack(fun_grad, x, f, g, d, t, c1, shrink, max_halvings):
    slope = float(np.dot(g, d))
    for _ in range(max_halvings):
        x_new = x + t * d
        f_new, g_new = fun_grad(x_new)
        if np.isfinite(f_new) and f_new <= f + c1 * t * slope and f_new < f:
            return x_new, f_new, g_new
        t *= shrink
    return None


def lbfgs(fun_grad, x0, max_steps=500, history=10, c1=1e-4, shrink=0.5,
          max_halvings=30, first_step=1e-2, fallback_step=1.0 / 255, gtol=1e-12) -> OptimResult:
    """Minimise ``fun_grad(x) -> (f, g)`` over a flat float64 vector.

    Every accepted step strictly lowers ``f``.  When the backtracking search
    along the quasi-Newton direction fails, the history is dropped and one
    plain gradient step is tried whose largest coordinate change is
    ``fallback_step``; if that does not lower ``f`` either, optimisation
    stops.
    """
    x = np.array(x0, dtype=np.float64).ravel()
    f, g = fun_grad(x)
    res = OptimResult(x, f, [f])
    pairs = deque(maxlen=history)
    gamma = None
    for _ in range(max_steps):
        gmax = float(np.abs(g).max())
        if gmax <= gtol:
            res.stopped = "gradient"
            break
        if pairs:
            d = _two_loop(g, list(pairs), gamma)
            t = 1.0
        else:
            d = -g
            t = first_step / gmax
        if np.dot(g, d) >= 0:
            pairs.clear()
            d, t = -g, first_step / gmax
        step = _backtrack(fun_grad, x, f, g, d, t, c1, shrink, max_halvings)
        if step is None:
            pairs.clear()
            res.fallbacks += 1
            x_try = x - (fallback_step / gmax) * g
            f_try, g_try = fun_grad(x_try)
            if not f_try < f:
                res.stopped = "line search"
                break
            step = (x_try, f_try, g_try)
        x_new, f_new, g_new = step
        s, yv = x_new - x, g_new - g
        sy = float(np.dot(s, yv))
        if sy > 1e-10 * float(np.dot(yv, yv)):
            pairs.append((s, yv, 1.0 / sy))
            gamma = sy / float(np.dot(yv, yv))
        x, f, g = x_new, f_new, g_new
        res.losses.append(f)
        res.steps += 1
    else:
        res.stopped = "max steps"
    res.x, res.loss = x, f
    return res
