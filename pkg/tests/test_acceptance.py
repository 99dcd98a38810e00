"""Acceptance criteria.

Each test prints one ``CRITERION n: PASS|FAIL`` line (also collected into the
terminal summary) and then asserts the same verdict.  Expensive synthesis runs
are shared through a module-scoped cache.  Run just this file with

    pytest tests/test_acceptance.py -s
"""
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from otsynth import desk
from otsynth.assignment import assignment_cost, hungarian_oracle
from otsynth.gram import gram_synthesize
from otsynth.innovation import innovation_capacity
from otsynth.synthesis import SynthesisConfig, synthesize
from otsynth.transport import (
    augment,
    cost_block,
    dense_plan,
    greedy_hc_match,
    match_cardinality,
    nn_match,
    plan_argmax,
    plan_entropy,
    plan_marginals,
    sample_match,
    sinkhorn,
    target_marginals,
)

pytestmark = pytest.mark.slow

# pinned tolerances
C1_ENTRYWISE, C1_RESIDUAL, C1_SECONDS = 1e-6, 1e-3, 10.0
C2_SCALING = 1e-6
C3_COST_SLACK, C3_MIN_GOOD, C3_SECONDS = 0.05, 95, 60.0
C4_MC, C4_TOL = 0.63, 0.05
C6_CONST, C6_SLACK = 1 / 255, 1e-6
C8_OT_MIN, C8_BS_MC, C8_BS_TOL = 0.95, 0.3, 0.15
C9_FD, C9_SHIFT, C9_LOSS_FRACTION, C9_SECONDS = 1e-4, 1e-6, 0.01, 300.0
C10_SECONDS = 600.0

CONVERGED_SWEEPS = 1000
CORPUS_SIZE = 128
IC_SCALES, IC_PATCH = 4, 4


def report(n, ok, detail):
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def dense_reference(C, eps, n_iters):
    Cn = C / C.max()
    K = np.exp(-Cn / eps)
    r, c = target_marginals(*C.shape)
    b = np.ones(C.shape[1])
    for _ in range(n_iters):
        a = r / (K @ b)
        b = c / (K.T @ a)
    return a[:, None] * K * b[None, :]


def tiling_baseline(x):
    """The exemplar's top-left quadrant copied verbatim into all four quadrants."""
    h, w = x.shape[0] // 2, x.shape[1] // 2
    return np.tile(x[:h, :w], (2, 2, 1))


class Runs:
    """Lazily computed synthesis results shared by several criteria."""

    def __init__(self):
        self.corpus = desk.corpus(CORPUS_SIZE, CORPUS_SIZE)
        self._cache = {}

    def synth(self, name, heuristic, b):
        key = (name, heuristic, b)
        if key not in self._cache:
            t0 = time.perf_counter()
            y, trace = synthesize(self.corpus[name],
                                  SynthesisConfig(heuristic=heuristic, patch_side=b, num_scales=4))
            self._cache[key] = (y, trace, time.perf_counter() - t0)
        return self._cache[key]

    def ic(self, name, y):
        return innovation_capacity(self.corpus[name], y, IC_SCALES, IC_PATCH).mean


@pytest.fixture(scope="module")
def runs():
    return Runs()


def test_criterion_1_sinkhorn_correctness():
    rng = np.random.default_rng(100)
    eps, sweeps = 0.01, 200
    t0 = time.perf_counter()
    worst_entry = worst_res = 0.0
    for _ in range(50):
        xf, yf = augment(rng.random((30, 12))), augment(rng.random((30, 12)))
        sp = sinkhorn(xf, yf, eps, sweeps, slice_bytes=8 * 30 * 8)
        ref = dense_reference(cost_block(xf, yf, slice(None)), eps, sweeps)
        worst_entry = max(worst_entry, float(np.abs(dense_plan(sp) - ref).max()))
        rows, cols = plan_marginals(sp)
        r, c = target_marginals(30, 30)
        worst_res = max(worst_res, float(np.abs(rows - r).max()), float(np.abs(cols - c).max()))
    secs = time.perf_counter() - t0
    ok = worst_entry < C1_ENTRYWISE and worst_res < C1_RESIDUAL and secs < C1_SECONDS
    report(1, ok, f"max |P - P_dense| = {worst_entry:.2e} (< {C1_ENTRYWISE}), "
                  f"max residual = {worst_res:.2e} (< {C1_RESIDUAL}), {secs:.1f}s")


def test_criterion_2_slicing_invariance():
    rng = np.random.default_rng(200)
    n, d = 96, 48
    xf, yf = augment(rng.random((n, d))), augment(rng.random((n, d)))
    budgets = [8 * n * int(np.ceil(n / k)) for k in (1, 4, 16)]
    outs = []
    for sb in budgets:
        sp = sinkhorn(xf, yf, 1e-3, 50, slice_bytes=sb)
        outs.append((nn_match(xf, yf, sb).forward, plan_argmax(sp, sb).forward,
                     greedy_hc_match(sp, slice_bytes=sb).forward, sp.a, sp.b))
    same = all(np.array_equal(o[i], outs[0][i]) for o in outs[1:] for i in range(3))
    dev = max(float(np.max(np.abs(o[i] - outs[0][i]) / np.abs(outs[0][i])))
              for o in outs[1:] for i in (3, 4))
    report(2, same and dev < C2_SCALING,
           f"matches identical: {same}, max relative scaling deviation = {dev:.2e} (< {C2_SCALING})")


def test_criterion_3_assignment_quality():
    rng = np.random.default_rng(300)
    t0 = time.perf_counter()
    good = 0
    for _ in range(100):
        xf, yf = augment(rng.random((64, 12))), augment(rng.random((64, 12)))
        sp = sinkhorn(xf, yf, 1e-3, CONVERGED_SWEEPS)
        m = greedy_hc_match(sp, max_rounds=4096, target_mc=1.0)
        C = cost_block(yf, xf, slice(None))
        opt = assignment_cost(C, hungarian_oracle(C))
        cost = float(C[np.arange(64), m.forward].sum())
        good += match_cardinality(m) == 1.0 and cost <= (1 + C3_COST_SLACK) * opt
    secs = time.perf_counter() - t0
    report(3, good >= C3_MIN_GOOD and secs < C3_SECONDS,
           f"{good}/100 instances with MC = 1 and cost within 5% (need {C3_MIN_GOOD}), {secs:.1f}s")


def test_criterion_4_sampling_cardinality():
    rng = np.random.default_rng(400)
    xf, yf = augment(rng.random((500, 12))), augment(rng.random((500, 12)))
    sp = sinkhorn(xf, yf, 1.0, CONVERGED_SWEEPS)
    mcs = [match_cardinality(sample_match(sp, seed=s)) for s in range(5)]
    worst = max(abs(v - C4_MC) for v in mcs)
    report(4, worst <= C4_TOL, f"sampled MC = {np.round(mcs, 3).tolist()} (target {C4_MC} +- {C4_TOL})")


def test_criterion_5_entropy_ordering():
    rng = np.random.default_rng(500)
    wins = 0
    for _ in range(20):
        xf, yf = augment(rng.random((64, 12))), augment(rng.random((64, 12)))
        hi = plan_entropy(sinkhorn(xf, yf, 0.1, CONVERGED_SWEEPS))
        lo = plan_entropy(sinkhorn(xf, yf, 1e-3, CONVERGED_SWEEPS))
        wins += hi > lo
    report(5, wins == 20, f"h(eps=0.1) > h(eps=0.001) on {wins}/20 instances")


def test_criterion_6_synthesis_invariants():
    const = np.full((64, 64, 3), 0.6, np.float32)
    y, _ = synthesize(const, SynthesisConfig(num_scales=2, iters_per_scale=3))
    fixed = float(np.abs(y - 0.6).max())

    x = desk.weave(64, 64)
    cfg = SynthesisConfig(num_scales=2, iters_per_scale=3, seed=7)
    det = synthesize(x, cfg)[0].tobytes() == synthesize(x, cfg)[0].tobytes()

    _, trace = synthesize(x, SynthesisConfig(heuristic="nn", subsample_fraction=1.0,
                                             coarse_blend_weight=0.0, num_scales=2))
    rises = [b - a for j in range(3)
             for a, b in zip([r.mean_cost for r in trace.at_scale(j)],
                             [r.mean_cost for r in trace.at_scale(j)][1:])]
    worst_rise = max(rises)
    ok = fixed <= C6_CONST and det and worst_rise <= C6_SLACK
    report(6, ok, f"constant drift = {fixed:.2e} (<= 1/255), deterministic: {det}, "
                  f"largest energy rise = {worst_rise:.2e} (<= {C6_SLACK})")


def test_criterion_7_ic_metric(runs):
    x = runs.corpus["cells"]
    self_ic = innovation_capacity(x, x, IC_SCALES, IC_PATCH).mean
    rng = np.random.default_rng(700)
    y = rng.permutation(x.reshape(-1, 3)).reshape(x.shape)
    base = innovation_capacity(x, y, 0, IC_PATCH).per_scale[0]
    shift_ok = all(innovation_capacity(x, np.roll(y, s, axis=(0, 1)), 0, IC_PATCH).per_scale[0] == base
                   for s in [(1, 2), (17, 90), (127, 5)])
    prev, splice_ok = innovation_capacity(x, y, 2, IC_PATCH).mean, True
    half = CORPUS_SIZE // 2
    spots = [(0, 0), (half, half), (0, half), (half, 0)]
    for k in (1, 2, 4):
        z = y.copy()
        for r, c in spots[:k]:
            z[r:r + half, c:c + half] = x[r:r + half, c:c + half]
        ic = innovation_capacity(x, z, 2, IC_PATCH).mean
        splice_ok &= ic < prev
        prev = ic

    orders, details = [], []
    for name in runs.corpus:
        ot4 = runs.ic(name, runs.synth(name, "ot", 4)[0])
        ot7 = runs.ic(name, runs.synth(name, "ot", 7)[0])
        tile = runs.ic(name, tiling_baseline(runs.corpus[name]))
        orders.append(ot4 > ot7 > tile)
        details.append(f"{name} {ot4:.3f}/{ot7:.3f}/{tile:.3f}")
    ok = self_ic == 0.0 and shift_ok and splice_ok and all(orders)
    report(7, ok, f"IC(x,x) = {self_ic}, shift exact: {shift_ok}, splice monotone: {splice_ok}, "
                  f"ordering OT4 > OT7 > tiling: {'; '.join(details)}")


def test_criterion_8_mc_regimes(runs):
    ot = {n: runs.synth(n, "ot", 4)[1].final_mc() for n in runs.corpus}
    bs = {n: runs.synth(n, "bs", 4)[1].final_mc() for n in runs.corpus}
    ot_ok = all(v >= C8_OT_MIN for v in ot.values())
    bs_ok = all(abs(v - C8_BS_MC) <= C8_BS_TOL for v in bs.values())
    fmt = lambda d: ", ".join(f"{k} {v:.3f}" for k, v in d.items())  # noqa: E731
    report(8, ot_ok and bs_ok, f"OT MC [{fmt(ot)}] (>= {C8_OT_MIN}); "
                               f"BS MC [{fmt(bs)}] ({C8_BS_MC} +- {C8_BS_TOL})")


def test_criterion_9_gram_baseline():
    from test_gram import fd_check
    from otsynth.gram import gram_features, gram_loss_grad, make_filter_bank

    rng = np.random.default_rng(900)
    fb = make_filter_bank(8, 3, seed=901)
    G_x = gram_features(rng.random((8, 8, 3)), fb)
    fd = fd_check(rng.random((8, 8, 3)), G_x, fb, trials=20, seed=902)

    fb = make_filter_bank(16, 4, seed=903)
    G_x = gram_features(desk.blobs(16, 16), fb)
    y = rng.random((16, 16, 3))
    base = gram_loss_grad(y, G_x, fb)[0]
    shift = max(abs(gram_loss_grad(np.roll(y, s, axis=(0, 1)), G_x, fb)[0] - base) / base
                for s in [(1, 0), (0, 3), (7, 9)])

    t0 = time.perf_counter()
    _, trace = gram_synthesize(desk.blobs(64, 64), K=64, steps=500, J=2, seed=0)
    secs = time.perf_counter() - t0
    fractions = [losses[-1] / ref for losses, ref in zip(trace.losses, trace.noise_loss)]
    ok = fd < C9_FD and shift < C9_SHIFT and max(fractions) < C9_LOSS_FRACTION and secs < C9_SECONDS
    report(9, ok, f"FD rel. error = {fd:.2e}, shift deviation = {shift:.2e}, "
                  f"final/noise loss per scale = {[f'{v:.1e}' for v in fractions]}, {secs:.0f}s")


def test_criterion_10_end_to_end(runs):
    y, _, secs = runs.synth("blobs", "ot", 4)
    x = runs.corpus["blobs"]
    ic = runs.ic("blobs", y)
    tile = runs.ic("blobs", tiling_baseline(x))
    ok = y.shape == x.shape and secs < C10_SECONDS and ic > tile
    report(10, ok, f"{CORPUS_SIZE}x{CORPUS_SIZE} OT b=4 J=4 in {secs:.0f}s (< {C10_SECONDS:.0f}), "
                   f"IC {ic:.3f} vs tiling baseline {tile:.3f}")
