"""Sliced pairwise costs, patch matching heuristics and entropic transport.

Conventions used throughout:

* ``C[i, j] = ||x_i - y_j||^2`` where rows ``i`` index exemplar patches and
  columns ``j`` index synthesis patches.
* A match maps every synthesis patch ``j`` to an exemplar row ``forward[j]``.
* The transport plan ``P = diag(a) K diag(b)`` with ``K = exp(-C / eps)`` is
  never materialised.  Only blocks of ``C`` whose size fits in ``slice_bytes``
  exist at any time.

The scaling vectors are kept as logarithms.  At ``eps = 1e-3`` the plain
``a`` and ``b`` over- and underflow double precision, while ``log a`` and
``log b`` stay well inside range.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, IncompleteMatchError, SlicingError

UNMATCHED = -1
DEFAULT_SLICE_BYTES = 64 * 2**20
_ENTRY_BYTES = 8


# ---------------------------------------------------------------------------
# features and cost blocks
# ---------------------------------------------------------------------------

@dataclass
class AugmentedFeatures:
    """Patch rows with norm/one columns appended.

    ``augmented = [v, |v|^2, 1]`` and ``partner = [-2 v, 1, |v|^2]`` so that
    ``A.augmented @ B.partner.T`` is the matrix of squared distances between
    the rows of ``A`` and ``B``.
    """

    base: np.ndarray
    augmented: np.ndarray
    partner: np.ndarray

    @property
    def n(self) -> int:
        return self.base.shape[0]


def augment(data: np.ndarray) -> AugmentedFeatures:
    v = np.asarray(data, dtype=np.float64)
    if v.ndim != 2:
        raise ConfigError(f"patch data must be 2-D, got shape {v.shape}")
    sq = np.einsum("ij,ij->i", v, v)[:, None]
    ones = np.ones_like(sq)
    return AugmentedFeatures(v, np.hstack([v, sq, ones]), np.hstack([-2.0 * v, ones, sq]))


def rows_per_block(slice_bytes: int, n_cols: int) -> int:
    """Rows of an ``n_cols``-wide float64 block that fit into ``slice_bytes``."""
    rows = int(slice_bytes) // (_ENTRY_BYTES * max(int(n_cols), 1))
    if rows < 1:
        raise SlicingError(
            f"slice budget of {slice_bytes} bytes cannot hold one row of {n_cols} costs")
    return rows


def _slices(n: int, step: int):
    return [slice(s, min(s + step, n)) for s in range(0, n, step)]


def _pair_cost(lhs: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    c = lhs @ rhs.T
    np.maximum(c, 0.0, out=c)
    return c


def cost_block(xf: AugmentedFeatures, yf: AugmentedFeatures, row_range, slice_bytes=None) -> np.ndarray:
    """Squared distances between rows ``row_range`` of ``xf`` and every row of ``yf``.

    Small negative values from cancellation are clamped to zero.  Raises
    :class:`SlicingError` when the block would exceed ``slice_bytes``.
    """
    lhs = xf.augmented[row_range]
    if lhs.ndim == 1:
        lhs = lhs[None, :]
    if slice_bytes is not None and lhs.shape[0] * yf.n * _ENTRY_BYTES > slice_bytes:
        raise SlicingError(
            f"block of {lhs.shape[0]}x{yf.n} costs exceeds {slice_bytes} bytes")
    return _pair_cost(lhs, yf.partner)


def max_cost(xf: AugmentedFeatures, yf: AugmentedFeatures, slice_bytes: int = DEFAULT_SLICE_BYTES) -> float:
    step = rows_per_block(slice_bytes, yf.n)
    return max(float(cost_block(xf, yf, sl).max()) for sl in _slices(xf.n, step))


def _lse_rows(s: np.ndarray) -> np.ndarray:
    """Row-wise log-sum-exp; overwrites ``s``."""
    m = s.max(axis=1)
    s -= m[:, None]
    np.exp(s, out=s)
    return m + np.log(s.sum(axis=1))


# ---------------------------------------------------------------------------
# matches
# ---------------------------------------------------------------------------

@dataclass
class MatchMap:
    """``forward[j]`` is the exemplar row matched to synthesis row ``j``."""

    forward: np.ndarray
    n_exemplar: int

    @property
    def complete(self) -> bool:
        return bool(np.all(self.forward != UNMATCHED))


def match_cardinality(m: MatchMap) -> float:
    """Fraction of exemplar rows used by at least one synthesis row."""
    if not m.complete:
        raise IncompleteMatchError("match map contains unmatched entries")
    return np.unique(m.forward).size / m.n_exemplar


def nn_match(xf: AugmentedFeatures, yf: AugmentedFeatures, slice_bytes: int = DEFAULT_SLICE_BYTES) -> MatchMap:
    """Nearest exemplar row for every synthesis row (lowest index on ties)."""
    forward = np.empty(yf.n, dtype=np.intp)
    for sl in _slices(yf.n, rows_per_block(slice_bytes, xf.n)):
        forward[sl] = cost_block(yf, xf, sl).argmin(axis=1)
    return MatchMap(forward, xf.n)


def _nearest_rows(af, bf, slice_bytes):
    out = np.empty(af.n, dtype=np.intp)
    for sl in _slices(af.n, rows_per_block(slice_bytes, bf.n)):
        out[sl] = cost_block(af, bf, sl).argmin(axis=1)
    return out


class BSTargets(NamedTuple):
    """Per-synthesis-patch update targets of the bidirectional heuristic.

    ``targets[j] = w_j * X[forward[j]] + (1 - w_j) * mean(X[i] for i with
    backward[i] == j)`` where ``w_j = forward_weights[j]`` is ``alpha`` or 1
    when no exemplar patch picked ``j``.
    """

    targets: np.ndarray
    forward_weights: np.ndarray
    forward: MatchMap
    backward: np.ndarray


def bs_update_targets(xf: AugmentedFeatures, yf: AugmentedFeatures, alpha: float = 0.25,
                      slice_bytes: int = DEFAULT_SLICE_BYTES) -> BSTargets:
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"alpha must lie in [0, 1], got {alpha}")
    fwd = nn_match(xf, yf, slice_bytes)
    bwd = _nearest_rows(xf, yf, slice_bytes)
    counts = np.bincount(bwd, minlength=yf.n)
    sums = np.zeros_like(yf.base)
    np.add.at(sums, bwd, xf.base)
    forward_targets = xf.base[fwd.forward]
    hit = counts > 0
    weights = np.where(hit, alpha, 1.0)
    targets = forward_targets.copy()
    backward_mean = sums[hit] / counts[hit][:, None]
    targets[hit] = alpha * forward_targets[hit] + (1.0 - alpha) * backward_mean
    return BSTargets(targets, weights, fwd, bwd)


# ---------------------------------------------------------------------------
# entropic transport
# ---------------------------------------------------------------------------

@dataclass
class ScalingPair:
    """Sinkhorn scalings defining ``P = diag(a) exp(-C / (eps * cost_scale)) diag(b)``.

    ``cost_scale`` is the largest entry of ``C``; costs are divided by it
    before exponentiation, so ``epsilon`` is relative to the cost range.
    """

    log_a: np.ndarray
    log_b: np.ndarray
    epsilon: float
    cost_scale: float
    xf: AugmentedFeatures
    yf: AugmentedFeatures
    residuals: list = field(default_factory=list)

    @property
    def a(self) -> np.ndarray:
        return np.exp(self.log_a)

    @property
    def b(self) -> np.ndarray:
        return np.exp(self.log_b)

    @property
    def n_x(self) -> int:
        return self.log_a.size

    @property
    def n_y(self) -> int:
        return self.log_b.size

    @property
    def inv_temperature(self) -> float:
        return 1.0 / (self.epsilon * self.cost_scale)

    def log_plan_block(self, x_idx, y_idx) -> np.ndarray:
        """``log P[x_idx, y_idx]`` transposed, shape ``(len(y_idx), len(x_idx))``."""
        s = _pair_cost(self.yf.augmented[y_idx], self.xf.partner[x_idx])
        s *= -self.inv_temperature
        s += self.log_a[x_idx][None, :]
        s += self.log_b[y_idx][:, None]
        return s


@dataclass
class DensePlan:
    """An explicit non-negative plan with the same block interface as :class:`ScalingPair`."""

    plan: np.ndarray

    @property
    def n_x(self) -> int:
        return self.plan.shape[0]

    @property
    def n_y(self) -> int:
        return self.plan.shape[1]

    def log_plan_block(self, x_idx, y_idx) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(np.asarray(self.plan, dtype=np.float64)[x_idx][:, y_idx]).T


def target_marginals(n_x: int, n_y: int):
    """Unit mass per synthesis patch; exemplar rows share the same total evenly."""
    return np.full(n_x, n_y / n_x), np.ones(n_y)


def sinkhorn(xf: AugmentedFeatures, yf: AugmentedFeatures, epsilon: float = 1e-3,
             n_iters: int = 10, slice_bytes: int = DEFAULT_SLICE_BYTES,
             track_residuals: bool = False) -> ScalingPair:
    """Memory-sliced Sinkhorn scaling in the log domain.

    Each sweep updates ``a`` over exemplar-row slices of ``C`` and then ``b``
    over synthesis-row slices; only one ``slice_bytes`` block of costs exists
    at a time.  With ``track_residuals`` the maximum row/column marginal
    residual after every sweep is appended to ``ScalingPair.residuals`` as
    ``(iteration, max_row_residual, max_col_residual)``.
    """
    if not epsilon > 0:
        raise ConfigError(f"epsilon must be positive, got {epsilon}")
    if n_iters < 1:
        raise ConfigError(f"n_iters must be >= 1, got {n_iters}")
    scale = max_cost(xf, yf, slice_bytes)
    if not scale > 0:
        scale = 1.0
    inv = 1.0 / (epsilon * scale)
    r, c = target_marginals(xf.n, yf.n)
    log_r, log_c = np.log(r), np.log(c)
    log_a = np.zeros(xf.n)
    log_b = np.zeros(yf.n)
    x_slices = _slices(xf.n, rows_per_block(slice_bytes, yf.n))
    y_slices = _slices(yf.n, rows_per_block(slice_bytes, xf.n))
    sp = ScalingPair(log_a, log_b, float(epsilon), scale, xf, yf)
    for it in range(n_iters):
        for sl in x_slices:
            s = cost_block(xf, yf, sl)
            s *= -inv
            s += log_b[None, :]
            log_a[sl] = log_r[sl] - _lse_rows(s)
        for sl in y_slices:
            s = cost_block(yf, xf, sl)
            s *= -inv
            s += log_a[None, :]
            log_b[sl] = log_c[sl] - _lse_rows(s)
        if track_residuals:
            rows, cols = plan_marginals(sp, slice_bytes)
            sp.residuals.append((it + 1, float(np.abs(rows - r).max()),
                                 float(np.abs(cols - c).max())))
    if not (np.all(np.isfinite(log_a)) and np.all(np.isfinite(log_b))):
        raise FloatingPointError("Sinkhorn scalings became non-finite")
    return sp


def plan_marginals(sp, slice_bytes: int = DEFAULT_SLICE_BYTES):
    """Row and column sums of the implicit plan, computed blockwise."""
    n_x, n_y = sp.n_x, sp.n_y
    col_log = np.empty(n_y)
    row_acc = np.zeros(n_x)
    for sl in _slices(n_y, rows_per_block(slice_bytes, n_x)):
        lp = sp.log_plan_block(slice(None), sl)
        np.exp(lp, out=lp)
        col_log[sl] = lp.sum(axis=1)
        row_acc += lp.sum(axis=0)
    return row_acc, col_log


def plan_entropy(sp, slice_bytes: int = DEFAULT_SLICE_BYTES) -> float:
    """``h(P) = -sum P_ij log P_ij`` of the implicit plan."""
    total = 0.0
    for sl in _slices(sp.n_y, rows_per_block(slice_bytes, sp.n_x)):
        lp = sp.log_plan_block(slice(None), sl)
        p = np.exp(lp)
        nz = p > 0
        total -= float(np.sum(p[nz] * lp[nz]))
    return total


def dense_plan(sp) -> np.ndarray:
    """Materialise the plan; only for small problems and tests."""
    return np.exp(sp.log_plan_block(slice(None), slice(None))).T


def write_residuals_csv(path, residuals) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "max_row_residual", "max_col_residual"])
        w.writerows(residuals)


def plan_argmax(sp, slice_bytes: int = DEFAULT_SLICE_BYTES) -> MatchMap:
    """Column-wise argmax of the plan, i.e. the row holding each column's largest mass."""
    forward = np.empty(sp.n_y, dtype=np.intp)
    for sl in _slices(sp.n_y, rows_per_block(slice_bytes, sp.n_x)):
        forward[sl] = sp.log_plan_block(slice(None), sl).argmax(axis=1)
    return MatchMap(forward, sp.n_x)


def sample_match(sp, seed=None, slice_bytes: int = DEFAULT_SLICE_BYTES) -> MatchMap:
    """Draw each column's row from the column's normalised plan mass (Gumbel-max)."""
    rng = np.random.default_rng(seed)
    forward = np.empty(sp.n_y, dtype=np.intp)
    for sl in _slices(sp.n_y, rows_per_block(slice_bytes, sp.n_x)):
        lp = sp.log_plan_block(slice(None), sl)
        lp += rng.gumbel(size=lp.shape)
        forward[sl] = lp.argmax(axis=1)
    return MatchMap(forward, sp.n_x)


def _column_argmax(sp, rows, cols, slice_bytes):
    """Best active row for each active column and the log-plan value there."""
    best_row = np.empty(cols.size, dtype=np.intp)
    best_val = np.empty(cols.size)
    x_idx = slice(None) if rows.size == sp.n_x else rows
    for sl in _slices(cols.size, rows_per_block(slice_bytes, rows.size)):
        lp = sp.log_plan_block(x_idx, cols[sl])
        am = lp.argmax(axis=1)
        best_row[sl] = rows[am]
        best_val[sl] = lp[np.arange(am.size), am]
    return best_row, best_val


def greedy_hc_match(sp, max_rounds: int = 20, target_mc: float = 0.99,
                    slice_bytes: int = DEFAULT_SLICE_BYTES) -> MatchMap:
    """Extract a high-cardinality match from a plan.

    Every round takes the column argmax over the still-unmatched rows and
    columns.  Rows claimed by several columns keep only the column where the
    plan is largest, which yields a partial permutation that is committed
    before the matched rows and columns leave the active sets.  Once the
    match cardinality reaches ``target_mc``, or on round ``max_rounds``, the
    remaining columns take their column argmax directly, so the result is
    always complete but possibly not injective.

    ``sp`` may be a :class:`ScalingPair` or a :class:`DensePlan`.
    """
    if max_rounds < 1:
        raise ConfigError(f"max_rounds must be >= 1, got {max_rounds}")
    if not 0.0 < target_mc <= 1.0:
        raise ConfigError(f"target_mc must lie in (0, 1], got {target_mc}")
    n_x, n_y = sp.n_x, sp.n_y
    forward = np.full(n_y, UNMATCHED, dtype=np.intp)
    row_free = np.ones(n_x, dtype=bool)
    col_free = np.ones(n_y, dtype=bool)
    matched_rows = 0
    for k in range(1, max_rounds + 1):
        cols = np.flatnonzero(col_free)
        if cols.size == 0:
            break
        rows = np.flatnonzero(row_free)
        final = k == max_rounds or matched_rows / n_x >= target_mc or rows.size == 0
        if rows.size == 0:
            rows = np.arange(n_x)
        delta, val = _column_argmax(sp, rows, cols, slice_bytes)
        if final:
            forward[cols] = delta
            break
        # per claimed row, the claiming column with the largest plan value
        order = np.lexsort((cols, -val, delta))
        first = np.ones(order.size, dtype=bool)
        first[1:] = delta[order[1:]] != delta[order[:-1]]
        win = order[first]
        forward[cols[win]] = delta[win]
        col_free[cols[win]] = False
        row_free[delta[win]] = False
        matched_rows += win.size
    return MatchMap(forward, n_x)
