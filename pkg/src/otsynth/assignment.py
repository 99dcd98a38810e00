"""Exact linear assignment for small instances.

Used to check the quality of the greedy transport matches; cubic time, so
not meant for image-sized problems.
"""
import numpy as np

from .errors import OracleDomainError

MAX_ORACLE_SIZE = 512


def hungarian_oracle(cost) -> np.ndarray:
    """Minimum-cost perfect assignment of a square cost matrix.

    Shortest augmenting paths with row/column potentials, O(n^3).

    Returns
    -------
    perm : ndarray of int
        ``perm[i]`` is the column assigned to row ``i``.
    """
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise OracleDomainError(f"Hungarian oracle needs a square matrix, got shape {c.shape}")
    n = c.shape[0]
    if n > MAX_ORACLE_SIZE:
        raise OracleDomainError(f"oracle limited to n <= {MAX_ORACLE_SIZE}, got {n}")
    if not np.all(np.isfinite(c)):
        raise OracleDomainError("cost matrix contains non-finite values")
    if n == 0:
        return np.empty(0, dtype=np.intp)

    # 1-based bookkeeping; column 0 is the virtual source of each augmentation
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    row_of = np.zeros(n + 1, dtype=np.intp)
    way = np.zeros(n + 1, dtype=np.intp)
    for i in range(1, n + 1):
        row_of[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = row_of[j0]
            free = ~used
            free[0] = False
            reduced = c[i0 - 1] - u[i0] - v[1:]
            better = free[1:] & (reduced < minv[1:])
            minv[1:][better] = reduced[better]
            way[1:][better] = j0
            cand = np.where(free[1:], minv[1:], np.inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[row_of[used]] += delta
            v[used] -= delta
            minv[free] -= delta
            j0 = j1
            if row_of[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            row_of[j0] = row_of[j1]
            j0 = j1
    perm = np.empty(n, dtype=np.intp)
    perm[row_of[1:] - 1] = np.arange(n)
    return perm


def assignment_cost(cost, perm) -> float:
    c = np.asarray(cost, dtype=np.float64)
    return float(c[np.arange(len(perm)), perm].sum())
