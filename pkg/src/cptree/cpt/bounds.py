"""Closed-form depth guarantees and the path-product error bounds.

``check_estimate_bounds`` compares a product of node estimates ``q`` with
the product of true node conditionals ``p``:

    |prod q - prod p| <= sum_i |q_i - p_i| prod_{j != i} max(p_j, q_j)   (slab bound)
                      <= sum_i |q_i - p_i|                               (sum bound)
    |prod q - prod p|^2 <= d^2 * mean_i (q_i - p_i)^2                    (depth-squared bound)
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from ..errors import ConfigError

# Relative slack for inequality checks; equality cases (d = 1) are tight
# and would otherwise flip on the last ulp.
REL_SLACK = 1e-12
ABS_SLACK = 1e-15


def leq(a, b):
    """``a <= b`` up to rounding."""
    return a <= b + REL_SLACK * np.abs(b) + ABS_SLACK


def check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not (0.0 < alpha <= 1.0):
        raise ConfigError(f"alpha must lie in (0, 1], got {alpha}")
    return alpha


def kappa(alpha: float) -> float:
    """Largest asymptotic fraction of leaves on either side of a node."""
    alpha = check_alpha(alpha)
    return 1.0 / (1.0 + 2.0 ** (1.0 - 1.0 / alpha))


def depth_bound(n: int, alpha: float) -> float:
    """``log n / log(1/kappa) + 2``: maximum depth of an online-built tree on n labels."""
    if n < 1:
        raise ConfigError("n must be positive")
    k = kappa(alpha)
    return math.log(n) / math.log(1.0 / k) + 2.0


def entropy(k: float) -> float:
    """Binary entropy in nats."""
    if not 0.0 < k < 1.0:
        return 0.0
    return -k * math.log(k) - (1.0 - k) * math.log(1.0 - k)


def total_depth_bound(n: int, k: float) -> float:
    """``n log n / H(k)`` for trees whose every node has L, R <= k*N."""
    if not 0.5 <= k < 1.0:
        raise ConfigError(f"kappa must lie in [1/2, 1), got {k}")
    return n * math.log(n) / entropy(k) if n > 1 else 0.0


class EstimateBoundCheck(NamedTuple):
    lhs: float
    slab_bound: float
    sum_bound: float
    squared_bound: float
    all_hold: bool


def _as_unit_array(values, name):
    arr = np.asarray(values, dtype=np.float64)
    if not np.all((arr >= 0.0) & (arr <= 1.0)):
        raise ConfigError(f"{name} values must lie in [0, 1]")
    return arr


def estimate_bounds_batch(P, Q):
    """Vectorised bound check over rows of equal path length.

    Returns ``(lhs, slab, total, sq_bound, all_hold)`` arrays, one entry per row.
    """
    P = _as_unit_array(P, "p")
    Q = _as_unit_array(Q, "q")
    if P.shape != Q.shape or P.ndim != 2:
        raise ConfigError("p and q must be matching 2-D arrays")
    m, d = P.shape
    if d == 0:
        zeros = np.zeros(m)
        return zeros, zeros, zeros, zeros, np.ones(m, dtype=bool)
    lhs = np.abs(Q.prod(axis=1) - P.prod(axis=1))
    diff = np.abs(Q - P)
    hi = np.maximum(P, Q)
    ones = np.ones((m, 1))
    before = np.cumprod(np.hstack([ones, hi[:, :-1]]), axis=1)
    after = np.cumprod(np.hstack([ones, hi[:, :0:-1]]), axis=1)[:, ::-1]
    slab = (diff * before * after).sum(axis=1)
    total = diff.sum(axis=1)
    sq_bound = d * d * np.mean(diff * diff, axis=1)
    ok = leq(lhs, slab) & leq(slab, total) & leq(lhs * lhs, sq_bound)
    return lhs, slab, total, sq_bound, ok


def check_estimate_bounds(p_list, q_list) -> EstimateBoundCheck:
    """Bound check for one path; ``p`` are true node conditionals, ``q`` estimates."""
    p = np.asarray(p_list, dtype=np.float64).ravel()
    q = np.asarray(q_list, dtype=np.float64).ravel()
    if p.shape != q.shape:
        raise ConfigError(f"length mismatch: {p.size} vs {q.size}")
    lhs, slab, total, sq_bound, ok = estimate_bounds_batch(p[None, :], q[None, :])
    return EstimateBoundCheck(float(lhs[0]), float(slab[0]), float(total[0]), float(sq_bound[0]), bool(ok[0]))
