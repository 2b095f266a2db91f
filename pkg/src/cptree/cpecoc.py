"""k-way label tree with a PECOC estimator of the child distribution at each node.

``k = 2`` behaves like a binary probability tree, ``k = n`` is flat PECOC.
A label's probability is the product, along its root-to-leaf path, of the
node-level (clamped) PECOC estimates of the next child.
"""

from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np

from .cpt.bounds import leq
from .data import SparseVector, check_label
from .errors import ConfigError, LabelNotFoundError
from .pecoc import PecocModel, clamp01, estimate_from_outputs, hadamard_code
from .regressor import DEFAULT_DECAY, DEFAULT_ETA0


def _is_pow2(k: int) -> bool:
    return k >= 2 and not k & (k - 1)


def levels_for(n: int, k: int) -> int:
    """Number of levels needed to give at least ``n`` leaves."""
    levels, size = 1, k
    while size < n:
        size *= k
        levels += 1
    return levels


def _exact_log(n: int, k: int) -> int | None:
    levels = levels_for(n, k)
    return levels if k**levels == n else None


class KWayTree:
    """Complete k-ary tree over label slots, padded with dummy slots.

    Internal nodes are numbered level by level; the children of node ``v``
    are ``v*k + 1 + c`` for ``c`` in ``range(k)``.
    """

    def __init__(
        self,
        labels: Sequence[str],
        k: int,
        bits: int,
        eta0: float = DEFAULT_ETA0,
        decay: float = DEFAULT_DECAY,
    ):
        if not _is_pow2(int(k)):
            raise ConfigError(f"k must be a power of two >= 2, got {k}")
        self.k = int(k)
        self.labels = [check_label(y) for y in labels]
        if len(set(self.labels)) != len(self.labels):
            raise ConfigError("labels must be distinct")
        if not self.labels:
            raise ConfigError("need at least one label")
        self.levels = levels_for(len(self.labels), self.k)
        self.n_slots = self.k**self.levels
        self._slots = {y: s for s, y in enumerate(self.labels)}
        n_internal = (self.n_slots - 1) // (self.k - 1)
        self.nodes = [PecocModel(self.k, bits, eta0, decay) for _ in range(n_internal)]
        self.regressor_updates = 0

    @property
    def bits(self) -> int:
        return self.nodes[0].bits

    @property
    def n_regressors(self) -> int:
        return len(self.nodes) * (self.k - 1)

    def __contains__(self, y: str) -> bool:
        return y in self._slots

    def slot(self, y: str) -> int:
        s = self._slots.get(y)
        if s is None:
            raise LabelNotFoundError(f"label {y!r} has no leaf")
        return s

    def path(self, slot: int) -> list[tuple[int, int]]:
        """``(node, child index)`` pairs from the root to ``slot``."""
        steps, node = [], 0
        for level in range(self.levels):
            c = (slot // self.k ** (self.levels - 1 - level)) % self.k
            steps.append((node, c))
            node = node * self.k + 1 + c
        return steps

    def train(self, x: SparseVector, y: str) -> None:
        for node, c in self.path(self.slot(y)):
            self.nodes[node].train_column(x, c)
            self.regressor_updates += self.k - 1

    def learn(self, x: SparseVector, y: str) -> None:
        """Train, skipping labels without a leaf."""
        if y in self._slots:
            self.train(x, y)

    def estimate(self, x: SparseVector, y: str) -> float:
        s = self._slots.get(y)
        if s is None:
            return 0.0
        q = 1.0
        for node, c in self.path(s):
            q *= clamp01(self.nodes[node].estimate_column(x, c))
        return q

    predict = estimate

    def to_state(self):
        header = {
            "k": self.k, "labels": self.labels, "bits": self.bits,
            "eta0": self.nodes[0].arena.eta0, "decay": self.nodes[0].arena.decay,
            "regressor_updates": self.regressor_updates,
        }
        weights = np.stack([m.arena.used()[0] for m in self.nodes])
        counts = np.stack([m.arena.used()[1] for m in self.nodes])
        return header, {"weights": weights, "update_counts": counts}

    @classmethod
    def from_state(cls, header, arrays):
        tree = cls(header["labels"], header["k"], header["bits"], header["eta0"], header["decay"])
        for m, W, c in zip(tree.nodes, arrays["weights"], arrays["update_counts"]):
            m.arena.load_rows(W, c)
        tree.regressor_updates = header["regressor_updates"]
        return tree


def build_kway(labels: Sequence[str], k: int, bits: int, **kwargs) -> KWayTree:
    return KWayTree(labels, k, bits, **kwargs)


def _check_pair(n: int, k: int) -> int:
    if not _is_pow2(int(k)):
        raise ConfigError(f"k must be a power of two >= 2, got {k}")
    levels = _exact_log(int(n), int(k)) if n >= k else None
    if levels is None:
        raise ConfigError(f"n={n} is not a power of k={k}")
    return levels


def bound_ratio(n: int, k: int) -> float:
    """Squared-loss multiplier ``4 (log_k n)^2 ((k-1)/k)^2``."""
    levels = _check_pair(n, k)
    return 4.0 * levels**2 * ((k - 1) / k) ** 2


def tradeoff_curve(n: int) -> list[tuple[int, float, float]]:
    """``(k, multiplier, regressors per example)`` for every power of two k <= n.

    ``log_k n`` is taken as a real number so k need not divide the exponent.
    """
    if not _is_pow2(int(n)):
        raise ConfigError(f"n must be a power of two >= 2, got {n}")
    rows, k = [], 2
    while k <= n:
        depth = math.log(n) / math.log(k)
        rows.append((k, 4.0 * depth**2 * ((k - 1) / k) ** 2, (k - 1) * depth))
        k *= 2
    return rows


def format_curve(rows) -> str:
    lines = ["k\tmultiplier\tregressors_per_example"]
    lines += [f"{k}\t{mult:.6f}\t{per:.6f}" for k, mult, per in rows]
    return "\n".join(lines) + "\n"


class KWayCheck(NamedTuple):
    lhs: float
    bound: float
    holds: bool
    clamped: bool


def check_kway_regret(true_dist, node_outputs, y: int, k: int) -> KWayCheck:
    """Composed error of the k-way estimate for slot ``y`` against
    ``bound_ratio(n, k) * eps^2``, eps^2 the mean squared regressor error on the path.

    ``node_outputs[level]`` holds the ``k - 1`` outputs of the path node at
    that level.  Node estimates are clamped to [0, 1] before multiplying;
    ``clamped`` reports whether that changed any of them.
    """
    P = np.asarray(true_dist, dtype=np.float64)
    n = P.size
    if np.any(P < 0) or not math.isclose(P.sum(), 1.0, abs_tol=1e-9):
        raise ConfigError("true distribution must be non-negative and sum to 1")
    levels = _check_pair(n, k)
    R = np.asarray(node_outputs, dtype=np.float64).reshape(levels, k - 1)
    if np.any((R < 0) | (R > 1)):
        raise ConfigError("regressor outputs must lie in [0, 1]")
    if not 0 <= y < n:
        raise ConfigError(f"slot {y} out of range")
    C = hadamard_code(k)
    q_total, sq_err, clamped = 1.0, 0.0, False
    lo, width = 0, n
    for level in range(levels):
        child_w = width // k
        c = (y - lo) // child_w
        masses = P[lo : lo + width].reshape(k, child_w).sum(axis=1)
        total = masses.sum()
        cond = masses / total if total > 0 else np.full(k, 1.0 / k)
        outputs = np.concatenate([[1.0], R[level]])
        raw = estimate_from_outputs(C, outputs, c)
        q = clamp01(raw)
        clamped |= q != raw
        q_total *= q
        sq_err += float(np.sum((R[level] - (C[1:] @ cond)) ** 2))
        lo += c * child_w
        width = child_w
    eps2 = sq_err / (levels * (k - 1))
    lhs = (q_total - P[y]) ** 2
    bound = bound_ratio(n, k) * eps2
    return KWayCheck(float(lhs), bound, bool(leq(lhs, bound)), clamped)
