"""Online linear regressors with outputs clamped to [0, 1].

Every regressor is one row of an :class:`Arena`, a dense 2-D weight table
whose rows are ``2**bits`` wide.  A row's offset in the table is
``row * 2**bits``; millions of rows are only affordable with a small
``bits``, so pick the hash width with ``rows * 2**bits * 8`` bytes in mind.

Prediction is ``clamp(w . x, 0, 1)``.  Fresh rows hold zero feature weights
and a bias weight of 0.5, so an untrained regressor outputs 0.5 for any
input carrying the bias entry.  An update on ``(x, target)`` is

    w <- w + eta_t * (target - predict(x)) * x,   eta_t = eta0 / (1 + decay * t)

with ``t`` the row's update count so far.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .data import BIAS_INDEX, SparseVector, check_bits
from .errors import ConfigError

BIAS_INIT = 0.5
DEFAULT_ETA0 = 0.1
DEFAULT_DECAY = 0.0


@njit(cache=True)
def raw_score(W, row, idx, val):
    s = 0.0
    for k in range(idx.shape[0]):
        s += W[row, idx[k]] * val[k]
    return s


@njit(cache=True)
def predict_row(W, row, idx, val):
    s = raw_score(W, row, idx, val)
    if s < 0.0:
        return 0.0
    if s > 1.0:
        return 1.0
    return s


@njit(cache=True)
def update_row(W, counts, row, idx, val, target, eta0, decay):
    p = predict_row(W, row, idx, val)
    eta = eta0 / (1.0 + decay * counts[row])
    g = eta * (target - p)
    if g != 0.0:
        for k in range(idx.shape[0]):
            W[row, idx[k]] += g * val[k]
    counts[row] += 1


@njit(cache=True)
def reset_row(W, counts, row):
    W[row, :] = 0.0
    W[row, 0] = BIAS_INIT
    counts[row] = 0


@njit(cache=True)
def predict_rows(W, rows, idx, val, out):
    for r in range(rows.shape[0]):
        out[r] = predict_row(W, rows[r], idx, val)


def check_learning_rate(eta0: float, decay: float) -> tuple[float, float]:
    eta0, decay = float(eta0), float(decay)
    if not (eta0 > 0 and np.isfinite(eta0)):
        raise ConfigError(f"eta0 must be a positive finite number, got {eta0}")
    if not (decay >= 0 and np.isfinite(decay)):
        raise ConfigError(f"decay must be non-negative, got {decay}")
    return eta0, decay


def _check_target(target) -> float:
    if target not in (0, 1):
        raise ConfigError(f"target must be 0 or 1, got {target!r}")
    return float(target)


class Arena:
    """Growable table of regressor rows sharing one learning-rate config."""

    def __init__(
        self,
        bits: int,
        eta0: float = DEFAULT_ETA0,
        decay: float = DEFAULT_DECAY,
        capacity: int = 8,
    ):
        self.bits = check_bits(bits)
        self.eta0, self.decay = check_learning_rate(eta0, decay)
        self.dim = 1 << self.bits
        capacity = max(1, int(capacity))
        self.W = np.zeros((capacity, self.dim), dtype=np.float64)
        self.counts = np.zeros(capacity, dtype=np.int64)
        self.n_rows = 0

    def __len__(self) -> int:
        return self.n_rows

    @property
    def capacity(self) -> int:
        return self.W.shape[0]

    def reserve(self, n: int) -> None:
        """Make room for at least ``n`` rows in total."""
        if n <= self.capacity:
            return
        cap = self.capacity
        while cap < n:
            cap *= 2
        W = np.zeros((cap, self.dim), dtype=np.float64)
        W[: self.n_rows] = self.W[: self.n_rows]
        counts = np.zeros(cap, dtype=np.int64)
        counts[: self.n_rows] = self.counts[: self.n_rows]
        self.W, self.counts = W, counts

    def allocate(self) -> int:
        self.reserve(self.n_rows + 1)
        row = self.n_rows
        reset_row(self.W, self.counts, row)
        self.n_rows += 1
        return row

    def clone(self, row: int) -> int:
        new = self.allocate()
        self.W[new] = self.W[row]
        self.counts[new] = self.counts[row]
        return new

    def _xy(self, x: SparseVector):
        if x.indices.size and x.indices[-1] >= self.dim:
            raise ConfigError(
                f"feature index {int(x.indices[-1])} exceeds arena width {self.dim}"
            )
        return x.indices, x.values

    def predict(self, row: int, x: SparseVector) -> float:
        idx, val = self._xy(x)
        return predict_row(self.W, row, idx, val)

    def raw(self, row: int, x: SparseVector) -> float:
        idx, val = self._xy(x)
        return raw_score(self.W, row, idx, val)

    def update(self, row: int, x: SparseVector, target) -> None:
        idx, val = self._xy(x)
        update_row(self.W, self.counts, row, idx, val, _check_target(target), self.eta0, self.decay)

    def predict_many(self, rows, x: SparseVector) -> np.ndarray:
        idx, val = self._xy(x)
        rows = np.ascontiguousarray(rows, dtype=np.int64)
        out = np.empty(rows.size, dtype=np.float64)
        predict_rows(self.W, rows, idx, val, out)
        return out

    def learning_rate(self, row: int) -> float:
        return self.eta0 / (1.0 + self.decay * self.counts[row])

    def used(self):
        """Allocated weight rows and update counts (views)."""
        return self.W[: self.n_rows], self.counts[: self.n_rows]

    def load_rows(self, W: np.ndarray, counts: np.ndarray) -> None:
        W = np.asarray(W, dtype=np.float64)
        if W.ndim != 2 or W.shape[1] != self.dim or counts.shape != (W.shape[0],):
            raise ConfigError("weight block does not match the arena shape")
        self.n_rows = 0
        self.reserve(max(1, W.shape[0]))
        self.W[: W.shape[0]] = W
        self.counts[: W.shape[0]] = counts
        self.n_rows = W.shape[0]


class Regressor:
    """Handle on one arena row, usable as a standalone binary regressor."""

    def __init__(self, arena: Arena, row: int):
        self.arena = arena
        self.row = row

    @classmethod
    def fresh(cls, bits: int, eta0: float = DEFAULT_ETA0, decay: float = DEFAULT_DECAY):
        arena = Arena(bits, eta0, decay, capacity=1)
        return cls(arena, arena.allocate())

    @property
    def weights(self) -> np.ndarray:
        return self.arena.W[self.row]

    @property
    def bias(self) -> float:
        return float(self.arena.W[self.row, BIAS_INDEX])

    @property
    def update_count(self) -> int:
        return int(self.arena.counts[self.row])

    @property
    def learning_rate(self) -> float:
        return self.arena.learning_rate(self.row)

    def predict(self, x: SparseVector) -> float:
        return self.arena.predict(self.row, x)

    def raw(self, x: SparseVector) -> float:
        return self.arena.raw(self.row, x)

    def update(self, x: SparseVector, target) -> "Regressor":
        self.arena.update(self.row, x, target)
        return self
