"""Probabilistic error-correcting output codes over Hadamard codes.

Row ``i`` of the code defines the label subset ``{y : C[i, y] = 1}`` and a
regressor trained to predict membership of the true label in it.  Row 0 is
all ones; it is never trained and contributes the constant 1.  The
estimate for the label in column ``y`` is

    2 * mean_i [C[i, y] r_i(x) + (1 - C[i, y]) (1 - r_i(x))] - 1
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .cpt.bounds import leq
from .data import SparseVector, check_label
from .errors import CapacityError, ConfigError, LabelNotFoundError
from .regressor import DEFAULT_DECAY, DEFAULT_ETA0, Arena


def hadamard_code(size: int) -> np.ndarray:
    """``C_2 = [[1,1],[1,0]]`` doubled by ``[[C, C], [C, 1-C]]`` up to ``size``."""
    if size < 2 or size & (size - 1):
        raise ConfigError(f"code size must be a power of two >= 2, got {size}")
    C = np.array([[1, 1], [1, 0]], dtype=np.int8)
    while C.shape[0] < size:
        C = np.block([[C, C], [C, 1 - C]]).astype(np.int8)
    return C


@dataclass(frozen=True, eq=False)
class CodeMatrix:
    t: int
    matrix: np.ndarray

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def subset(self, row: int) -> np.ndarray:
        return np.flatnonzero(self.matrix[row])


def build_code(n_labels: int) -> CodeMatrix:
    """Smallest Hadamard code with at least ``n_labels`` columns."""
    if n_labels < 2:
        raise ConfigError(f"need at least two labels, got {n_labels}")
    t = max(1, math.ceil(math.log2(n_labels)))
    return CodeMatrix(t, hadamard_code(1 << t))


def estimate_from_outputs(C: np.ndarray, outputs: np.ndarray, col: int) -> float:
    """Raw estimate for column ``col``; ``outputs[0]`` is overridden by 1."""
    r = np.array(outputs, dtype=np.float64)
    r[0] = 1.0
    c = C[:, col]
    return 2.0 * float(np.mean(np.where(c == 1, r, 1.0 - r))) - 1.0


def clamp01(v: float) -> float:
    return min(1.0, max(0.0, v))


class PecocModel:
    """Flat PECOC with one regressor per non-trivial code row.

    Labels take columns in order of first appearance; capacity is fixed at
    the code size.
    """

    def __init__(
        self,
        n_labels: int,
        bits: int,
        eta0: float = DEFAULT_ETA0,
        decay: float = DEFAULT_DECAY,
        labels: Sequence[str] = (),
    ):
        self.code = build_code(n_labels)
        self.n_labels = int(n_labels)
        size = self.code.size
        self.arena = Arena(bits, eta0, decay, capacity=size - 1)
        for _ in range(size - 1):
            self.arena.allocate()
        self._rows = np.arange(size - 1, dtype=np.int64)
        self.labels: list[str] = []
        self._columns: dict[str, int] = {}
        self.regressor_updates = 0
        for y in labels:
            self.column(y, assign=True)

    @property
    def n_slots(self) -> int:
        return self.code.size

    @property
    def bits(self) -> int:
        return self.arena.bits

    def column(self, y: str, assign: bool = False) -> int:
        col = self._columns.get(y)
        if col is None:
            if not assign:
                raise LabelNotFoundError(f"label {y!r} has no code column")
            check_label(y)
            if len(self.labels) >= self.n_slots:
                raise CapacityError(f"all {self.n_slots} code columns are taken")
            col = len(self.labels)
            self.labels.append(y)
            self._columns[y] = col
        return col

    def __contains__(self, y: str) -> bool:
        return y in self._columns

    def outputs(self, x: SparseVector) -> np.ndarray:
        """Regressor outputs per code row, with the trivial row fixed at 1."""
        out = np.empty(self.n_slots)
        out[0] = 1.0
        out[1:] = self.arena.predict_many(self._rows, x)
        return out

    def train_column(self, x: SparseVector, col: int) -> None:
        C = self.code.matrix
        for i in range(1, self.n_slots):
            self.arena.update(i - 1, x, int(C[i, col]))
        self.regressor_updates += self.n_slots - 1

    def estimate_column(self, x: SparseVector, col: int) -> float:
        return estimate_from_outputs(self.code.matrix, self.outputs(x), col)

    def train(self, x: SparseVector, y: str) -> None:
        self.train_column(x, self.column(y, assign=True))

    def estimate(self, x: SparseVector, y: str) -> float:
        """Raw estimate; may leave [0, 1] when the regressors err."""
        return self.estimate_column(x, self.column(y))

    def predict(self, x: SparseVector, y: str) -> float:
        """Estimate clamped to [0, 1]; 0 for labels without a column."""
        col = self._columns.get(y)
        if col is None:
            return 0.0
        return clamp01(self.estimate_column(x, col))

    def learn(self, x: SparseVector, y: str) -> None:
        """Train, silently skipping labels that no longer fit."""
        if y in self._columns or len(self.labels) < self.n_slots:
            self.train(x, y)

    def to_state(self):
        W, counts = self.arena.used()
        header = {
            "n_labels": self.n_labels, "bits": self.bits, "eta0": self.arena.eta0,
            "decay": self.arena.decay, "labels": self.labels,
            "regressor_updates": self.regressor_updates,
        }
        return header, {"weights": W, "update_counts": counts}

    @classmethod
    def from_state(cls, header, arrays):
        model = cls(header["n_labels"], header["bits"], header["eta0"], header["decay"], header["labels"])
        model.arena.load_rows(arrays["weights"], arrays["update_counts"])
        model.regressor_updates = header["regressor_updates"]
        return model


class RegretCheck(NamedTuple):
    lhs: float
    bound: float
    holds: bool


def _check_dist(true_dist) -> np.ndarray:
    P = np.asarray(true_dist, dtype=np.float64)
    if P.ndim != 1 or np.any(P < 0) or not math.isclose(P.sum(), 1.0, abs_tol=1e-9):
        raise ConfigError("true distribution must be non-negative and sum to 1")
    return P


def _full_outputs(outputs, n: int) -> np.ndarray:
    r = np.asarray(outputs, dtype=np.float64).ravel()
    if r.size == n - 1:
        r = np.concatenate([[1.0], r])
    if r.size != n:
        raise ConfigError(f"expected {n - 1} or {n} regressor outputs, got {r.size}")
    if np.any((r < 0) | (r > 1)):
        raise ConfigError("regressor outputs must lie in [0, 1]")
    r = r.copy()
    r[0] = 1.0
    return r


def check_pecoc_regret(true_dist, outputs, y: int) -> RegretCheck:
    """Squared error of the estimate for column ``y`` against
    ``4 ((n-1)/n)^2 * mean over non-trivial rows of (r_i - P(y in Y_i | x))^2``."""
    P = _check_dist(true_dist)
    n = P.size
    code = build_code(n).matrix
    if code.shape[0] != n:
        raise ConfigError("distribution length must be a power of two")
    r = _full_outputs(outputs, n)
    lhs = (estimate_from_outputs(code, r, y) - P[y]) ** 2
    subset_probs = code @ P
    err = r[1:] - subset_probs[1:]
    bound = 4.0 * ((n - 1) / n) ** 2 * float(np.mean(err**2)) if n > 1 else 0.0
    return RegretCheck(float(lhs), bound, bool(leq(lhs, bound)))


def pecoc_regret_batch(C: np.ndarray, P: np.ndarray, R: np.ndarray, y: np.ndarray):
    """Vectorised regret check; rows of ``P``/``R`` are instances."""
    n = C.shape[0]
    R = R.copy()
    R[:, 0] = 1.0
    cols = C[:, y].T  # (m, n): C[i, y_m]
    est = 2.0 * np.mean(np.where(cols == 1, R, 1.0 - R), axis=1) - 1.0
    lhs = (est - P[np.arange(P.shape[0]), y]) ** 2
    err = R[:, 1:] - P @ C[1:].T
    bound = 4.0 * ((n - 1) / n) ** 2 * np.mean(err**2, axis=1)
    return lhs, bound, leq(lhs, bound)
