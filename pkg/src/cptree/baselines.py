"""Comparison methods: one-against-all regression and empirical frequency tables."""

from __future__ import annotations

from collections import defaultdict

import numpy as np
from numba import njit

from .data import DEFAULT_HASH_SEED, ExampleBatch, SparseVector, check_label
from .errors import ConfigError
from .regressor import DEFAULT_DECAY, DEFAULT_ETA0, Arena, predict_row, reset_row, update_row


@njit(cache=True)
def _ova_stream(W, counts, n_rows, indptr, indices, values, labels, out, do_predict, do_learn, eta0, decay):
    updates = 0
    for e in range(labels.shape[0]):
        a = indptr[e]
        b = indptr[e + 1]
        idx = indices[a:b]
        val = values[a:b]
        y = labels[e]
        if do_predict:
            out[e] = predict_row(W, y, idx, val) if 0 <= y < n_rows[0] else 0.0
        if do_learn:
            if y >= n_rows[0]:
                # label ids arrive in first-seen order
                reset_row(W, counts, y)
                n_rows[0] = y + 1
            for r in range(n_rows[0]):
                update_row(W, counts, r, idx, val, 1.0 if r == y else 0.0, eta0, decay)
            updates += n_rows[0]
    return updates


class OvaModel:
    """One regressor per label seen; every example trains all of them."""

    def __init__(self, bits: int, eta0: float = DEFAULT_ETA0, decay: float = DEFAULT_DECAY):
        self.arena = Arena(bits, eta0, decay)
        self.labels: list[str] = []
        self._ids: dict[str, int] = {}
        self.regressor_updates = 0
        self.last_updates = 0

    @property
    def bits(self) -> int:
        return self.arena.bits

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, y: str) -> bool:
        return y in self._ids

    def _id(self, y: str, create: bool) -> int:
        i = self._ids.get(y)
        if i is None:
            if not create:
                return -1
            check_label(y)
            i = len(self.labels)
            self.labels.append(y)
            self._ids[y] = i
        return i

    def predict(self, x: SparseVector, y: str) -> float:
        i = self._ids.get(y)
        return 0.0 if i is None else self.arena.predict(i, x)

    def train(self, x: SparseVector, y: str) -> None:
        target = self._id(y, create=True)
        if target == self.arena.n_rows:
            self.arena.allocate()
        for r in range(self.arena.n_rows):
            self.arena.update(r, x, 1 if r == target else 0)
        self.last_updates = self.arena.n_rows
        self.regressor_updates += self.last_updates

    learn = train

    def score_and_learn(self, batch: ExampleBatch, learn: bool = True, predict: bool = True) -> np.ndarray:
        if batch.max_index() >= self.arena.dim:
            raise ConfigError(f"batch feature index exceeds 2**bits={self.arena.dim}")
        ids = np.fromiter((self._id(y, learn) for y in batch.labels), dtype=np.int64, count=len(batch))
        self.arena.reserve(len(self.labels))
        out = np.zeros(len(batch))
        n_rows = np.array([self.arena.n_rows], dtype=np.int64)
        a = self.arena
        updates = _ova_stream(
            a.W, a.counts, n_rows, batch.indptr, batch.indices, batch.values, ids, out,
            predict, learn, a.eta0, a.decay,
        )
        a.n_rows = int(n_rows[0])
        self.regressor_updates += int(updates)
        return out

    def fit(self, batch: ExampleBatch, passes: int = 1) -> "OvaModel":
        for _ in range(int(passes)):
            self.score_and_learn(batch, predict=False)
        return self

    def to_state(self):
        W, counts = self.arena.used()
        header = {
            "bits": self.bits, "eta0": self.arena.eta0, "decay": self.arena.decay,
            "labels": self.labels, "regressor_updates": self.regressor_updates,
        }
        return header, {"weights": W, "update_counts": counts}

    @classmethod
    def from_state(cls, header, arrays):
        model = cls(header["bits"], header["eta0"], header["decay"])
        for y in header["labels"]:
            model._id(y, create=True)
        model.arena.load_rows(arrays["weights"], arrays["update_counts"])
        model.regressor_updates = header["regressor_updates"]
        return model


def context_key(x: SparseVector, seed: int = DEFAULT_HASH_SEED) -> int:
    """64-bit hash of a canonical feature vector, standing in for the context identity."""
    return x.key(seed)


class TableModel:
    """Predicts the empirical frequency of ``y`` among examples with the same ``x``."""

    def __init__(self, seed: int = DEFAULT_HASH_SEED):
        self.seed = int(seed)
        self.counts: dict[tuple[int, str], int] = defaultdict(int)
        self.totals: dict[int, int] = defaultdict(int)

    def key(self, x: SparseVector) -> int:
        return context_key(x, self.seed)

    def predict(self, x: SparseVector, y: str) -> float:
        c = self.key(x)
        total = self.totals.get(c, 0)
        return self.counts.get((c, y), 0) / total if total else 0.0

    def train(self, x: SparseVector, y: str) -> None:
        c = self.key(x)
        self.counts[(c, y)] += 1
        self.totals[c] += 1

    learn = train

    def score_and_learn(self, batch: ExampleBatch, learn: bool = True, predict: bool = True) -> np.ndarray:
        out = np.zeros(len(batch))
        counts, totals = self.counts, self.totals
        for e, y in enumerate(batch.labels):
            c = self.key(batch.x(e))
            if predict:
                total = totals.get(c, 0)
                out[e] = counts.get((c, y), 0) / total if total else 0.0
            if learn:
                counts[(c, y)] += 1
                totals[c] += 1
        return out

    def fit(self, batch: ExampleBatch, passes: int = 1) -> "TableModel":
        for _ in range(int(passes)):
            self.score_and_learn(batch, predict=False)
        return self

    def distribution(self, x: SparseVector) -> dict[str, float]:
        c = self.key(x)
        total = self.totals.get(c, 0)
        if not total:
            return {}
        return {y: n / total for (key, y), n in self.counts.items() if key == c}

    def to_state(self):
        items = sorted(self.counts.items())
        labels = sorted({y for (_, y), _ in items})
        lid = {y: i for i, y in enumerate(labels)}
        arrays = {
            "keys": np.array([c for (c, _), _ in items], dtype=np.uint64),
            "label_ids": np.array([lid[y] for (_, y), _ in items], dtype=np.int64),
            "counts": np.array([n for _, n in items], dtype=np.int64),
        }
        return {"seed": self.seed, "labels": labels}, arrays

    @classmethod
    def from_state(cls, header, arrays):
        model = cls(header["seed"])
        labels = header["labels"]
        for c, i, n in zip(arrays["keys"].tolist(), arrays["label_ids"].tolist(), arrays["counts"].tolist()):
            model.counts[(c, labels[i])] += n
            model.totals[c] += n
        return model
