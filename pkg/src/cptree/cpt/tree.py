"""Conditional probability tree over an open-ended label set.

Each internal node's regressor estimates the probability that the label
lies in the node's right subtree, given that the label is below the node.
A label's probability is the product of the branch probabilities along its
root-to-leaf path.  Unseen labels are placed online by descending with the
``obj`` routing rule (or a fair coin for the random-tree variant) and
splitting the leaf that is reached.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import xxhash

from ..data import ExampleBatch, SparseVector, check_label
from ..errors import ConfigError, LabelNotFoundError, PreconditionError
from ..regressor import DEFAULT_DECAY, DEFAULT_ETA0, Arena, Regressor, check_learning_rate
from . import _kernels as K
from .bounds import check_alpha, kappa

GROWTH_RULES = ("obj", "random")


@dataclass(frozen=True)
class PathStep:
    node: int
    direction: int  # 1 = right child is next


@dataclass(frozen=True)
class DepthStats:
    max_depth: int
    total_leaf_depth: int
    nodes: list  # (node, L, R, N) for every internal node, preorder


def _grow(arr: np.ndarray, n: int, fill) -> np.ndarray:
    if n <= arr.shape[0]:
        return arr
    cap = max(arr.shape[0], 1)
    while cap < n:
        cap *= 2
    out = np.full(cap, fill, dtype=arr.dtype)
    out[: arr.shape[0]] = arr
    return out


class Tree:
    """Label tree with one regressor per node (internal nodes and leaves).

    ``growth`` selects how unseen labels are routed: ``"obj"`` uses the
    balance/prediction trade-off controlled by ``alpha`` (``alpha=1`` gives
    the balanced tree), ``"random"`` flips a seeded fair coin per node.
    Trees built by :meth:`from_nested` / :meth:`static` have a fixed
    structure; :meth:`learn` then skips labels that have no leaf.
    """

    def __init__(
        self,
        bits: int,
        alpha: float = 0.5,
        eta0: float = DEFAULT_ETA0,
        decay: float = DEFAULT_DECAY,
        growth: str = "obj",
        seed: int = 0,
        capacity: int = 16,
    ):
        if growth not in GROWTH_RULES:
            raise ConfigError(f"growth must be one of {GROWTH_RULES}, got {growth!r}")
        self.alpha = check_alpha(alpha)
        self.growth = growth
        self.seed = int(seed)
        self.static = False
        self.frozen = False
        self.check_balance = False
        self.arena = Arena(bits, eta0, decay, capacity)
        cap = self.arena.capacity
        self.left = np.full(cap, -1, dtype=np.int64)
        self.right = np.full(cap, -1, dtype=np.int64)
        self.parent = np.full(cap, -1, dtype=np.int64)
        self.lcount = np.zeros(cap, dtype=np.int64)
        self.rcount = np.zeros(cap, dtype=np.int64)
        self.depth = np.zeros(cap, dtype=np.int64)
        self.node_label = np.full(cap, -1, dtype=np.int64)
        self.label_leaf = np.full(max(capacity // 2, 1), -1, dtype=np.int64)
        self.meta = np.zeros(K.META_SIZE, dtype=np.int64)
        self.rng = np.array([self.seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
        self.labels: list[str] = []
        self._label_ids: dict[str, int] = {}

    # -- bookkeeping -------------------------------------------------------

    @property
    def bits(self) -> int:
        return self.arena.bits

    @property
    def n_nodes(self) -> int:
        return int(self.meta[K.N_NODES])

    @property
    def n_labels(self) -> int:
        """Number of labels that own a leaf."""
        n = self.n_nodes
        return (n + 1) // 2 if n else 0

    @property
    def disagreements(self) -> int:
        return int(self.meta[K.DISAGREEMENTS])

    @property
    def max_depth(self) -> int:
        return int(self.meta[K.MAX_DEPTH])

    @property
    def total_leaf_depth(self) -> int:
        return int(self.meta[K.TOTAL_DEPTH])

    @property
    def regressor_updates(self) -> int:
        return int(self.meta[K.UPDATES])

    @property
    def max_updates_per_example(self) -> int:
        return int(self.meta[K.MAX_TOUCH])

    @property
    def skipped(self) -> int:
        return int(self.meta[K.SKIPPED])

    @property
    def balance_violations(self) -> tuple[int, int]:
        """(strict, closed) counts of ``L,R < / <= kappa*N + 1 - kappa`` failures."""
        return int(self.meta[K.STRICT_VIOLATIONS]), int(self.meta[K.CLOSED_VIOLATIONS])

    @property
    def first_violation(self) -> dict | None:
        if not self.meta[K.STRICT_VIOLATIONS]:
            return None
        return {
            "insertion": int(self.meta[K.FIRST_VIOLATION_AT]),
            "node": int(self.meta[K.FIRST_VIOLATION_NODE]),
            "L": int(self.meta[K.FIRST_VIOLATION_L]),
            "R": int(self.meta[K.FIRST_VIOLATION_R]),
        }

    def _reserve_nodes(self, n: int) -> None:
        self.arena.reserve(n)
        cap = self.arena.capacity
        self.left = _grow(self.left, cap, -1)
        self.right = _grow(self.right, cap, -1)
        self.parent = _grow(self.parent, cap, -1)
        self.lcount = _grow(self.lcount, cap, 0)
        self.rcount = _grow(self.rcount, cap, 0)
        self.depth = _grow(self.depth, cap, 0)
        self.node_label = _grow(self.node_label, cap, -1)

    def _label_id(self, y: str, create: bool = False) -> int:
        lid = self._label_ids.get(y)
        if lid is None:
            if not create:
                return -1
            check_label(y)
            lid = len(self.labels)
            self.labels.append(y)
            self._label_ids[y] = lid
            self.label_leaf = _grow(self.label_leaf, lid + 1, -1)
        return lid

    def _label_ids_for(self, labels: Sequence[str], create: bool) -> np.ndarray:
        return np.fromiter(
            (self._label_id(y, create) for y in labels), dtype=np.int64, count=len(labels)
        )

    def leaf_of(self, y: str) -> int:
        lid = self._label_id(y)
        leaf = self.label_leaf[lid] if lid >= 0 else -1
        if leaf < 0:
            raise LabelNotFoundError(f"label {y!r} is not in the tree")
        return int(leaf)

    def __contains__(self, y: str) -> bool:
        lid = self._label_id(y)
        return lid >= 0 and self.label_leaf[lid] >= 0

    def is_leaf(self, node: int) -> bool:
        return self.left[node] < 0

    def label_at(self, node: int) -> str | None:
        lid = self.node_label[node]
        return self.labels[lid] if lid >= 0 else None

    def regressor(self, node: int) -> Regressor:
        if not 0 <= node < self.n_nodes:
            raise LookupError(f"no node {node}")
        return Regressor(self.arena, node)

    def freeze(self) -> "Tree":
        """Disallow further training; prediction stays available."""
        self.frozen = True
        return self

    def _check_trainable(self):
        if self.frozen:
            raise PreconditionError("tree is frozen")

    def _check_x(self, x: SparseVector):
        if x.indices.size and x.indices[-1] >= self.arena.dim:
            raise ConfigError(
                f"feature index {int(x.indices[-1])} exceeds 2**bits={self.arena.dim}"
            )
        return x.indices, x.values

    @property
    def _check_kappa(self) -> float:
        if self.check_balance and self.growth == "obj" and not self.static:
            return kappa(self.alpha)
        return 0.0

    # -- core operations ----------------------------------------------------

    def path(self, y: str) -> list[PathStep]:
        """Internal nodes from the root down to ``y``'s leaf, with directions."""
        node = self.leaf_of(y)
        steps = []
        while self.parent[node] >= 0:
            p = int(self.parent[node])
            steps.append(PathStep(p, 1 if self.right[p] == node else 0))
            node = p
        steps.reverse()
        return steps

    def predict_q(self, x: SparseVector, y: str) -> float:
        """Estimated P(y | x); 0 for a label without a leaf."""
        lid = self._label_id(y)
        if lid < 0 or self.label_leaf[lid] < 0:
            return 0.0
        idx, val = self._check_x(x)
        return K.predict_leaf(self.right, self.parent, self.arena.W, self.label_leaf[lid], idx, val)

    predict = predict_q

    def train_seen(self, x: SparseVector, y: str) -> None:
        """Train every path regressor toward ``y``'s side, and ``y``'s leaf toward 0."""
        self._check_trainable()
        leaf = self.leaf_of(y)
        idx, val = self._check_x(x)
        a = self.arena
        K.train_leaf(self.right, self.parent, a.W, a.counts, self.meta, leaf, idx, val, a.eta0, a.decay)

    def insert_new(self, x: SparseVector, y: str) -> int:
        """Route an unseen label down the tree and split the leaf reached."""
        self._check_trainable()
        if y in self:
            raise PreconditionError(f"label {y!r} is already in the tree")
        idx, val = self._check_x(x)
        lid = self._label_id(y, create=True)
        self._reserve_nodes(self.n_nodes + 2)
        a = self.arena
        leaf = K.insert_label(
            self.left, self.right, self.parent, self.lcount, self.rcount, self.depth,
            self.node_label, self.label_leaf, a.W, a.counts, self.meta, self.rng,
            lid, idx, val, self.alpha, self.growth == "random", a.eta0, a.decay,
            self._check_kappa,
        )
        a.n_rows = self.n_nodes
        return int(leaf)

    def learn(self, x: SparseVector, y: str) -> None:
        if y in self:
            self.train_seen(x, y)
        elif self.static:
            self.meta[K.SKIPPED] += 1
        else:
            self.insert_new(x, y)

    def batch_train(self, batch: ExampleBatch, passes: int = 1) -> None:
        """Train a fixed tree on a dataset whose labels all have leaves."""
        missing = [y for y in set(batch.labels) if y not in self]
        if missing:
            raise LabelNotFoundError(f"labels not in the tree: {sorted(missing)[:5]}")
        for _ in range(int(passes)):
            self.score_and_learn(batch, predict=False)

    def fit(self, batch: ExampleBatch, passes: int = 1) -> "Tree":
        for _ in range(int(passes)):
            self.score_and_learn(batch, predict=False)
        return self

    def score_and_learn(
        self, batch: ExampleBatch, learn: bool = True, predict: bool = True
    ) -> np.ndarray:
        """Q(y|x) for each example, each computed before training on it."""
        if learn:
            self._check_trainable()
        if batch.max_index() >= self.arena.dim:
            raise ConfigError(f"batch feature index exceeds 2**bits={self.arena.dim}")
        out = np.zeros(len(batch), dtype=np.float64)
        a = self.arena
        if not learn:
            labels = self._label_ids_for(batch.labels, create=False)
            K.predict_pairs(
                self.right, self.parent, a.W, self.label_leaf,
                batch.indptr, batch.indices, batch.values, labels, out,
            )
            return out
        before = len(self.labels)
        labels = self._label_ids_for(batch.labels, create=True)
        new_labels = len(self.labels) - before
        if not self.static:
            unplaced = int(np.count_nonzero(self.label_leaf[: len(self.labels)] < 0))
            self._reserve_nodes(self.n_nodes + 2 * max(unplaced, new_labels) + 1)
        K.stream(
            self.left, self.right, self.parent, self.lcount, self.rcount, self.depth,
            self.node_label, self.label_leaf, a.W, a.counts, self.meta, self.rng,
            batch.indptr, batch.indices, batch.values, labels, out,
            predict, True, not self.static, self.alpha, self.growth == "random",
            a.eta0, a.decay, self._check_kappa,
        )
        a.n_rows = self.n_nodes
        return out

    def predict_batch(self, batch: ExampleBatch) -> np.ndarray:
        return self.score_and_learn(batch, learn=False)

    # -- structure ---------------------------------------------------------

    def depth_stats(self) -> DepthStats:
        """Depths and leaf counts measured by walking the child links."""
        n = self.n_nodes
        if n == 0:
            return DepthStats(0, 0, [])
        left, right = self.left[:n].tolist(), self.right[:n].tolist()
        order, depth = [], {0: 0}
        stack = [0]
        while stack:
            v = stack.pop()
            order.append(v)
            if left[v] >= 0:
                for c in (right[v], left[v]):
                    depth[c] = depth[v] + 1
                    stack.append(c)
        leaves = {}
        max_depth = total = 0
        for v in reversed(order):
            if left[v] < 0:
                leaves[v] = 1
                max_depth = max(max_depth, depth[v])
                total += depth[v]
            else:
                leaves[v] = leaves[left[v]] + leaves[right[v]]
        nodes = [
            (v, leaves[left[v]], leaves[right[v]], leaves[v]) for v in order if left[v] >= 0
        ]
        return DepthStats(max_depth, total, nodes)

    def leaf_depths(self) -> np.ndarray:
        n = self.n_nodes
        return self.depth[:n][self.left[:n] < 0]

    def structure_signature(self) -> int:
        n = self.n_nodes
        h = xxhash.xxh64()
        for arr in (self.left, self.right, self.lcount, self.rcount, self.node_label):
            h.update(arr[:n].tobytes())
        return h.intdigest()

    def distribution(self, x: SparseVector) -> dict[str, float]:
        """Q(.|x) over all placed labels, by one top-down pass."""
        idx, val = self._check_x(x)
        if self.n_nodes == 0:
            return {}
        out = {}
        stack = [(0, 1.0)]
        W = self.arena.W
        while stack:
            v, q = stack.pop()
            if self.left[v] < 0:
                out[self.labels[self.node_label[v]]] = q
            else:
                f = K.predict_row(W, v, idx, val)
                stack.append((int(self.left[v]), q * (1.0 - f)))
                stack.append((int(self.right[v]), q * f))
        return out

    # -- fixed structures --------------------------------------------------

    def _new_node(self, parent: int, is_right: bool, label: str | None) -> int:
        v = self.n_nodes
        self._reserve_nodes(v + 1)
        self.arena.allocate()
        self.parent[v] = parent
        if parent >= 0:
            if is_right:
                self.right[parent] = v
            else:
                self.left[parent] = v
            self.depth[v] = self.depth[parent] + 1
        if label is not None:
            lid = self._label_id(label, create=True)
            if self.label_leaf[lid] >= 0:
                raise ConfigError(f"label {label!r} appears twice in the tree")
            self.node_label[v] = lid
            self.label_leaf[lid] = v
        self.meta[K.N_NODES] = v + 1
        return v

    def _finish_static(self) -> "Tree":
        n = self.n_nodes
        under = np.ones(n, dtype=np.int64)
        for v in range(n - 1, -1, -1):  # preorder ids: children after parents
            if self.left[v] >= 0:
                under[v] = under[self.left[v]] + under[self.right[v]]
                self.lcount[v] = under[self.left[v]]
                self.rcount[v] = under[self.right[v]]
        depths = self.leaf_depths()
        self.meta[K.MAX_DEPTH] = int(depths.max()) if depths.size else 0
        self.meta[K.TOTAL_DEPTH] = int(depths.sum())
        self.static = True
        return self

    @classmethod
    def from_nested(cls, layout, bits: int, **kwargs) -> "Tree":
        """Fixed tree from nested pairs, e.g. ``("a", ("b", "c"))``."""
        tree = cls(bits, **kwargs)
        stack = [(layout, -1, False)]
        while stack:
            item, parent, is_right = stack.pop()
            if isinstance(item, str):
                tree._new_node(parent, is_right, item)
            elif isinstance(item, (tuple, list)) and len(item) == 2:
                v = tree._new_node(parent, is_right, None)
                stack.append((item[1], v, True))
                stack.append((item[0], v, False))
            else:
                raise ConfigError(f"bad tree layout element {item!r}")
        return tree._finish_static()

    @classmethod
    def static(
        cls, labels: Iterable[str], bits: int, shape: str = "balanced", seed: int = 0, **kwargs
    ) -> "Tree":
        """Fixed tree over ``labels`` (in order), balanced or with random splits."""
        labels = list(labels)
        if not labels:
            raise ConfigError("a static tree needs at least one label")
        if shape not in ("balanced", "random"):
            raise ConfigError(f"unknown shape {shape!r}")
        rng = np.random.default_rng(seed)
        tree = cls(bits, seed=seed, **kwargs)
        stack = [(0, len(labels), -1, False)]
        while stack:
            lo, hi, parent, is_right = stack.pop()
            if hi - lo == 1:
                tree._new_node(parent, is_right, labels[lo])
                continue
            v = tree._new_node(parent, is_right, None)
            if shape == "balanced":
                mid = lo + (hi - lo + 1) // 2
            else:
                mid = int(rng.integers(lo + 1, hi))
            stack.append((mid, hi, v, True))
            stack.append((lo, mid, v, False))
        return tree._finish_static()

    # -- persistence -------------------------------------------------------

    def to_state(self) -> tuple[dict, dict]:
        n = self.n_nodes
        W, counts = self.arena.used()
        header = {
            "alpha": self.alpha,
            "growth": self.growth,
            "static": self.static,
            "seed": self.seed,
            "bits": self.bits,
            "eta0": self.arena.eta0,
            "decay": self.arena.decay,
            "labels": self.labels,
        }
        arrays = {
            "left": self.left[:n], "right": self.right[:n], "parent": self.parent[:n],
            "lcount": self.lcount[:n], "rcount": self.rcount[:n], "depth": self.depth[:n],
            "node_label": self.node_label[:n],
            "label_leaf": self.label_leaf[: len(self.labels)],
            "meta": self.meta, "rng": self.rng, "weights": W, "update_counts": counts,
        }
        return header, arrays

    @classmethod
    def from_state(cls, header: dict, arrays: dict) -> "Tree":
        tree = cls(
            header["bits"], alpha=header["alpha"], eta0=header["eta0"],
            decay=header["decay"], growth=header["growth"], seed=header["seed"],
        )
        tree.static = bool(header["static"])
        n = int(arrays["meta"][K.N_NODES])
        tree._reserve_nodes(max(n, 1))
        for name in ("left", "right", "parent", "lcount", "rcount", "depth", "node_label"):
            getattr(tree, name)[:n] = arrays[name]
        tree.arena.load_rows(arrays["weights"], arrays["update_counts"])
        tree._reserve_nodes(max(n, 1))
        for y in header["labels"]:
            tree._label_id(y, create=True)
        tree.label_leaf[: len(tree.labels)] = arrays["label_leaf"]
        tree.meta[:] = arrays["meta"]
        tree.rng[:] = arrays["rng"]
        return tree
