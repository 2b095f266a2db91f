"""Synthetic label streams with a known conditional distribution.

Contexts play the role of web pages: each is a fixed bag of weighted words
drawn mostly from one topic, and labels (ads) belong to topics.  A
context's label distribution mixes its primary and secondary topic's label
distributions, optionally with a few context-specific favourites.

Each example may also carry one session token drawn uniformly from a small
vocabulary.  It carries no information about the label, but it splits
every context into several distinct feature vectors, so exact-match
counting sees sparse keys while a learner that generalises across them
does not.  Optionally each context is live only for a window of the
stream, so the tail holds pages that have barely been seen.

The support of P(x) P(y|x) is finite; :class:`GroundTruth` evaluates the
exact squared-loss regret ``E_(x,y)~P (P(y|x) - Q(y|x))**2`` of any model.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .data import (
    BIAS_INDEX,
    DEFAULT_HASH_SEED,
    ExampleBatch,
    SparseVector,
    check_bits,
    format_example,
    hash_feature,
    parse_example,
)
from .errors import ConfigError, ParseError

TRUTH_MAGIC = "# cptree-truth v1"
# topic: mixture model; onehot: one deterministic label per context;
# uniform: every label equally likely everywhere
DISTRIBUTIONS = ("topic", "onehot", "uniform")
SEGMENTS = 1000


@dataclass(frozen=True)
class SynthConfig:
    n_contexts: int = 1000
    n_labels: int = 10000
    n_examples: int = 100000
    bits: int = 10
    n_topics: int = 25
    vocab_per_topic: int = 40
    shared_vocab: int = 200
    words_per_context: int = 12
    label_zipf: float = 1.6
    context_zipf: float = 1.0
    secondary_weight: float = 0.1
    favourite_weight: float = 0.0
    n_favourites: int = 3
    session_tokens: int = 256
    session_value: float = 0.5
    lifetime: float = 0.0
    test_fraction: float = 0.1
    distribution: str = "topic"
    seed: int = 0
    hash_seed: int = DEFAULT_HASH_SEED

    def validate(self) -> "SynthConfig":
        check_bits(self.bits)
        for name in ("n_contexts", "n_labels", "n_topics", "words_per_context"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        for name in ("n_examples", "session_tokens", "n_favourites", "vocab_per_topic", "shared_vocab"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.distribution not in DISTRIBUTIONS:
            raise ConfigError(f"distribution must be one of {DISTRIBUTIONS}")
        if self.vocab_per_topic < 1 and self.shared_vocab < 1:
            raise ConfigError("contexts need at least one word to draw from")
        if not 0.0 <= self.test_fraction < 1.0:
            raise ConfigError("test_fraction must lie in [0, 1)")
        if not 0.0 <= self.lifetime <= 1.0:
            raise ConfigError("lifetime must lie in [0, 1]")
        for name in ("secondary_weight", "favourite_weight"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.secondary_weight + self.favourite_weight > 1.0:
            raise ConfigError("secondary_weight + favourite_weight must not exceed 1")
        if not (math.isfinite(self.session_value) and self.session_value != 0.0):
            raise ConfigError("session_value must be finite and non-zero")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


def label_name(i: int) -> str:
    return f"ad{i}"


def session_name(j: int) -> str:
    return f"u{j}"


class GroundTruth:
    """Finite-support P(x) P(y|x).

    ``contexts[c]`` is the base feature vector of context c.  When
    ``sessions`` is non-empty the observable vectors are the base vector
    plus one session feature, each session equally likely and independent
    of the label.
    """

    def __init__(
        self, contexts, features, weights, supports, probs, label_names,
        sessions=(), session_value: float = 0.5, bits: int | None = None,
        hash_seed: int = DEFAULT_HASH_SEED,
    ):
        self.contexts: list[SparseVector] = list(contexts)
        self.features: list[list[tuple[str, float]]] = list(features)
        self.weights = np.asarray(weights, dtype=np.float64)
        self.supports = [np.asarray(s, dtype=np.int64) for s in supports]
        self.probs = [np.asarray(p, dtype=np.float64) for p in probs]
        self.label_names = list(label_names)
        self.sessions = list(sessions)
        self.session_value = float(session_value)
        self.bits = bits
        self.hash_seed = int(hash_seed)
        if self.sessions and bits is None:
            raise ConfigError("session features need the hashing width")
        self._session_index = [hash_feature(s, bits, self.hash_seed) for s in self.sessions]
        self._variants: dict[tuple[int, int], SparseVector] = {}
        self._key_to_context: dict[int, int] | None = None
        self._label_ids = {y: i for i, y in enumerate(self.label_names)}
        self._cond = [dict(zip(s.tolist(), p.tolist())) for s, p in zip(self.supports, self.probs)]

    def __len__(self) -> int:
        return len(self.contexts)

    @property
    def n_sessions(self) -> int:
        return max(1, len(self.sessions))

    def variant(self, c: int, v: int) -> SparseVector:
        """Observable vector of context ``c`` in session ``v``."""
        if not self.sessions:
            return self.contexts[c]
        x = self._variants.get((c, v))
        if x is None:
            base = self.contexts[c]
            x = SparseVector.canonical(
                np.append(base.indices, self._session_index[v]), np.append(base.values, self.session_value)
            )
            self._variants[(c, v)] = x
        return x

    def variant_features(self, c: int, v: int) -> list[tuple[str, float]]:
        feats = self.features[c]
        return feats + [(self.sessions[v], self.session_value)] if self.sessions else feats

    def context_of(self, x: SparseVector) -> int:
        if self._key_to_context is None:
            self._key_to_context = {
                self.variant(c, v).key(): c for c in range(len(self)) for v in range(self.n_sessions)
            }
        c = self._key_to_context.get(x.key())
        if c is None:
            raise ConfigError("feature vector is not in the support of P(x)")
        return c

    def prob(self, x: SparseVector, y: str) -> float:
        """True P(y | x)."""
        lid = self._label_ids.get(y)
        if lid is None:
            return 0.0
        return self._cond[self.context_of(x)].get(lid, 0.0)

    __call__ = prob

    def pair_batch(self, sessions=None) -> ExampleBatch:
        """Every (context, session, supported label) triple, context-major."""
        sessions = range(self.n_sessions) if sessions is None else list(sessions)
        rows, labels = [], []
        for c, s in enumerate(self.supports):
            names = [self.label_names[i] for i in s.tolist()]
            for v in sessions:
                rows.append((self.variant(c, v), s.size))
                labels.extend(names)
        indices = np.concatenate([np.tile(x.indices, r) for x, r in rows])
        values = np.concatenate([np.tile(x.values, r) for x, r in rows])
        sizes = np.repeat([len(x) for x, _ in rows], [r for _, r in rows])
        indptr = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        return ExampleBatch(indptr, indices, values, labels)

    def _context_weights(self, weights) -> np.ndarray:
        w = self.weights if weights is None else np.asarray(weights, dtype=np.float64)
        if w.shape != self.weights.shape or np.any(w < 0) or w.sum() <= 0:
            raise ConfigError("context weights must be non-negative with a positive sum")
        return w / w.sum()

    def expected_regret(self, model, weights=None, sessions=None) -> float:
        """``sum_x P(x) sum_y P(y|x) (P(y|x) - Q(y|x))**2``.

        ``weights`` overrides the context marginal (e.g. with the context mix
        of a test split).  ``sessions`` restricts the average to a subset of
        session tokens; the default uses all of them and is exact.
        """
        ctx_w = self._context_weights(weights)
        sessions = list(range(self.n_sessions)) if sessions is None else list(sessions)
        batch = self.pair_batch(sessions)
        p = np.concatenate([np.tile(q, len(sessions)) for q in self.probs])
        w = np.concatenate([np.tile(ctx_w[c] * q, len(sessions)) for c, q in enumerate(self.probs)])
        w /= len(sessions)
        if hasattr(model, "score_and_learn"):
            q = model.score_and_learn(batch, learn=False)
        else:
            q = np.array([model.predict(ex.x, ex.y) for ex in batch])
        return float(np.sum(w * (p - q) ** 2))

    def best_observable_loss(self, weights=None) -> float:
        """Observable loss of predicting exactly P(y|x)."""
        ctx_w = self._context_weights(weights)
        return float(sum(w * np.sum(p * (1.0 - p) ** 2) for w, p in zip(ctx_w, self.probs)))

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(TRUTH_MAGIC + "\n")
            fh.write(f"# sessions {self.session_value:.17g} {' '.join(self.sessions)}".rstrip() + "\n")
            for c, (feats, s, p) in enumerate(zip(self.features, self.supports, self.probs)):
                feat_str = " ".join(f"{name}:{value:.17g}" for name, value in feats)
                dist = " ".join(f"{self.label_names[i]}:{q:.17g}" for i, q in zip(s.tolist(), p.tolist()))
                fh.write(f"{c}\t{self.weights[c]:.17g}\t{feat_str}\t{dist}\n")

    @classmethod
    def read(cls, path, bits: int, seed: int = DEFAULT_HASH_SEED) -> "GroundTruth":
        contexts, features, weights, supports, probs = [], [], [], [], []
        label_names: list[str] = []
        label_ids: dict[str, int] = {}
        with open(path, encoding="utf-8") as fh:
            first = fh.readline().rstrip("\n")
            if first != TRUTH_MAGIC:
                raise ParseError(f"not a truth file (header {first!r})", 1)
            second = fh.readline().rstrip("\n").split()
            if len(second) < 3 or second[:2] != ["#", "sessions"]:
                raise ParseError("missing session line", 2)
            session_value, sessions = float(second[2]), second[3:]
            for line_no, line in enumerate(fh, start=3):
                parts = line.rstrip("\n").split("\t")
                if len(parts) != 4:
                    raise ParseError("expected 4 tab-separated fields", line_no)
                _, weight, feat_str, dist = parts
                ex = parse_example("_ " + feat_str, bits, seed, line_no)
                contexts.append(ex.x)
                features.append([(n, float(v)) for n, v in (t.rsplit(":", 1) for t in feat_str.split())])
                weights.append(float(weight))
                s, p = [], []
                for tok in dist.split():
                    name, q = tok.rsplit(":", 1)
                    if name not in label_ids:
                        label_ids[name] = len(label_names)
                        label_names.append(name)
                    s.append(label_ids[name])
                    p.append(float(q))
                supports.append(s)
                probs.append(p)
        return cls(contexts, features, weights, supports, probs, label_names, sessions, session_value, bits, seed)


@dataclass
class SynthData:
    train: ExampleBatch
    test: ExampleBatch
    truth: GroundTruth
    train_contexts: np.ndarray
    test_contexts: np.ndarray
    train_sessions: np.ndarray
    test_sessions: np.ndarray

    def context_mix(self, split: str = "test") -> np.ndarray:
        ctx = self.test_contexts if split == "test" else self.train_contexts
        return np.bincount(ctx, minlength=len(self.truth)).astype(np.float64)


def _zipf_weights(n: int, s: float, rng) -> np.ndarray:
    w = 1.0 / np.arange(1, n + 1) ** s
    rng.shuffle(w)
    return w / w.sum()


def build_truth(cfg: SynthConfig) -> GroundTruth:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    T = min(cfg.n_topics, cfg.n_labels)
    topic_of_label = rng.permutation(np.arange(cfg.n_labels) % T)
    topic_labels = [np.flatnonzero(topic_of_label == t) for t in range(T)]
    topic_dists = [_zipf_weights(ls.size, cfg.label_zipf, rng) for ls in topic_labels]

    topic_words = [[f"t{t}w{j}" for j in range(cfg.vocab_per_topic)] for t in range(T)]
    shared_words = [f"s{j}" for j in range(cfg.shared_vocab)]
    n_primary = max(1, int(round(cfg.words_per_context * 0.6)))
    n_secondary = int(round(cfg.words_per_context * 0.2))
    n_shared = max(0, cfg.words_per_context - n_primary - n_secondary)

    def pick(pool, k):
        k = min(k, len(pool))
        return list(rng.choice(pool, size=k, replace=False)) if k else []

    contexts, features, supports, probs = [], [], [], []
    for _ in range(cfg.n_contexts):
        primary, secondary = rng.choice(T, size=2, replace=T < 2)
        words = pick(topic_words[primary], n_primary)
        words += pick(topic_words[secondary], n_secondary)
        words += pick(shared_words, n_shared)
        if not words:
            words = pick(shared_words, 1)
        raw = rng.uniform(0.5, 1.5, size=len(words))
        vals = raw / np.linalg.norm(raw)
        feats = sorted(zip(words, vals.tolist()))
        x = SparseVector.canonical(
            [BIAS_INDEX] + [hash_feature(w, cfg.bits, cfg.hash_seed) for w, _ in feats],
            [1.0] + [v for _, v in feats],
        )
        dist = np.zeros(cfg.n_labels)
        if cfg.distribution == "onehot":
            dist[rng.integers(cfg.n_labels)] = 1.0
        elif cfg.distribution == "uniform":
            dist[:] = 1.0
        else:
            _topic_mixture(dist, cfg, rng, primary, secondary, topic_labels, topic_dists)
        support = np.flatnonzero(dist > 0)
        p = dist[support]
        contexts.append(x)
        features.append(feats)
        supports.append(support)
        probs.append(p / p.sum())
    weights = _zipf_weights(cfg.n_contexts, cfg.context_zipf, rng)
    names = [label_name(i) for i in range(cfg.n_labels)]
    sessions = [session_name(j) for j in range(cfg.session_tokens)]
    return GroundTruth(
        contexts, features, weights, supports, probs, names, sessions, cfg.session_value, cfg.bits, cfg.hash_seed
    )


def _topic_mixture(dist, cfg, rng, primary, secondary, topic_labels, topic_dists):
    w_fav = cfg.favourite_weight if cfg.n_favourites > 0 else 0.0
    w_sec = cfg.secondary_weight
    dist[topic_labels[primary]] += (1.0 - w_sec - w_fav) * topic_dists[primary]
    dist[topic_labels[secondary]] += w_sec * topic_dists[secondary]
    if w_fav > 0:
        favs = rng.choice(topic_labels[primary], size=min(cfg.n_favourites, topic_labels[primary].size), replace=False)
        dist[favs] += w_fav * rng.dirichlet(np.ones(favs.size))


def _draw_contexts(cfg: SynthConfig, truth: GroundTruth, rng) -> np.ndarray:
    """Context per example.

    With ``lifetime > 0`` each context is live only during a window of that
    fraction of the stream, starting at a uniform random time; otherwise
    every context is live throughout.  Live contexts are drawn in
    proportion to their popularity.
    """
    n, m = cfg.n_examples, len(truth)
    ctx = np.empty(n, dtype=np.int64)
    if n == 0:
        return ctx
    if cfg.lifetime <= 0.0:
        return rng.choice(m, size=n, p=truth.weights)
    start = rng.uniform(-cfg.lifetime, 1.0, size=m)
    n_seg = min(n, SEGMENTS)
    bounds = np.linspace(0, n, n_seg + 1).astype(np.int64)
    for s in range(n_seg):
        t = (s + 0.5) / n_seg
        live = np.flatnonzero((start <= t) & (t < start + cfg.lifetime))
        if live.size == 0:
            live = np.array([int(np.argmin(np.abs(start + cfg.lifetime / 2 - t)))])
        w = truth.weights[live]
        ctx[bounds[s] : bounds[s + 1]] = live[rng.choice(live.size, size=bounds[s + 1] - bounds[s], p=w / w.sum())]
    return ctx


def _batch_for(truth: GroundTruth, ctx: np.ndarray, sess: np.ndarray, labels: np.ndarray) -> ExampleBatch:
    ns = truth.n_sessions
    uniq, inv = np.unique(ctx * ns + sess, return_inverse=True)
    vecs = [truth.variant(p // ns, p % ns) for p in uniq.tolist()]
    nnz = np.array([len(x) for x in vecs], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(nnz)]).astype(np.int64)
    all_idx = np.concatenate([x.indices for x in vecs]) if vecs else np.zeros(0, np.int64)
    all_val = np.concatenate([x.values for x in vecs]) if vecs else np.zeros(0)
    lens = nnz[inv]
    indptr = np.concatenate([[0], np.cumsum(lens)]).astype(np.int64)
    # row e gathers offsets[inv[e]] + arange(lens[e])
    pos = np.repeat(offsets[inv] - indptr[:-1], lens) + np.arange(indptr[-1])
    names = truth.label_names
    return ExampleBatch(indptr, all_idx[pos], all_val[pos], [names[i] for i in labels.tolist()])


def generate(cfg: SynthConfig) -> SynthData:
    """Sample a stream and split it in time order into train and test."""
    cfg.validate()
    truth = build_truth(cfg)
    rng = np.random.default_rng([cfg.seed, 1])
    ctx = _draw_contexts(cfg, truth, rng)
    sess = rng.integers(truth.n_sessions, size=cfg.n_examples)
    labels = np.empty(cfg.n_examples, dtype=np.int64)
    order = np.argsort(ctx, kind="stable")
    cuts = np.flatnonzero(np.diff(ctx[order])) + 1
    for pos in np.split(order, cuts):
        if pos.size:
            c = ctx[pos[0]]
            labels[pos] = rng.choice(truth.supports[c], size=pos.size, p=truth.probs[c])
    batch = _batch_for(truth, ctx, sess, labels)
    n_test = int(round(cfg.n_examples * cfg.test_fraction))
    n_train = cfg.n_examples - n_test
    return SynthData(
        batch.slice(0, n_train), batch.slice(n_train, cfg.n_examples), truth,
        ctx[:n_train], ctx[n_train:], sess[:n_train], sess[n_train:],
    )


def write_examples(path, labels, ctx, sess, truth: GroundTruth) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for y, c, v in zip(labels, ctx.tolist(), sess.tolist()):
            fh.write(format_example(y, truth.variant_features(c, v)) + "\n")


def synth_paths(prefix) -> dict[str, Path]:
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    return {part: prefix.with_name(f"{prefix.name}.{part}") for part in ("train", "test", "truth")}


def write_synth(cfg: SynthConfig, prefix) -> dict[str, Path]:
    """Write ``<prefix>.train``, ``<prefix>.test`` and ``<prefix>.truth``."""
    data = generate(cfg)
    paths = synth_paths(prefix)
    write_examples(paths["train"], data.train.labels, data.train_contexts, data.train_sessions, data.truth)
    write_examples(paths["test"], data.test.labels, data.test_contexts, data.test_sessions, data.truth)
    data.truth.write(paths["truth"])
    return paths


def describe(data: SynthData) -> dict:
    truth = data.truth
    mix = data.context_mix("test")
    return {
        "contexts": len(truth),
        "labels": len(truth.label_names),
        "sessions": len(truth.sessions),
        "train_examples": len(data.train),
        "test_examples": len(data.test),
        "mean_support": float(np.mean([s.size for s in truth.supports])),
        "best_observable_loss_test": truth.best_observable_loss(mix) if mix.sum() else math.nan,
    }
