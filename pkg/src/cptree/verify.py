"""Randomised checks of the error and depth guarantees.

Each suite draws instances from a seeded generator and counts violations.
The guarantees are proved bounds, so any violation points at an implementation
bug (or at a guarantee stated more tightly than its proof supports; see
``depth_suite``).
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .cpecoc import check_kway_regret
from .cpt import Tree
from .cpt.bounds import depth_bound, estimate_bounds_batch, kappa, leq, total_depth_bound
from .data import BIAS_INDEX, ExampleBatch
from .errors import ConfigError
from .pecoc import hadamard_code, pecoc_regret_batch

MAX_PATH = 20


@dataclass
class SuiteResult:
    name: str
    trials: int
    violations: int
    worst_ratio: float = 0.0
    elapsed: float = 0.0
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["passed"] = self.passed
        return rec


def _vacuous(name: str) -> SuiteResult:
    warnings.warn(f"{name}: zero trials requested, nothing was checked", stacklevel=3)
    return SuiteResult(name, 0, 0, details={"vacuous": True})


def _ratio(lhs, bound) -> float:
    lhs, bound = np.asarray(lhs, float), np.asarray(bound, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(bound > 0, lhs / bound, np.where(lhs > 0, np.inf, 0.0))
    return float(r.max()) if r.size else 0.0


def _unit_pairs(rng, m: int, d: int):
    """True conditionals and estimates with a mix of far and near errors."""
    P = rng.random((m, d))
    kind = rng.integers(3, size=(m, 1))
    far = rng.random((m, d))
    near = np.clip(P + rng.normal(0.0, 0.05, (m, d)), 0.0, 1.0)
    Q = np.where(kind == 0, far, near)
    # kind 2: single-coordinate error
    single = P.copy()
    j = rng.integers(d, size=m)
    single[np.arange(m), j] = far[np.arange(m), j]
    Q = np.where(kind == 2, single, Q)
    return P, Q


def path_product_suite(trials: int = 100_000, seed: int = 0, max_depth: int = MAX_PATH) -> SuiteResult:
    """Path-product bounds on random (p, q) pairs of length 1..max_depth."""
    name = "path-product"
    if trials <= 0:
        return _vacuous(name)
    start = time.perf_counter()
    rng = np.random.default_rng([seed, 1])
    depths = rng.integers(1, max_depth + 1, size=trials)
    violations, worst = 0, 0.0
    for d in np.unique(depths):
        m = int(np.count_nonzero(depths == d))
        P, Q = _unit_pairs(rng, m, int(d))
        lhs, slab, total, sq_bound, ok = estimate_bounds_batch(P, Q)
        violations += int(np.count_nonzero(~ok))
        worst = max(worst, _ratio(lhs * lhs, sq_bound))
    return SuiteResult(name, trials, violations, worst, time.perf_counter() - start, {"max_depth": max_depth})


def pecoc_suite(trials: int = 10_000, seed: int = 0, sizes=(2, 4, 8, 16)) -> SuiteResult:
    """Flat code regret bound, ``trials`` instances per code size."""
    name = "pecoc-regret"
    if trials <= 0:
        return _vacuous(name)
    start = time.perf_counter()
    rng = np.random.default_rng([seed, 2])
    violations, worst, per_size = 0, 0.0, {}
    for n in sizes:
        C = hadamard_code(n).astype(np.float64)
        P = rng.dirichlet(np.full(n, rng.choice([0.1, 1.0, 10.0])), size=trials)
        truth = P @ C.T
        noisy = np.clip(truth + rng.normal(0.0, 0.1, truth.shape), 0.0, 1.0)
        R = np.where(rng.random((trials, 1)) < 0.5, rng.random(truth.shape), noisy)
        y = rng.integers(n, size=trials)
        lhs, bound, ok = pecoc_regret_batch(C, P, R, y)
        bad = int(np.count_nonzero(~ok))
        violations += bad
        per_size[n] = {"violations": bad, "worst_ratio": _ratio(lhs, bound)}
        worst = max(worst, per_size[n]["worst_ratio"])
    return SuiteResult(name, trials * len(sizes), violations, worst, time.perf_counter() - start, {"sizes": per_size})


def kway_suite(trials: int = 10_000, seed: int = 0, n: int = 16, ks=(2, 4, 16)) -> SuiteResult:
    """Composed k-way tree bound, ``trials`` instances per k."""
    name = "kway-regret"
    if trials <= 0:
        return _vacuous(name)
    start = time.perf_counter()
    rng = np.random.default_rng([seed, 3])
    violations, worst, per_k = 0, 0.0, {}
    for k in ks:
        levels = round(math.log(n, k))
        bad, w, clamped = 0, 0.0, 0
        for _ in range(trials):
            P = rng.dirichlet(np.full(n, rng.choice([0.1, 1.0, 10.0])))
            R = rng.random((levels, k - 1))
            res = check_kway_regret(P, R, int(rng.integers(n)), k)
            bad += not res.holds
            clamped += res.clamped
            if res.bound > 0:
                w = max(w, res.lhs / res.bound)
        violations += bad
        per_k[k] = {"violations": bad, "worst_ratio": w, "clamped": clamped}
        worst = max(worst, w)
    return SuiteResult(name, trials * len(ks), violations, worst, time.perf_counter() - start, {"n": n, "ks": per_k})


def constant_stream(n_labels: int) -> ExampleBatch:
    """Every example has the bias feature only: regressors cannot tell labels apart."""
    return ExampleBatch(
        np.arange(n_labels + 1, dtype=np.int64),
        np.full(n_labels, BIAS_INDEX, dtype=np.int64),
        np.ones(n_labels),
        [f"l{i}" for i in range(n_labels)],
    )


def random_stream(n_labels: int, bits: int, nnz: int, seed: int) -> ExampleBatch:
    """Distinct labels, each with up to ``nnz`` random features plus the bias."""
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.integers(1, 1 << bits, size=(n_labels, nnz)), axis=1)
    keep = np.ones_like(idx, dtype=bool)
    keep[:, 1:] = idx[:, 1:] != idx[:, :-1]
    full = np.hstack([np.full((n_labels, 1), BIAS_INDEX), idx])
    mask = np.hstack([np.ones((n_labels, 1), dtype=bool), keep])
    vals = np.hstack([np.ones((n_labels, 1)), rng.uniform(-1.0, 1.0, idx.shape)])
    indptr = np.concatenate([[0], np.cumsum(mask.sum(axis=1))]).astype(np.int64)
    return ExampleBatch(indptr, full[mask].astype(np.int64), vals[mask], [f"l{i}" for i in range(n_labels)])


@dataclass
class BuildStats:
    alpha: float
    stream: str
    n_labels: int
    max_depth: int
    depth_bound: float
    total_leaf_depth: int
    disagreements: int
    strict_violations: int
    closed_violations: int
    elapsed: float


def online_build(n_labels: int, alpha: float, stream: str = "constant", bits: int = 6, seed: int = 0,
                 eta0: float = 0.1) -> tuple[Tree, BuildStats]:
    """Insert ``n_labels`` distinct labels with the balance checks enabled."""
    if stream == "constant":
        batch = constant_stream(n_labels)
    elif stream == "random":
        batch = random_stream(n_labels, bits, 8, seed)
    else:
        raise ConfigError(f"unknown stream {stream!r}")
    tree = Tree(bits, alpha=alpha, eta0=eta0, seed=seed, capacity=2 * n_labels)
    tree.check_balance = True
    start = time.perf_counter()
    tree.score_and_learn(batch, predict=False)
    elapsed = time.perf_counter() - start
    strict, closed = tree.balance_violations
    return tree, BuildStats(
        alpha, stream, n_labels, tree.max_depth, depth_bound(n_labels, alpha), tree.total_leaf_depth,
        tree.disagreements, strict, closed, elapsed,
    )


def depth_suite(n_labels: int = 2000, seed: int = 0, alphas=(0.1, 0.25, 0.5, 0.75, 1.0),
                streams=("constant", "random")) -> SuiteResult:
    """Online builds: balance after every insertion, depth bound, disagreement count.

    Balance is checked in the closed form ``L, R <= kappa N + (1 - kappa)``;
    the strict form is reported in ``details`` but not counted, because
    equality is reachable (``alpha = 1``, three labels: L = 2 = kappa*3 + 1/2).
    """
    name = "online-depth"
    if n_labels <= 0:
        return _vacuous(name)
    start = time.perf_counter()
    violations, worst, builds = 0, 0.0, []
    for alpha in alphas:
        for stream in streams:
            _, st = online_build(n_labels, alpha, stream, seed=seed)
            depth_ok = st.max_depth <= st.depth_bound
            dis_ok = st.disagreements <= st.total_leaf_depth
            violations += st.closed_violations + (not depth_ok) + (not dis_ok)
            worst = max(worst, st.max_depth / st.depth_bound)
            builds.append(asdict(st))
    return SuiteResult(name, len(builds), violations, worst, time.perf_counter() - start, {"builds": builds})


def balanced_split_sizes(n: int, k: float, rng=None):
    """Yield ``(N, L)`` for a random tree on n leaves with ``L, R <= floor(k N)`` at every node."""
    stack = [n]
    while stack:
        N = stack.pop()
        if N <= 1:
            continue
        hi = math.floor(k * N + 1e-12)
        lo = N - hi
        if lo > hi:
            raise ConfigError(f"no split of {N} leaves has both sides <= {k} * {N}")
        L = hi if rng is None else int(rng.integers(lo, hi + 1))
        yield N, L
        stack.extend((L, N - L))


def constructed_total_depth(n: int, k: float, rng=None) -> int:
    """Total leaf depth of a constructed tree: each internal node adds its leaf count."""
    return sum(N for N, _ in balanced_split_sizes(n, k, rng))


def total_depth_suite(seed: int = 0, kappas=(0.5, 2.0 / 3.0, 0.9), max_log2: int = 14) -> SuiteResult:
    """Total leaf depth of constructed trees against ``n log n / H(kappa)``.

    kappa = 1/2 forces exact halving, so n runs over powers of two there.
    """
    name = "total-depth"
    start = time.perf_counter()
    rng = np.random.default_rng([seed, 4])
    violations, worst, rows = 0, 0.0, []
    for k in kappas:
        sizes = [1 << e for e in range(1, max_log2 + 1)]
        if k > 0.5:
            sizes += [int(s) for s in rng.integers(2, 1 << max_log2, size=8)]
        for n in sizes:
            for mode in ("extreme", "random"):
                total = constructed_total_depth(n, k, None if mode == "extreme" else rng)
                bound = total_depth_bound(n, k)
                ok = bool(leq(total, bound))
                violations += not ok
                worst = max(worst, total / bound)
                rows.append({"kappa": k, "n": n, "mode": mode, "total": total, "bound": bound, "holds": ok})
    return SuiteResult(name, len(rows), violations, worst, time.perf_counter() - start, {"trees": rows})


SUITES = ("path-product", "pecoc-regret", "kway-regret", "online-depth", "total-depth")


def run_all(trials: int | None = None, seed: int = 0, suites=SUITES) -> list[SuiteResult]:
    """``trials`` overrides every suite's instance count (0 makes them vacuous)."""
    out = []
    for name in suites:
        if name == "path-product":
            out.append(path_product_suite(100_000 if trials is None else trials, seed))
        elif name == "pecoc-regret":
            out.append(pecoc_suite(10_000 if trials is None else trials, seed))
        elif name == "kway-regret":
            out.append(kway_suite(10_000 if trials is None else trials, seed))
        elif name == "online-depth":
            out.append(depth_suite(2000 if trials is None else trials, seed))
        elif name == "total-depth":
            out.append(_vacuous(name) if trials == 0 else total_depth_suite(seed))
        else:
            raise ConfigError(f"unknown suite {name!r}; choose from {SUITES}")
    return out


def kappa_table(alphas=(0.1, 0.25, 0.5, 0.75, 1.0)) -> list[tuple[float, float]]:
    return [(a, kappa(a)) for a in alphas]
