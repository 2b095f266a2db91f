import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_x, sv
from cptree.cpt import Tree, depth_bound, entropy, kappa, obj, total_depth_bound
from cptree.data import ExampleBatch, SparseVector
from cptree.errors import ConfigError, LabelNotFoundError, PreconditionError
from oracles import RefOnlineTree, leaf_count_check

X0 = SparseVector.bias_only()


def nested(tree: Tree, v: int = 0):
    if tree.is_leaf(v):
        return tree.label_at(v)
    return (nested(tree, int(tree.left[v])), nested(tree, int(tree.right[v])))


def set_weights(tree, node, weights):
    W = tree.regressor(node).weights
    W[:] = 0.0
    for i, v in weights.items():
        W[i] = v


# -- routing score and constants -------------------------------------------


def test_obj_examples():
    assert obj(0.9, 2, 2, 1.0) == 0.0
    assert obj(0.5, 4, 2, 0.5) == pytest.approx(0.5)
    assert obj(0.9, 1, 3, 0.5) == pytest.approx(0.4 + 0.5 * math.log2(1 / 3))
    assert obj(0.9, 1, 3, 0.5) == pytest.approx(-0.3925, abs=5e-5)


def test_kappa_values():
    assert kappa(1.0) == 0.5
    assert kappa(0.5) == pytest.approx(2 / 3)
    assert kappa(0.1) > 0.99
    assert [kappa(a) for a in (0.1, 0.25, 0.5, 0.75, 1.0)] == sorted(
        [kappa(a) for a in (0.1, 0.25, 0.5, 0.75, 1.0)], reverse=True
    )
    for bad in (0.0, -1.0, 1.5):
        with pytest.raises(ConfigError):
            kappa(bad)


def test_depth_bound_alpha_one():
    # n = 2**17 at alpha = 1: 17 + 2
    assert depth_bound(2**17, 1.0) == pytest.approx(19.0)


def test_entropy_and_total_depth_bound():
    assert entropy(0.5) == pytest.approx(math.log(2))
    assert total_depth_bound(8, 0.5) == pytest.approx(24.0)
    assert total_depth_bound(1, 0.9) == 0.0
    with pytest.raises(ConfigError):
        total_depth_bound(8, 0.4)


# -- path and prediction ---------------------------------------------------


def test_path_single_label():
    t = Tree.from_nested("a", 4)
    assert t.path("a") == []
    assert t.predict_q(X0, "a") == 1.0


def test_path_two_labels():
    t = Tree.from_nested(("a", "b"), 4)
    assert [(s.node, s.direction) for s in t.path("b")] == [(0, 1)]
    assert [(s.node, s.direction) for s in t.path("a")] == [(0, 0)]


def test_path_left_chain():
    t = Tree.from_nested(((("a", "b"), "c")), 4)
    steps = t.path("a")
    assert [s.direction for s in steps] == [0, 0]
    for s, nxt in zip(steps, steps[1:] + [None]):
        child = t.left[s.node] if s.direction == 0 else t.right[s.node]
        assert child == (nxt.node if nxt else t.leaf_of("a"))


def test_path_unknown_label():
    with pytest.raises(LabelNotFoundError):
        Tree.from_nested(("a", "b"), 4).path("zz")


def test_predict_complementary_pair():
    t = Tree.from_nested(("a", "b"), 4)
    set_weights(t, 0, {0: 0.3})
    assert t.predict_q(X0, "a") == pytest.approx(0.7)
    assert t.predict_q(X0, "b") == pytest.approx(0.3)


def test_predict_two_factor_product():
    t = Tree.from_nested(("a", ("b", "c")), 4)
    set_weights(t, 0, {0: 0.6})
    set_weights(t, int(t.right[0]), {0: 0.25})
    assert t.predict_q(X0, "c") == pytest.approx(0.15)


def test_predict_unknown_label_is_zero():
    t = Tree.from_nested(("a", "b"), 4)
    assert t.predict_q(X0, "zz") == 0.0


def test_feature_index_out_of_range():
    t = Tree.from_nested(("a", "b"), 3)
    with pytest.raises(ConfigError):
        t.predict_q(sv({9: 1.0}), "a")


# -- static training -------------------------------------------------------


def test_train_two_labels_targets():
    t = Tree.from_nested(("a", "b"), 4)
    x = sv({0: 1.0, 2: 1.0})
    sig = t.structure_signature()
    root_before = t.regressor(0).predict(x)
    leaf = t.leaf_of("b")
    t.train_seen(x, "b")
    assert t.regressor(0).predict(x) > root_before
    assert t.regressor(leaf).predict(x) < 0.5
    assert t.structure_signature() == sig


def test_train_updates_each_path_node_once():
    t = Tree.static([f"l{i}" for i in range(8)], 4)
    before = t.arena.counts[: t.n_nodes].copy()
    t.train_seen(X0, "l5")
    delta = t.arena.counts[: t.n_nodes] - before
    touched = {s.node for s in t.path("l5")} | {t.leaf_of("l5")}
    assert set(np.flatnonzero(delta)) == touched
    assert delta.max() == 1
    assert t.max_updates_per_example == 4


def test_batch_train_empty_and_missing():
    t = Tree.static(["a", "b", "c"], 4)
    empty = ExampleBatch(np.zeros(1, np.int64), [], [], [])
    t.batch_train(empty)
    assert t.regressor_updates == 0
    bad = ExampleBatch.from_examples([])
    t.batch_train(bad)
    from cptree.data import Example

    with pytest.raises(LabelNotFoundError):
        t.batch_train(ExampleBatch.from_examples([Example(X0, "zz")]))


def test_two_passes_equal_repeated_pass(rng):
    labels = [f"l{i}" for i in range(6)]
    from cptree.data import Example

    exs = [Example(random_x(rng, 5), labels[int(rng.integers(6))]) for _ in range(40)]
    batch = ExampleBatch.from_examples(exs)
    a = Tree.static(labels, 5)
    a.batch_train(batch, passes=2)
    b = Tree.static(labels, 5)
    b.batch_train(batch)
    b.batch_train(batch)
    assert np.array_equal(a.arena.W[: a.n_nodes], b.arena.W[: b.n_nodes])


def test_static_tree_skips_unseen_labels():
    t = Tree.static(["a", "b"], 4)
    t.learn(X0, "zz")
    assert t.skipped == 1 and "zz" not in t


def test_frozen_tree_rejects_training():
    t = Tree.static(["a", "b"], 4).freeze()
    with pytest.raises(PreconditionError):
        t.train_seen(X0, "a")


# -- online insertion ------------------------------------------------------


def test_insert_into_empty_tree():
    t = Tree(4, alpha=0.5)
    t.insert_new(X0, "a")
    assert t.n_nodes == 1 and t.regressor_updates == 0
    assert t.predict_q(X0, "a") == 1.0


def test_insert_split_semantics():
    t = Tree(4, alpha=0.5, eta0=0.1)
    x = sv({0: 1.0, 3: 1.0})
    t.insert_new(x, "a")
    t.insert_new(x, "b")
    assert nested(t) == ("a", "b")
    root = t.regressor(0)
    assert root.update_count == 1 and root.predict(x) > 0.5
    right = t.regressor(t.leaf_of("b"))
    assert right.update_count == 1 and right.predict(x) < 0.5
    left = t.regressor(t.leaf_of("a"))
    assert left.update_count == 0 and left.predict(x) == 0.5


def test_insert_existing_label_is_error():
    t = Tree(4)
    t.insert_new(X0, "a")
    with pytest.raises(PreconditionError):
        t.insert_new(X0, "a")


@pytest.mark.parametrize("k", [1, 2, 3, 5, 8])
def test_alpha_one_perfectly_balanced(k):
    t = Tree(4, alpha=1.0)
    for i in range(2**k):
        t.learn(X0, f"l{i}")
    assert t.max_depth == k
    assert set(t.leaf_depths().tolist()) == {k}
    assert t.total_leaf_depth == k * 2**k


@pytest.mark.parametrize("alpha", [0.1, 0.3, 0.5, 0.9, 1.0])
@pytest.mark.parametrize("growth", ["obj", "random"])
def test_matches_reference_online_tree(alpha, growth, rng):
    bits = 4
    dim = 1 << bits
    tree = Tree(bits, alpha=alpha, eta0=0.2, decay=0.05, growth=growth, seed=7)
    tree.check_balance = True
    ref = RefOnlineTree(dim, alpha, eta0=0.2, decay=0.05, random_mode=growth == "random", seed=7)
    labels = [f"y{i}" for i in range(25)]
    for step in range(300):
        x = random_x(rng, bits, nnz=int(rng.integers(0, 5)))
        y = labels[int(rng.integers(min(len(labels), 3 + step // 8)))]
        pairs = list(zip(x.indices.tolist(), x.values.tolist()))
        assert tree.predict_q(x, y) == pytest.approx(ref.predict(pairs, y), abs=1e-12)
        tree.learn(x, y)
        ref.learn(pairs, y)
    assert nested(tree) == ref.shape()
    assert tree.disagreements == ref.disagreements
    assert sorted(tree.leaf_depths().tolist()) == ref.leaf_depths()
    assert leaf_count_check(ref)
    if growth == "obj":
        # the kernel checks only the insertion path; the oracle scans every node
        strict, closed = tree.balance_violations
        assert closed == ref.closed_violations == 0
        assert (strict == 0) == (ref.strict_violations == 0)


def test_counters_agree_with_traversal(rng):
    t = Tree(5, alpha=0.4)
    for i in range(300):
        t.learn(random_x(rng, 5), f"l{int(rng.integers(120))}")
    stats = t.depth_stats()
    assert stats.max_depth == t.max_depth
    assert stats.total_leaf_depth == t.total_leaf_depth
    for v, L, R, _ in stats.nodes:
        assert (t.lcount[v], t.rcount[v]) == (L, R)
    assert t.disagreements <= t.total_leaf_depth


def test_depth_stats_examples():
    s = Tree.from_nested("a", 4).depth_stats()
    assert (s.max_depth, s.total_leaf_depth, s.nodes) == (0, 0, [])
    s = Tree.static([f"l{i}" for i in range(8)], 4).depth_stats()
    assert (s.max_depth, s.total_leaf_depth) == (3, 24)


def test_static_shapes():
    t = Tree.static(list("abcde"), 4)
    assert nested(t) == ((("a", "b"), "c"), ("d", "e"))
    r = Tree.static(list("abcdefgh"), 4, shape="random", seed=3)
    assert sorted(r.labels) == list("abcdefgh") and r.n_nodes == 15
    with pytest.raises(ConfigError):
        Tree.from_nested(("a", "a"), 4)


# -- normalisation and oracle exactness -------------------------------------


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 200), st.integers(0, 2**32 - 1))
def test_distribution_sums_to_one(n, seed):
    rng = np.random.default_rng(seed)
    t = Tree.static([f"l{i}" for i in range(n)], 5, shape="random", seed=seed)
    t.arena.W[: t.n_nodes] = rng.uniform(-1, 2, (t.n_nodes, 32))
    x = random_x(rng, 5)
    dist = t.distribution(x)
    assert len(dist) == n
    assert sum(dist.values()) == pytest.approx(1.0, abs=1e-9)
    for y in list(dist)[:5]:
        assert t.predict_q(x, y) == pytest.approx(dist[y], abs=1e-12)


def test_oracle_regressors_give_exact_conditionals(rng):
    # one-hot context features; node weights set to the true right-probabilities
    n, contexts = 9, 4
    t = Tree.static([f"l{i}" for i in range(n)], 4, shape="random", seed=1)
    P = rng.dirichlet(np.ones(n), size=contexts)
    stats = t.depth_stats()
    below = {}
    for v in reversed(range(t.n_nodes)):
        below[v] = [t.node_label[v]] if t.is_leaf(v) else below[int(t.left[v])] + below[int(t.right[v])]
    for v, *_ in stats.nodes:
        W = t.regressor(v).weights
        W[:] = 0.0
        for c in range(contexts):
            tot = P[c, below[v]].sum()
            W[1 + c] = P[c, below[int(t.right[v])]].sum() / tot
    for c in range(contexts):
        x = sv({1 + c: 1.0})
        for i in range(n):
            assert t.predict_q(x, f"l{i}") == pytest.approx(P[c, i], abs=1e-12)


def test_state_round_trip(rng):
    t = Tree(5, alpha=0.3, eta0=0.05, seed=4)
    for _ in range(100):
        t.learn(random_x(rng, 5), f"l{int(rng.integers(30))}")
    header, arrays = t.to_state()
    u = Tree.from_state(header, arrays)
    x = random_x(rng, 5)
    assert nested(u) == nested(t)
    assert all(u.predict_q(x, y) == t.predict_q(x, y) for y in t.labels)
    t.learn(x, "new")
    u.learn(x, "new")
    assert nested(u) == nested(t)
