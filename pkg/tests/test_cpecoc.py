import numpy as np
import pytest

from cptree.cpecoc import (
    KWayTree,
    bound_ratio,
    check_kway_regret,
    format_curve,
    levels_for,
    tradeoff_curve,
)
from cptree.cpt.tree import Tree
from cptree.errors import ConfigError, LabelNotFoundError
from cptree.pecoc import PecocModel, hadamard_code

from conftest import random_x
from oracles import chain_probs


def labels(n):
    return [f"l{i}" for i in range(n)]


def stream(rng, n_labels, bits, m):
    return [(random_x(rng, bits), f"l{rng.integers(n_labels)}") for _ in range(m)]


def test_regressor_count():
    t = KWayTree(labels(16), 4, 6)
    assert t.levels == 2 and len(t.nodes) == 5 and t.n_regressors == 15
    assert KWayTree(labels(16), 2, 6).n_regressors == 15
    assert KWayTree(labels(16), 16, 6).n_regressors == 15


def test_padding_to_power_of_k():
    t = KWayTree(labels(5), 4, 6)
    assert t.n_slots == 16 and t.levels == 2
    assert levels_for(17, 4) == 3 and levels_for(4, 4) == 1


def test_path_digits():
    t = KWayTree(labels(64), 4, 4)
    assert t.path(0) == [(0, 0), (1, 0), (5, 0)]
    # slot 27 = 1*16 + 2*4 + 3 in base 4
    assert t.path(27) == [(0, 1), (2, 2), (2 * 4 + 1 + 2, 3)]


def test_bad_k_and_labels():
    for k in (1, 3, 6):
        with pytest.raises(ConfigError):
            KWayTree(labels(8), k, 4)
    with pytest.raises(ConfigError):
        KWayTree(["a", "a"], 2, 4)
    with pytest.raises(ConfigError):
        KWayTree([], 2, 4)


def test_unknown_labels():
    t = KWayTree(labels(4), 2, 4)
    x = random_x(np.random.default_rng(0), 4)
    assert t.estimate(x, "zz") == 0.0
    with pytest.raises(LabelNotFoundError):
        t.train(x, "zz")
    t.learn(x, "zz")
    assert t.regressor_updates == 0


def test_fresh_tree_is_uniform():
    t = KWayTree(labels(16), 4, 5)
    x = random_x(np.random.default_rng(1), 5)
    for y in labels(16):
        assert t.estimate(x, y) == pytest.approx(1 / 16)


def test_k_equal_n_is_flat_pecoc(rng):
    n, bits = 16, 6
    t = KWayTree(labels(n), n, bits, eta0=0.2)
    flat = PecocModel(n, bits, eta0=0.2, labels=labels(n))
    for x, y in stream(rng, n, bits, 400):
        t.learn(x, y)
        flat.learn(x, y)
    for _ in range(20):
        x = random_x(rng, bits)
        for y in labels(n):
            assert t.estimate(x, y) == pytest.approx(flat.predict(x, y), abs=1e-12)


def test_k_two_mirrors_binary_tree(rng):
    n, bits = 16, 6
    t = KWayTree(labels(n), 2, bits, eta0=0.15)
    cpt = Tree.static(labels(n), bits, eta0=0.15)
    for x, y in stream(rng, n, bits, 500):
        t.learn(x, y)
        cpt.learn(x, y)
    for _ in range(20):
        x = random_x(rng, bits)
        for y in labels(n):
            assert t.estimate(x, y) == pytest.approx(cpt.predict_q(x, y), abs=1e-12)


def test_update_count(rng):
    t = KWayTree(labels(64), 4, 5)
    for x, y in stream(rng, 64, 5, 10):
        t.learn(x, y)
    assert t.regressor_updates == 10 * 3 * 3


@pytest.mark.parametrize("n,k,ratio", [(16, 2, 16.0), (16, 4, 9.0), (16, 16, 3.515625), (4, 2, 4.0)])
def test_bound_ratio_values(n, k, ratio):
    assert bound_ratio(n, k) == pytest.approx(ratio)


def test_bound_ratio_requires_exact_power():
    with pytest.raises(ConfigError):
        bound_ratio(32, 4)
    with pytest.raises(ConfigError):
        bound_ratio(2, 4)


def test_tradeoff_curve_shape():
    rows = tradeoff_curve(4096)
    assert [k for k, _, _ in rows] == [2**i for i in range(1, 13)]
    mults = [m for _, m, _ in rows]
    per = [p for _, _, p in rows]
    assert all(a > b for a, b in zip(mults, mults[1:]))
    assert all(a < b for a, b in zip(per, per[1:]))
    assert mults[0] == pytest.approx(144.0)
    assert per[-1] == pytest.approx(4095.0)
    text = format_curve(rows)
    assert text.splitlines()[0].startswith("k\t") and len(text.splitlines()) == 13
    with pytest.raises(ConfigError):
        tradeoff_curve(100)


def test_regret_check_exact_outputs(rng):
    n, k = 16, 4
    P = rng.dirichlet(np.ones(n))
    C = hadamard_code(k)
    y = 9
    outs = []
    lo, width = 0, n
    groups_slot = y
    for _ in range(2):
        cw = width // k
        cond = chain_probs(P, [range(lo + c * cw, lo + (c + 1) * cw) for c in range(k)])
        outs.append((C @ np.array(cond))[1:])
        lo += ((groups_slot - lo) // cw) * cw
        width = cw
    c = check_kway_regret(P, outs, y, k)
    assert c.lhs == pytest.approx(0.0, abs=1e-24) and c.holds and not c.clamped


def test_regret_check_random(rng):
    for n, k in ((16, 2), (16, 4), (16, 16), (64, 8)):
        for _ in range(200):
            P = rng.dirichlet(np.ones(n) * 0.5)
            levels = levels_for(n, k)
            R = rng.random((levels, k - 1))
            c = check_kway_regret(P, R, int(rng.integers(n)), k)
            assert c.holds


def test_regret_check_validation():
    with pytest.raises(ConfigError):
        check_kway_regret(np.ones(16) / 16, np.full((2, 3), 1.5), 0, 4)
    with pytest.raises(ConfigError):
        check_kway_regret(np.ones(16) / 16, np.full((2, 3), 0.5), 16, 4)
    with pytest.raises(ConfigError):
        check_kway_regret(np.ones(16), np.full((2, 3), 0.5), 0, 4)
