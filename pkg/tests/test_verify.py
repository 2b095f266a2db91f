import math

import numpy as np
import pytest

from cptree.cpt.bounds import kappa, total_depth_bound
from cptree.errors import ConfigError
from cptree.verify import (
    balanced_split_sizes,
    constant_stream,
    constructed_total_depth,
    depth_suite,
    kway_suite,
    online_build,
    path_product_suite,
    pecoc_suite,
    random_stream,
    run_all,
    total_depth_suite,
)


def test_small_suites_pass():
    for res in (path_product_suite(2000, seed=1), pecoc_suite(500, seed=1), kway_suite(200, seed=1)):
        assert res.passed and res.trials > 0 and res.worst_ratio <= 1 + 1e-9


def test_suite_is_seeded():
    a, b = path_product_suite(500, seed=3), path_product_suite(500, seed=3)
    assert a.worst_ratio == b.worst_ratio


def test_vacuous_suites_warn():
    with pytest.warns(UserWarning):
        res = run_all(0, suites=("path-product", "total-depth"))
    assert all(r.passed and r.trials == 0 and r.details["vacuous"] for r in res)


def test_unknown_suite():
    with pytest.raises(ConfigError):
        run_all(1, suites=("nope",))


def test_streams():
    c = constant_stream(5)
    assert len(c) == 5 and c.indices.tolist() == [0] * 5
    r = random_stream(50, 6, 4, seed=2)
    assert len(set(r.labels)) == 50 and r.max_index() < 64
    assert r.indices[r.indptr[:-1]].tolist() == [0] * 50


def test_depth_suite_small():
    res = depth_suite(300, alphas=(0.5, 1.0))
    assert res.passed
    builds = res.details["builds"]
    assert len(builds) == 4
    for b in builds:
        assert b["closed_violations"] == 0 and b["max_depth"] <= b["depth_bound"]
        assert b["disagreements"] <= b["total_leaf_depth"]


def test_alpha_one_three_labels_hits_strict_limit():
    _, st = online_build(3, 1.0)
    assert st.strict_violations >= 1 and st.closed_violations == 0


def test_alpha_one_builds_are_perfect():
    for n in (2, 4, 8, 64, 256):
        tree, st = online_build(n, 1.0, "random")
        assert st.max_depth == int(math.log2(n))


@pytest.mark.parametrize("k", [0.5, 2 / 3, 0.9])
def test_constructed_trees_respect_fraction(k, rng):
    for n in (2, 7, 64, 1000):
        if k == 0.5 and n & (n - 1):
            continue
        for N, L in balanced_split_sizes(n, k, rng):
            assert max(L, N - L) <= k * N + 1e-9


def test_halving_tree_meets_bound_with_equality():
    for e in range(1, 12):
        n = 1 << e
        assert constructed_total_depth(n, 0.5) == n * e
        assert total_depth_bound(n, 0.5) == pytest.approx(n * e)


def test_halving_impossible_for_odd():
    with pytest.raises(ConfigError):
        constructed_total_depth(3, 0.5)


def test_total_depth_suite_small():
    res = total_depth_suite(max_log2=8)
    assert res.passed and res.worst_ratio <= 1 + 1e-12


def test_kappa_values():
    assert kappa(1.0) == 0.5
    assert kappa(0.5) == pytest.approx(2 / 3)
    assert kappa(0.1) == pytest.approx(1 / (1 + 2.0**-9))
