import io
import math

import numpy as np
import pytest

from cptree.baselines import TableModel
from cptree.cpt.tree import Tree
from cptree.data import ExampleBatch
from cptree.errors import ConfigError
from cptree.evaluation import (
    best_possible,
    equivalent_labels,
    format_reports,
    hoeffding_halfwidth,
    holdout_evaluate,
    make_report,
    progressive_validate,
    uniform_loss,
)

from conftest import random_x


def test_hoeffding_value():
    assert hoeffding_halfwidth(20_000, 0.05) == pytest.approx(0.0096, abs=5e-5)
    assert hoeffding_halfwidth(1, 0.05) == pytest.approx(math.sqrt(math.log(40) / 2))
    with pytest.raises(ConfigError):
        hoeffding_halfwidth(0)
    with pytest.raises(ConfigError):
        hoeffding_halfwidth(10, 1.0)


@pytest.mark.parametrize("k", [1, 2, 5, 10, 1000])
def test_equivalent_labels_inverts_uniform_loss(k):
    assert equivalent_labels(uniform_loss(k)) == pytest.approx(k)


def test_equivalent_labels_domain():
    assert equivalent_labels(0.0) == 1.0
    with pytest.raises(ConfigError):
        equivalent_labels(1.0)


def test_empty_stream_is_undefined():
    r = progressive_validate(TableModel(), [])
    assert r.m == 0 and not r.defined and math.isnan(r.mean_loss)
    rec = r.to_record()
    assert rec["mean_loss"] is None and rec["equivalent_labels"] is None
    assert "undefined" in format_reports([("table", r)])


def test_report_fields():
    r = make_report([0.0, 1.0, 0.25, 0.25], "holdout")
    assert r.mean_loss == pytest.approx(0.375)
    assert r.equivalent_labels == pytest.approx(1 / (1 - math.sqrt(0.375)))
    assert r.to_json().startswith("{")
    assert make_report([1.0], "holdout").equivalent_labels == math.inf


def make_batch(rng, n, bits=5, labels=4):
    lines = [f"l{rng.integers(labels)} f{rng.integers(6)} g{rng.integers(3)}" for _ in range(n)]
    return ExampleBatch.read(io.StringIO("\n".join(lines)), bits)


def test_progressive_equals_holdout_when_frozen(rng):
    batch = make_batch(rng, 300)
    tree = Tree.static(["l0", "l1", "l2", "l3"], 5)
    tree.fit(batch.slice(0, 200))
    tree.freeze()
    a = progressive_validate(tree, batch.slice(200, 300))
    b = holdout_evaluate(tree, batch.slice(200, 300))
    assert a.mean_loss == b.mean_loss and a.mode == "progressive" and b.mode == "holdout"


def test_progressive_predicts_before_training(rng):
    batch = make_batch(rng, 200)
    t = TableModel()
    r = progressive_validate(t, batch)
    manual = TableModel()
    losses = []
    for ex in batch:
        losses.append((1 - manual.predict(ex.x, ex.y)) ** 2)
        manual.learn(ex.x, ex.y)
    assert r.mean_loss == pytest.approx(np.mean(losses))


def test_batch_and_iterable_paths_agree(rng):
    batch = make_batch(rng, 150)
    labels = ["l0", "l1", "l2", "l3"]
    a = progressive_validate(Tree(5, alpha=0.5), batch)
    b = progressive_validate(Tree(5, alpha=0.5), list(batch))
    assert a.mean_loss == pytest.approx(b.mean_loss, abs=1e-12)
    del labels


def test_true_regret_reported(rng):
    batch = make_batch(rng, 50)
    r = progressive_validate(TableModel(), batch, truth=lambda x, y: 0.25)
    assert r.true_regret is not None and r.true_regret >= 0.0


def test_best_possible_is_lower_bound(rng):
    batch = make_batch(rng, 400)
    best = best_possible(batch)
    table = TableModel().fit(batch.slice(0, 200))
    held = holdout_evaluate(table, batch)
    assert best.mode == "best_possible"
    assert best.mean_loss <= held.mean_loss


class UniformStub:
    frozen = True

    def __init__(self, k):
        self.k = k

    def predict(self, x, y):
        return 1.0 / self.k

    def learn(self, x, y):
        raise AssertionError("frozen stub must not train")


@pytest.mark.parametrize("k,loss", [(4, 0.5625), (2, 0.25), (10, 0.81)])
def test_uniform_stub_loss(rng, k, loss):
    batch = make_batch(rng, 100)
    for learn in (True, False):
        r = progressive_validate(UniformStub(k), batch, learn=learn)
        assert r.mean_loss == pytest.approx(loss)
        assert r.equivalent_labels == pytest.approx(k)
