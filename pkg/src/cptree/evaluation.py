"""Progressive validation, Hoeffding intervals and the equivalent-labels metric.

The scored quantity is the observable squared loss ``(1 - f(x, y))**2`` of
the probability the model assigns to the label that actually occurred.
In progressive mode every prediction is made before the model trains on
that example; holdout mode never trains.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable

import numpy as np

from .baselines import TableModel
from .data import Example, ExampleBatch
from .errors import ConfigError

DEFAULT_DELTA = 0.05


def hoeffding_halfwidth(m: int, delta: float = DEFAULT_DELTA) -> float:
    """Half-width ``sqrt(ln(2/delta) / (2m))`` for the mean of m values in [0, 1]."""
    if not 0.0 < delta < 1.0:
        raise ConfigError(f"delta must lie in (0, 1), got {delta}")
    if m < 1:
        raise ConfigError(f"m must be positive, got {m}")
    return math.sqrt(math.log(2.0 / delta) / (2.0 * m))


def equivalent_labels(loss: float) -> float:
    """Label count k whose uniform predictor has loss ``(1 - 1/k)**2``."""
    if not 0.0 <= loss < 1.0:
        raise ConfigError(f"loss must lie in [0, 1), got {loss}")
    return 1.0 / (1.0 - math.sqrt(loss))


def uniform_loss(k: float) -> float:
    return (1.0 - 1.0 / k) ** 2


@dataclass
class EvalReport:
    mode: str
    m: int
    mean_loss: float
    ci_halfwidth: float
    delta: float
    equivalent_labels: float
    wall_time: float = 0.0
    model_config: dict = field(default_factory=dict)
    true_regret: float | None = None

    @property
    def defined(self) -> bool:
        return self.m > 0

    def to_record(self) -> dict:
        rec = asdict(self)
        for key in ("mean_loss", "ci_halfwidth", "equivalent_labels"):
            v = rec[key]
            if isinstance(v, float) and not math.isfinite(v):
                rec[key] = None
        return rec

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True)


def make_report(losses, mode, delta=DEFAULT_DELTA, wall_time=0.0, model_config=None, true_regret=None):
    losses = np.asarray(losses, dtype=np.float64)
    m = int(losses.size)
    if m == 0:
        nan = float("nan")
        return EvalReport(mode, 0, nan, nan, delta, nan, wall_time, dict(model_config or {}), None)
    mean = float(losses.mean())
    equiv = equivalent_labels(mean) if mean < 1.0 else math.inf
    return EvalReport(
        mode, m, mean, hoeffding_halfwidth(m, delta), delta, equiv, wall_time,
        dict(model_config or {}), true_regret,
    )


def score(model, stream, learn: bool = True) -> np.ndarray:
    """``f(x, y)`` per example, each computed before any training on it.

    Frozen models are only scored.
    """
    learn = learn and not getattr(model, "frozen", False)
    if isinstance(stream, ExampleBatch) and hasattr(model, "score_and_learn"):
        return model.score_and_learn(stream, learn=learn)
    preds = []
    for ex in stream:
        preds.append(model.predict(ex.x, ex.y))
        if learn:
            model.learn(ex.x, ex.y)
    return np.asarray(preds, dtype=np.float64)


def progressive_validate(
    model,
    stream: ExampleBatch | Iterable[Example],
    delta: float = DEFAULT_DELTA,
    learn: bool = True,
    truth: Callable | None = None,
    model_config: dict | None = None,
) -> EvalReport:
    """Score each example before training on it (``learn=False`` gives holdout).

    ``truth(x, y)``, when supplied, returns the true P(y|x); the report then
    also carries the mean of ``(P(y|x) - f(x, y))**2``.
    """
    if not isinstance(stream, ExampleBatch):
        stream = list(stream)
    start = time.perf_counter()
    preds = score(model, stream, learn=learn)
    elapsed = time.perf_counter() - start
    regret = None
    if truth is not None and len(preds):
        true_p = np.array([truth(ex.x, ex.y) for ex in stream])
        regret = float(np.mean((true_p - preds) ** 2))
    return make_report(
        (1.0 - preds) ** 2, "progressive" if learn else "holdout", delta, elapsed, model_config, regret
    )


def holdout_evaluate(model, stream, delta: float = DEFAULT_DELTA, **kwargs) -> EvalReport:
    return progressive_validate(model, stream, delta, learn=False, **kwargs)


def best_possible(stream, delta: float = DEFAULT_DELTA) -> EvalReport:
    """Empirical-frequency table fitted on the evaluation stream itself, scored on it."""
    if not isinstance(stream, ExampleBatch):
        stream = ExampleBatch.from_examples(stream)
    table = TableModel()
    table.fit(stream)
    start = time.perf_counter()
    preds = table.score_and_learn(stream, learn=False)
    return make_report((1.0 - preds) ** 2, "best_possible", delta, time.perf_counter() - start)


def format_reports(rows: list[tuple[str, EvalReport]]) -> str:
    """Plain-text table: method, mode, m, loss +- ci, equivalent labels."""
    header = f"{'method':<24} {'mode':<13} {'m':>9} {'squared loss':>20} {'equivalent':>11}"
    lines = [header, "-" * len(header)]
    for name, r in rows:
        if not r.defined:
            lines.append(f"{name:<24} {r.mode:<13} {0:>9} {'undefined':>20} {'-':>11}")
            continue
        loss = f"{r.mean_loss:.4f} +- {r.ci_halfwidth:.5f}"
        lines.append(f"{name:<24} {r.mode:<13} {r.m:>9} {loss:>20} {r.equivalent_labels:>11.2f}")
    return "\n".join(lines)
