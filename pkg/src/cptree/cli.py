"""Command line driver: ``cptree train | eval | verify-bounds | synth | curve``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error
(unreadable or malformed input, unknown label, capacity, bad model file),
3 a bound check failed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import modelfile
from .baselines import OvaModel, TableModel
from .cpecoc import KWayTree, format_curve, tradeoff_curve
from .cpt import Tree
from .data import DEFAULT_HASH_SEED, ExampleBatch
from .errors import (
    CapacityError,
    ConfigError,
    CptreeError,
    LabelNotFoundError,
    ModelFormatError,
    ParseError,
)
from .evaluation import DEFAULT_DELTA, best_possible, format_reports, progressive_validate
from .pecoc import PecocModel
from .regressor import DEFAULT_DECAY, DEFAULT_ETA0
from .synth import GroundTruth, SynthConfig, describe, generate, synth_paths, write_examples

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_BOUND = 0, 1, 2, 3
MODEL_DIR_ENV = "CPTREE_MODEL_DIR"
METHODS = modelfile.METHODS
DEFAULT_ALPHA = 0.5
DEFAULT_K = 4
DEFAULT_BITS = 18


class UsageError(CptreeError):
    pass


@dataclass
class RunConfig:
    method: str = "cpt-online"
    alpha: float | None = None
    k: int | None = None
    bits: int = DEFAULT_BITS
    eta0: float = DEFAULT_ETA0
    decay: float = DEFAULT_DECAY
    passes: int = 1
    delta: float = DEFAULT_DELTA
    seed: int = 0
    hash_seed: int = DEFAULT_HASH_SEED
    shape: str = "balanced"
    train: str | None = None
    test: str | None = None
    model: str | None = None
    report: str | None = None
    extra: dict = field(default_factory=dict)

    def validate(self) -> "RunConfig":
        if self.method not in METHODS:
            raise UsageError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if self.alpha is not None and self.method != "cpt-online":
            raise UsageError("--alpha applies to cpt-online only")
        if self.k is not None and self.method != "cpecoc":
            raise UsageError("--k applies to cpecoc only")
        if self.method != "cpt-static" and self.shape != "balanced":
            raise UsageError("--shape applies to cpt-static only")
        if self.passes < 1:
            raise UsageError("--passes must be at least 1")
        if self.method == "cpt-online" and self.alpha is None:
            self.alpha = DEFAULT_ALPHA
        if self.method == "cpecoc" and self.k is None:
            self.k = DEFAULT_K
        return self

    def model_config(self) -> dict:
        keep = ("method", "alpha", "k", "bits", "eta0", "decay", "passes", "seed", "hash_seed", "shape")
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name in keep}


def resolve_model_path(path: str | None, method: str | None = None) -> Path:
    """Relative paths resolve under $CPTREE_MODEL_DIR when it is set."""
    base = os.environ.get(MODEL_DIR_ENV)
    if path is None:
        if not base:
            raise UsageError(f"--model is required (or set {MODEL_DIR_ENV})")
        return Path(base) / f"{method or 'model'}.cpt"
    p = Path(path)
    if base and not p.is_absolute() and p.parent == Path("."):
        return Path(base) / p
    return p


def _labels_in_order(batch: ExampleBatch) -> list[str]:
    return list(dict.fromkeys(batch.labels))


def build_model(cfg: RunConfig, batch: ExampleBatch):
    m = cfg.method
    if m == "cpt-online":
        return Tree(cfg.bits, alpha=cfg.alpha, eta0=cfg.eta0, decay=cfg.decay, seed=cfg.seed)
    if m == "cpt-balanced":
        return Tree(cfg.bits, alpha=1.0, eta0=cfg.eta0, decay=cfg.decay, seed=cfg.seed)
    if m == "cpt-random":
        return Tree(cfg.bits, eta0=cfg.eta0, decay=cfg.decay, growth="random", seed=cfg.seed)
    labels = _labels_in_order(batch)
    if not labels:
        raise ConfigError(f"{m} needs at least one training example to fix its label set")
    if m == "cpt-static":
        return Tree.static(labels, cfg.bits, shape=cfg.shape, seed=cfg.seed, eta0=cfg.eta0, decay=cfg.decay)
    if m == "pecoc":
        return PecocModel(max(len(labels), 2), cfg.bits, cfg.eta0, cfg.decay, labels)
    if m == "cpecoc":
        return KWayTree(labels, cfg.k, cfg.bits, cfg.eta0, cfg.decay)
    if m == "ova":
        return OvaModel(cfg.bits, cfg.eta0, cfg.decay)
    return TableModel(cfg.hash_seed)


def train_model(model, batch: ExampleBatch, passes: int) -> None:
    if hasattr(model, "fit"):
        model.fit(batch, passes)
        return
    for _ in range(passes):
        for ex in batch:
            model.train(ex.x, ex.y)


def summarize(model, cfg: RunConfig, n_examples: int, elapsed: float) -> dict:
    passes = cfg.passes
    out = {
        "method": cfg.method,
        "examples": n_examples,
        "passes": passes,
        "seconds": round(elapsed, 6),
        "examples_per_sec": (n_examples * passes / elapsed) if elapsed > 0 else None,
    }
    if isinstance(model, Tree):
        out.update(
            labels=model.n_labels if not model.static else len(model.labels),
            nodes=model.n_nodes,
            max_depth=model.max_depth,
            disagreements=model.disagreements,
            total_leaf_depth=model.total_leaf_depth,
            max_updates_per_example=model.max_updates_per_example,
        )
    elif isinstance(model, PecocModel):
        out.update(labels=len(model.labels), code_size=model.n_slots, regressors=model.n_slots - 1)
    elif isinstance(model, KWayTree):
        out.update(labels=len(model.labels), k=model.k, levels=model.levels, regressors=model.n_regressors)
    elif isinstance(model, OvaModel):
        out.update(labels=len(model))
    elif isinstance(model, TableModel):
        out.update(labels=len({y for _, y in model.counts}), contexts=len(model.totals))
    updates = getattr(model, "regressor_updates", None)
    if updates is not None and n_examples:
        out["updates_per_example"] = updates / (n_examples * passes)
    return out


def _append_jsonl(path, record: dict) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record, sort_keys=True) + "\n")


def _read_batch(path, bits: int, seed: int) -> ExampleBatch:
    if path is None:
        raise UsageError("an input file is required")
    return ExampleBatch.read(path, bits, seed)


def cmd_train(cfg: RunConfig, out=None) -> dict:
    out = out or sys.stdout
    cfg.validate()
    batch = _read_batch(cfg.train, cfg.bits, cfg.hash_seed)
    model = build_model(cfg, batch)
    start = time.perf_counter()
    train_model(model, batch, cfg.passes)
    elapsed = time.perf_counter() - start
    path = resolve_model_path(cfg.model, cfg.method)
    modelfile.save(path, model, cfg.method, cfg.hash_seed, {"config": cfg.model_config()})
    summary = summarize(model, cfg, len(batch), elapsed)
    summary["model"] = str(path)
    for key, value in summary.items():
        if isinstance(value, float):
            value = f"{value:.6g}"
        print(f"{key:<24} {value}", file=out)
    if cfg.report:
        _append_jsonl(cfg.report, {"kind": "train", **summary, "model_config": cfg.model_config()})
    return summary


def cmd_eval(cfg: RunConfig, holdout: bool = False, truth_path: str | None = None,
             save: str | None = None, best: bool = False, out=None):
    out = out or sys.stdout
    path = resolve_model_path(cfg.model, cfg.method if cfg.method in METHODS else None)
    model, header = modelfile.load(path)
    stored = header["method"]
    if cfg.method and cfg.method != stored:
        raise ModelFormatError(f"model file holds a {stored} model, not {cfg.method}")
    bits = header["state"].get("bits", cfg.bits)
    hash_seed = header["hash_seed"]
    batch = _read_batch(cfg.test, bits, hash_seed)
    truth = GroundTruth.read(truth_path, bits, hash_seed) if truth_path else None
    config = header.get("extra", {}).get("config", {"method": stored})
    report = progressive_validate(model, batch, cfg.delta, learn=not holdout, truth=truth, model_config=config)
    rows = [(stored, report)]
    if best:
        rows.append(("best possible", best_possible(batch, cfg.delta)))
    print(format_reports(rows), file=out)
    if cfg.report:
        for name, r in rows:
            _append_jsonl(cfg.report, {"kind": "eval", "name": name, **r.to_record()})
    if save:
        modelfile.save(resolve_model_path(save, stored), model, stored, hash_seed, header.get("extra"))
    return report


def cmd_verify_bounds(trials: int | None, seed: int, suites, report: str | None, out=None) -> bool:
    out = out or sys.stdout
    from .verify import SUITES, run_all

    results = run_all(trials, seed, suites or SUITES)
    ok = True
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        note = " (vacuous: 0 trials)" if r.details.get("vacuous") else ""
        print(f"{status} {r.name:<14} trials={r.trials:<7} violations={r.violations:<4} "
              f"worst_ratio={r.worst_ratio:.4f} time={r.elapsed:.2f}s{note}", file=out)
        ok &= r.passed
        if report:
            _append_jsonl(report, {"kind": "verify", **r.to_record()})
    return ok


def cmd_synth(cfg: SynthConfig, prefix: str, out=None) -> dict:
    out = out or sys.stdout
    data = generate(cfg)
    paths = synth_paths(prefix)
    write_examples(paths["train"], data.train.labels, data.train_contexts, data.train_sessions, data.truth)
    write_examples(paths["test"], data.test.labels, data.test_contexts, data.test_sessions, data.truth)
    data.truth.write(paths["truth"])
    info = {**describe(data), **{k: str(v) for k, v in paths.items()}}
    for key, value in info.items():
        print(f"{key:<28} {value}", file=out)
    return info


def cmd_curve(n: int, out_path: str | None, out=None) -> str:
    out = out or sys.stdout
    text = format_curve(tradeoff_curve(n))
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
    else:
        out.write(text)
    return text


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_learning(p):
    p.add_argument("--method", choices=METHODS, default="cpt-online")
    p.add_argument("--alpha", type=float, help="balance weight in (0, 1]; cpt-online only")
    p.add_argument("--k", type=int, help="branching factor (power of two); cpecoc only")
    p.add_argument("--shape", choices=("balanced", "random"), default="balanced", help="cpt-static only")
    p.add_argument("--bits", type=int, default=DEFAULT_BITS, help="feature hash width")
    p.add_argument("--eta0", type=float, default=DEFAULT_ETA0)
    p.add_argument("--decay", type=float, default=DEFAULT_DECAY)
    p.add_argument("--passes", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hash-seed", type=int, default=DEFAULT_HASH_SEED)


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cptree", description="Label probability trees and baselines.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train a model and save it")
    _add_learning(p)
    p.add_argument("--train", required=True, help="training examples")
    p.add_argument("--model", help=f"output model path (relative names go under ${MODEL_DIR_ENV})")
    p.add_argument("--report", help="append a JSON line here")

    p = sub.add_parser("eval", help="progressive or holdout evaluation of a saved model")
    p.add_argument("--model", help="model file")
    p.add_argument("--method", choices=METHODS, help="expected method; mismatch is an error")
    p.add_argument("--test", required=True)
    p.add_argument("--holdout", action="store_true", help="freeze the model instead of learning as it goes")
    p.add_argument("--delta", type=float, default=DEFAULT_DELTA)
    p.add_argument("--truth", help="ground-truth file from `synth`, adds true regret")
    p.add_argument("--best", action="store_true", help="also report the test-set frequency table")
    p.add_argument("--save", help="write the model after progressive evaluation")
    p.add_argument("--report", help="append JSON lines here")

    p = sub.add_parser("verify-bounds", help="randomised checks of the error and depth guarantees")
    p.add_argument("--trials", type=int, help="instances per suite (0: vacuous pass)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--suite", action="append", help="run only this suite (repeatable)")
    p.add_argument("--report", help="append JSON lines here")

    p = sub.add_parser("synth", help="write a synthetic stream with known P(y|x)")
    p.add_argument("--out", required=True, help="prefix for .train/.test/.truth")
    defaults = SynthConfig()
    for f in fields(SynthConfig):
        flag = "--" + f.name.replace("_", "-")
        p.add_argument(flag, type=type(getattr(defaults, f.name)), default=getattr(defaults, f.name))

    p = sub.add_parser("curve", help="bound multiplier against k for a k-way tree")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out")
    return parser


def run(argv=None, out=None) -> int:
    out = out or sys.stdout
    args = make_parser().parse_args(argv)
    cmd = args.command
    if cmd == "train":
        cfg = RunConfig(
            method=args.method, alpha=args.alpha, k=args.k, bits=args.bits, eta0=args.eta0,
            decay=args.decay, passes=args.passes, seed=args.seed, hash_seed=args.hash_seed,
            shape=args.shape, train=args.train, model=args.model, report=args.report,
        )
        cmd_train(cfg, out)
    elif cmd == "eval":
        cfg = RunConfig(method=args.method, test=args.test, model=args.model, delta=args.delta, report=args.report)
        cmd_eval(cfg, args.holdout, args.truth, args.save, args.best, out)
    elif cmd == "verify-bounds":
        if not cmd_verify_bounds(args.trials, args.seed, args.suite, args.report, out):
            return EXIT_BOUND
    elif cmd == "synth":
        kw = {f.name: getattr(args, f.name) for f in fields(SynthConfig)}
        cmd_synth(SynthConfig(**kw), args.out, out)
    elif cmd == "curve":
        cmd_curve(args.n, args.out, out)
    return EXIT_OK


def main(argv=None) -> int:
    try:
        return run(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except (UsageError, ConfigError) as exc:
        print(f"cptree: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, LabelNotFoundError, CapacityError, ModelFormatError, OSError) as exc:
        print(f"cptree: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
