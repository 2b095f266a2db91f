import filecmp
import json

import pytest

from cptree import modelfile
from cptree.cli import EXIT_BOUND, EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from cptree.verify import SuiteResult


def write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n")
    return str(path)


@pytest.fixture
def small_files(tmp_path):
    train = write_lines(tmp_path / "train.txt", [f"l{i % 8} f{i % 5} g{i % 3}:0.5" for i in range(64)])
    test = write_lines(tmp_path / "test.txt", [f"l{i % 8} f{i % 5}" for i in range(32)])
    return tmp_path, train, test


def parse_summary(text):
    out = {}
    for line in text.splitlines():
        key, _, value = line.partition(" ")
        out[key] = value.strip()
    return out


def test_balanced_online_tree_depth(small_files, capsys):
    tmp, train, _ = small_files
    rc = main(["train", "--method", "cpt-online", "--alpha", "1", "--bits", "8",
               "--train", train, "--model", str(tmp / "m.cpt")])
    assert rc == EXIT_OK
    s = parse_summary(capsys.readouterr().out)
    assert s["labels"] == "8" and s["max_depth"] == "3"


def test_pecoc_code_size(tmp_path, capsys):
    train = write_lines(tmp_path / "t.txt", [f"y{i % 5} a b" for i in range(20)])
    assert main(["train", "--method", "pecoc", "--bits", "6", "--train", train,
                 "--model", str(tmp_path / "p.cpt")]) == EXIT_OK
    assert parse_summary(capsys.readouterr().out)["code_size"] == "8"


def test_training_is_deterministic(small_files):
    tmp, train, _ = small_files
    for name in ("a.cpt", "b.cpt"):
        assert main(["train", "--method", "cpt-random", "--seed", "4", "--bits", "8",
                     "--train", train, "--model", str(tmp / name)]) == EXIT_OK
    assert filecmp.cmp(tmp / "a.cpt", tmp / "b.cpt", shallow=False)


def test_eval_reports_delta_and_ci(small_files, capsys):
    tmp, train, test = small_files
    model = str(tmp / "m.cpt")
    main(["train", "--method", "ova", "--bits", "8", "--train", train, "--model", model])
    capsys.readouterr()
    report = tmp / "r.jsonl"
    rc = main(["eval", "--model", model, "--test", test, "--delta", "0.1", "--best",
               "--report", str(report)])
    assert rc == EXIT_OK
    out = capsys.readouterr().out
    assert "ova" in out and "best possible" in out and "+-" in out
    rows = [json.loads(line) for line in report.read_text().splitlines()]
    assert rows[0]["delta"] == 0.1 and rows[0]["m"] == 32 and rows[0]["ci_halfwidth"] > 0
    assert rows[0]["mode"] == "progressive"
    assert rows[1]["name"] == "best possible"


def test_unseen_labels_score_loss_one(tmp_path):
    train = write_lines(tmp_path / "tr.txt", [f"a{i % 3} f{i}" for i in range(10)])
    test = write_lines(tmp_path / "te.txt", [f"new{i} f{i}" for i in range(10)])
    for method in ("cpt-online", "table", "ova"):
        model = str(tmp_path / f"{method}.cpt")
        main(["train", "--method", method, "--bits", "8", "--train", train, "--model", model])
        report = tmp_path / f"{method}.jsonl"
        main(["eval", "--model", model, "--test", test, "--report", str(report)])
        rec = json.loads(report.read_text().splitlines()[0])
        assert rec["mean_loss"] == 1.0


def test_holdout_leaves_model_file_untouched(small_files):
    tmp, train, test = small_files
    model = tmp / "m.cpt"
    main(["train", "--bits", "8", "--train", train, "--model", str(model)])
    before = model.read_bytes()
    main(["eval", "--model", str(model), "--test", test, "--holdout", "--save", str(tmp / "after.cpt")])
    assert modelfile.load(tmp / "after.cpt")[0].structure_signature() == modelfile.load(model)[0].structure_signature()
    assert model.read_bytes() == before


def test_eval_with_truth_reports_regret(tmp_path, capsys):
    prefix = tmp_path / "s"
    assert main(["synth", "--out", str(prefix), "--n-contexts", "20", "--n-labels", "30",
                 "--n-examples", "800", "--bits", "8", "--n-topics", "4", "--session-tokens", "4"]) == EXIT_OK
    main(["train", "--bits", "8", "--train", f"{prefix}.train", "--model", str(tmp_path / "m.cpt")])
    report = tmp_path / "r.jsonl"
    assert main(["eval", "--model", str(tmp_path / "m.cpt"), "--test", f"{prefix}.test",
                 "--truth", f"{prefix}.truth", "--report", str(report)]) == EXIT_OK
    rec = json.loads(report.read_text().splitlines()[0])
    assert rec["true_regret"] is not None and 0 <= rec["true_regret"] <= 1


def test_synth_files_are_deterministic(tmp_path):
    args = ["--n-contexts", "10", "--n-labels", "12", "--n-examples", "300", "--bits", "8", "--n-topics", "3"]
    main(["synth", "--out", str(tmp_path / "a"), *args])
    main(["synth", "--out", str(tmp_path / "b"), *args])
    for part in ("train", "test", "truth"):
        assert filecmp.cmp(tmp_path / f"a.{part}", tmp_path / f"b.{part}", shallow=False)


def test_model_dir_env(small_files, monkeypatch):
    tmp, train, _ = small_files
    monkeypatch.setenv("CPTREE_MODEL_DIR", str(tmp))
    assert main(["train", "--method", "table", "--bits", "8", "--train", train]) == EXIT_OK
    assert (tmp / "table.cpt").exists()
    assert main(["train", "--method", "table", "--bits", "8", "--train", train, "--model", "x.cpt"]) == EXIT_OK
    assert (tmp / "x.cpt").exists()


@pytest.mark.parametrize(
    "argv",
    [
        ["train", "--method", "pecoc", "--alpha", "0.5", "--train", "{train}"],
        ["train", "--method", "cpt-online", "--k", "4", "--train", "{train}"],
        ["train", "--method", "cpt-online", "--shape", "random", "--train", "{train}"],
        ["train", "--method", "cpt-online", "--alpha", "0", "--train", "{train}"],
        ["train", "--method", "bogus", "--train", "{train}"],
        ["train", "--bits", "40", "--train", "{train}"],
        ["train", "--train", "{train}"],
        ["frobnicate"],
    ],
)
def test_usage_errors(argv, small_files, monkeypatch):
    tmp, train, _ = small_files
    monkeypatch.delenv("CPTREE_MODEL_DIR", raising=False)
    argv = [a.format(train=train) for a in argv]
    assert main(argv) == EXIT_USAGE


def test_data_errors(small_files, tmp_path):
    tmp, train, test = small_files
    bad = write_lines(tmp_path / "bad.txt", ["ok f", "broken x:zz"])
    assert main(["train", "--train", bad, "--model", str(tmp / "m.cpt")]) == EXIT_DATA
    assert main(["train", "--train", str(tmp / "missing.txt"), "--model", str(tmp / "m.cpt")]) == EXIT_DATA
    model = str(tmp / "ova.cpt")
    main(["train", "--method", "ova", "--bits", "8", "--train", train, "--model", model])
    assert main(["eval", "--method", "table", "--model", model, "--test", test]) == EXIT_DATA
    (tmp / "junk.cpt").write_bytes(b"garbage")
    assert main(["eval", "--model", str(tmp / "junk.cpt"), "--test", test]) == EXIT_DATA


def test_pecoc_capacity_on_eval_is_skipped(tmp_path):
    train = write_lines(tmp_path / "tr.txt", [f"y{i % 4} f" for i in range(8)])
    test = write_lines(tmp_path / "te.txt", [f"z{i} f" for i in range(5)])
    model = str(tmp_path / "p.cpt")
    main(["train", "--method", "pecoc", "--bits", "6", "--train", train, "--model", model])
    assert main(["eval", "--model", model, "--test", test]) == EXIT_OK


def test_verify_vacuous_pass(capsys):
    with pytest.warns(UserWarning):
        rc = main(["verify-bounds", "--trials", "0", "--suite", "path-product"])
    assert rc == EXIT_OK
    assert "vacuous" in capsys.readouterr().out


def test_verify_small_run_passes(capsys):
    rc = main(["verify-bounds", "--trials", "200", "--suite", "path-product", "--suite", "pecoc-regret",
               "--suite", "kway-regret"])
    assert rc == EXIT_OK
    assert capsys.readouterr().out.count("PASS") == 3


def test_verify_violation_exit_code(monkeypatch):
    import cptree.verify as verify

    monkeypatch.setattr(verify, "run_all", lambda *a, **k: [SuiteResult("fake", 1, 1, 2.0, 0.0, {})])
    assert main(["verify-bounds", "--trials", "1"]) == EXIT_BOUND


def test_curve(tmp_path, capsys):
    assert main(["curve", "--n", "4096"]) == EXIT_OK
    rows = capsys.readouterr().out.strip().splitlines()[1:]
    mult = [float(r.split("\t")[1]) for r in rows]
    assert len(mult) == 12 and all(a > b for a, b in zip(mult, mult[1:]))
    assert main(["curve", "--n", "4096", "--out", str(tmp_path / "c.tsv")]) == EXIT_OK
    assert (tmp_path / "c.tsv").read_text().startswith("k\t")
    assert main(["curve", "--n", "100"]) == EXIT_USAGE
