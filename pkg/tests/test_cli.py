import csv
import io
import re
import subprocess
import sys

import numpy as np
import pytest

from sentinel import cli
from sentinel.errors import TrainingDiverged
from sentinel.pipeline import ModelSet


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Legit training trace, attacked test trace and test-profile models."""
    root = tmp_path_factory.mktemp("cli")
    assert run("gen", "--duration", "240s", "--seed", "1", "--out", root / "train") == 0
    assert run("gen", "--duration", "240s", "--seed", "2", "--attack", "frequency-shift", "--bursts", "3",
               "--dur", "15s", "--out", root / "test") == 0
    assert run("train", "--trace", root / "train" / "trace.csv", "--profile", "test", "--epochs", "3",
               "--out", root / "models") == 0
    return root


def last_error_line(err):
    lines = [l for l in err.splitlines() if l.startswith("error[")]
    assert len(lines) == 1
    return lines[0]


def test_gen_writes_trace_and_labels(workdir):
    trace = (workdir / "test" / "trace.csv").read_text()
    labels = (workdir / "test" / "labels.csv").read_text().splitlines()
    assert trace.startswith("session_id,timestamp_ns,syscall\n")
    assert labels[0] == "session_id,start_ns,end_ns,kind" and len(labels) == 4
    assert (workdir / "train" / "labels.csv").read_text().splitlines() == ["session_id,start_ns,end_ns,kind"]


def test_gen_is_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert run("gen", "--duration", "60s", "--seed", "9", "--sessions", "2", "--attack", "order-shuffle",
                   "--at", "20s", "--out", tmp_path / name) == 0
    for f in ("trace.csv", "labels.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_train_writes_every_model(workdir):
    names = sorted(p.name for p in (workdir / "models").iterdir())
    assert names == ["lstm.model", "manifest.json", "ocsvm.model", "pca.model"]
    models = ModelSet.load(workdir / "models")
    assert models.interval_ns == 1_000_000_000
    assert models.models["lstm"].hyperparams.hidden_units == 16


def test_single_detector_training(workdir, tmp_path):
    assert run("train", "--trace", workdir / "train" / "trace.csv", "--detector", "lstm", "--profile", "test",
               "--epochs", "2", "--out", tmp_path / "m") == 0
    assert sorted(p.name for p in (tmp_path / "m").iterdir()) == ["lstm.model", "manifest.json"]


def test_profile_from_environment(workdir, tmp_path, monkeypatch):
    monkeypatch.setenv("SENTINEL_PROFILE", "test")
    assert run("train", "--trace", workdir / "train" / "trace.csv", "--detector", "lstm", "--epochs", "1",
               "--out", tmp_path / "m") == 0
    assert ModelSet.load(tmp_path / "m").models["lstm"].hyperparams.hidden_units == 16
    monkeypatch.setenv("SENTINEL_PROFILE", "gigantic")
    assert run("train", "--trace", workdir / "train" / "trace.csv", "--out", tmp_path / "n") == 2


def test_train_refuses_attack_windows(workdir, tmp_path, capsys):
    args = ["train", "--trace", workdir / "test" / "trace.csv", "--labels", workdir / "test" / "labels.csv",
            "--detector", "pca", "--out", tmp_path / "m"]
    assert run(*args) == 3
    assert "attack-labeled" in last_error_line(capsys.readouterr().err)
    assert run(*args, "--allow-attack-windows") == 0
    assert "dropping" in capsys.readouterr().err


def test_score_and_report(workdir, tmp_path, capsys):
    scores = tmp_path / "scores.csv"
    assert run("score", "--models", workdir / "models", "--trace", workdir / "test" / "trace.csv",
               "--labels", workdir / "test" / "labels.csv", "--out", scores) == 0
    rows = list(csv.DictReader(io.StringIO(scores.read_text())))
    assert {r["detector"] for r in rows} == {"pca", "ocsvm", "lstm"}
    lstm = [r for r in rows if r["detector"] == "lstm"]
    assert all(r["score"] == "" and r["flag"] == "" for r in lstm[:15])
    assert all(r["flag"] in "01" and r["score"] for r in lstm[15:])
    assert all(r["flag"] == "" for r in rows if r["detector"] != "lstm")

    out = tmp_path / "report"
    capsys.readouterr()
    assert run("report", "--scores", scores, "--labels", workdir / "test" / "labels.csv",
               "--models", workdir / "models", "--out", out) == 0
    summary = (out / "summary.csv").read_text()
    assert capsys.readouterr().out == summary
    table = list(csv.DictReader(io.StringIO(summary)))
    assert table[0]["scenario"] == "averaged"
    assert {r["detector"] for r in table} == {"pca", "ocsvm", "lstm"}
    assert len({r["scenario"] for r in table}) == 4
    svg = (out / "roc_averaged.svg").read_text()
    assert len(set(re.findall(r'id="roc-(pca|ocsvm|lstm)"', svg))) == 3
    for name in ("roc_averaged.csv", "scores_lstm.svg", "pca_explained_variance.svg"):
        assert (out / name).exists()


def test_eval_without_svg(workdir, tmp_path):
    scores = tmp_path / "scores.csv"
    run("score", "--models", workdir / "models", "--trace", workdir / "test" / "trace.csv",
        "--labels", workdir / "test" / "labels.csv", "--out", scores)
    assert run("eval", "--scores", scores, "--out", tmp_path / "ev", "--fpr-list", "0.2") == 0
    assert not list((tmp_path / "ev").glob("*.svg"))
    assert (tmp_path / "ev" / "summary.csv").read_text().startswith("scenario,detector,auc,tpr@0.2,")


def test_score_rejects_interval_mismatch(workdir, tmp_path, capsys):
    assert run("score", "--models", workdir / "models", "--trace", workdir / "test" / "trace.csv",
               "--interval", "500ms", "--out", tmp_path / "s.csv") == 3
    assert last_error_line(capsys.readouterr().err).startswith("error[")


def test_short_session_warns_and_leaves_lstm_unscored(workdir, tmp_path, capsys):
    trace = tmp_path / "short.csv"
    trace.write_text("".join(f"0,{i * 1_000_000_000 + 5},read\n" for i in range(10)))
    assert run("score", "--models", workdir / "models", "--trace", trace, "--out", tmp_path / "s.csv") == 0
    assert "shorter than 16 windows" in capsys.readouterr().err
    rows = list(csv.DictReader(io.StringIO((tmp_path / "s.csv").read_text())))
    assert all(r["score"] == "" for r in rows if r["detector"] == "lstm")


def write_scores(path, labels, detectors):
    lines = ["session_id,window_index,label,detector,score,flag"]
    for det, scores in detectors.items():
        lines += [f"0,{i},{int(y)},{det},{float(s)!r}," for i, (y, s) in enumerate(zip(labels, scores))]
    path.write_text("\n".join(lines) + "\n")


def test_eval_random_and_perfect_detectors(tmp_path, capsys):
    rng = np.random.default_rng(0)
    labels = rng.random(2000) < 0.2
    write_scores(tmp_path / "s.csv", labels, {"pca": rng.random(2000), "lstm": labels + rng.random(2000) * 0.5})
    assert run("eval", "--scores", tmp_path / "s.csv", "--out", tmp_path / "r") == 0
    rows = {r["detector"]: r for r in csv.DictReader(io.StringIO(capsys.readouterr().out))}
    assert abs(float(rows["pca"]["auc"]) - 0.5) <= 0.05
    assert rows["lstm"]["auc"] == "1.000000"
    assert rows["lstm"]["n_attack"] == str(labels.sum())


def test_exit_codes_and_error_format(tmp_path, capsys):
    assert run() == 2
    assert run("gen", "--duration", "forever") == 2
    assert run("train", "--trace", tmp_path / "missing.csv") == 2
    assert run("gen", "--at", "5s", "--out", tmp_path) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("0,10,read\n0,5,read\n")
    assert run("train", "--trace", bad) == 3
    err = capsys.readouterr().err
    assert re.search(r"^error\[[a-z_-]+\]: .+$", err.strip().splitlines()[-1])
    assert run("eval", "--scores", bad) == 3
    assert run("score", "--models", tmp_path / "nothing", "--trace", bad) in (2, 3)


def test_training_failure_exits_4(workdir, tmp_path, monkeypatch, capsys):
    def boom(*a, **k):
        raise TrainingDiverged("loss became nan in epoch 1")
    monkeypatch.setattr("sentinel.pipeline.train_lstm", boom)
    assert run("train", "--trace", workdir / "train" / "trace.csv", "--detector", "lstm",
               "--out", tmp_path / "m") == 4
    assert last_error_line(capsys.readouterr().err).startswith("error[")


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "sentinel.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip().endswith("0.1.0")
