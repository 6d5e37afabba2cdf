import json
from pathlib import Path

import pytest

from vedsa import cli
from vedsa.gradchecks import CheckResult
from vedsa.ingest import read_canonical

DATA = Path(__file__).parent / "data"


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_no_arguments_is_usage(capsys):
    assert run() == 2
    assert "usage" in capsys.readouterr().err


def test_unknown_subcommand_and_flag(capsys):
    assert run("explode") == 2
    assert run("sweep", "--bogus") == 2
    assert run("--help") == 0


def test_gradcheck_exit_codes(monkeypatch, capsys):
    assert run("gradcheck", "--repeats", "1", "--only", "dense", "survival_loss") == 0
    assert "PASS dense" in capsys.readouterr().out
    monkeypatch.setattr(cli, "run_gradchecks", lambda *a, **k: [CheckResult("dense", 1e-3, 1e-6)])
    assert run("gradcheck") == 6
    assert "FAIL dense" in capsys.readouterr().out
    assert run("gradcheck", "--only", "nonsense") == 3


@pytest.mark.parametrize("name,src", [("twitter", "twitter"), ("digg", "digg_votes.csv"), ("weibo", "weibo.txt")])
def test_ingest_matches_golden(name, src, tmp_path, capsys):
    out = tmp_path / f"{name}.jsonl"
    assert run("ingest", "--dataset", name, "--input", DATA / src, "-o", out) == 0
    assert out.read_bytes() == (DATA / "golden" / f"{name}.jsonl").read_bytes()
    info = json.loads(capsys.readouterr().out)
    assert info["cascade_count"] == 10


def test_error_categories(tmp_path, capsys):
    assert run("ingest", "--dataset", "digg", "--input", tmp_path / "missing.csv") == 4
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"format": "other"}\n')
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"dataset": "canonical", "data_path": str(bad), "zeta2": 5}))
    assert run("train-gamma", "--config", cfg) == 4
    assert run("sweep", "--config", cfg, "--set", "windows=[100]") == 3
    assert run("sweep", "--set", "nonsense=1") == 3
    assert run("train-delta", "--config", cfg) == 3


def test_overrides():
    r = cli.apply_overrides(cli.RunConfig(), ["gamma.epochs=3", "windows=[2,4]", "dataset=digg", "split.seed=9"])
    assert r.gamma == {"epochs": 3} and r.windows == [2, 4] and r.dataset == "digg" and r.split == {"seed": 9}


def test_pipeline_commands(tmp_path, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({
        "windows": [2, 24], "families": ["exponential"], "output_dir": str(tmp_path / "out"),
        "gamma": {"hidden_size": 8, "epochs": 5, "learning_rate": 0.01},
        "delta": {"epochs": 5, "learning_rate": 0.01},
    }))
    syn = tmp_path / "syn.jsonl"
    assert run("synth", "--config", cfg, "--family", "exponential", "--set", "max_len=24", "-o", syn) == 0
    assert len(list(read_canonical(syn))) == 500
    assert syn.with_suffix(".truth.jsonl").exists()
    common = ["--config", cfg, "--set", f"data_path={syn}", "--set", "zeta2=100"]
    assert run("train-gamma", *common) == 0
    gamma = tmp_path / "out" / "gamma-exponential.npz"
    assert run("train-delta", *common, "--gamma", gamma, "--window", 2) == 0
    delta = tmp_path / "out" / "delta-exponential-2h.npz"
    assert run("eval", *common, "--gamma", gamma, "--delta", delta, "--window", 2) == 0
    assert (tmp_path / "out" / "eval.csv").read_text().startswith("dataset,family,window_hours,class")
    preds = tmp_path / "p.jsonl"
    assert run("predict", *common, "--gamma", gamma, "--delta", delta, "--window", 2, "--input", syn, "-o", preds) == 0
    rows = [json.loads(x) for x in preds.read_text().splitlines()]
    assert len(rows) == 500 and set(rows[0]) == {"id", "p", "label"}
    assert run("predict", *common, "--window", 2) == 3


def test_sweep_reproducible_and_golden(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    cfg = DATA / "golden" / "sweep_run.json"
    assert run("sweep", "--config", cfg, "-o", a) == 0
    assert run("sweep", "--config", cfg, "-o", b) == 0
    assert a.read_bytes() == b.read_bytes() == (DATA / "golden" / "sweep.csv").read_bytes()


def test_sweep_digg_grid(tmp_path):
    out = tmp_path / "grid.csv"
    code = run("sweep", "--config", DATA / "digg_run.json", "--set", f"data_path={DATA / 'digg_votes.csv'}", "-o", out)
    assert code == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 1 + 3 * 6 * 3
    cells = {tuple(line.split(",")[1:3]) for line in lines[1:]}
    assert cells == {(f, str(w)) for f in ("weibull", "exponential", "rayleigh") for w in (2, 6, 10, 14, 18, 24)}
