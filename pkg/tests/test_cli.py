import hashlib
import json
import os
import subprocess
import sys

import numpy as np
import pytest
import yaml

from aeris import cli, data, pipeline
from aeris.synth import synth_data, synthesize

SMALL_MODELS = [
    {"kind": "ridge", "lam": 1.0},
    {"kind": "gbm", "n_estimators": 5, "max_depth": 2},
    {"kind": "mlp", "epochs": 2, "batch_size": 64},
    {"kind": "gru", "units": 4, "epochs": 1, "batch_size": 64, "lookback": 12},
]


def write_config(path, **over):
    doc = {"input": {"synth": {"seed": 3, "hours": 700}}, "seed": 3, "output": str(path.parent / "run"),
           "models": SMALL_MODELS}
    doc.update(over)
    path.write_text(yaml.safe_dump(doc))
    return str(path)


def digest(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


@pytest.fixture
def raw_csv(tmp_path):
    path = tmp_path / "raw.csv"
    synth_data(5, 600, str(path))
    return str(path)


# exit codes

def test_all_small_run(tmp_path):
    cfg = write_config(tmp_path / "c.yaml")
    assert cli.main(["--quiet", "all", "--config", cfg]) == 0
    run = tmp_path / "run"
    models = [l.split(",")[0] for l in (run / "report.csv").read_text().splitlines()[1:]]
    assert models[0] == "persistence" and len(set(models)) >= 4
    for name in ("clean.csv", "outliers.csv", "report.md", "config.yaml", "run.json", "models/index.json",
                 "models/mlp.loss.csv"):
        assert (run / name).exists(), name
    meta = json.loads((run / "run.json").read_text())
    assert meta["seed"] == 3 and "numpy" in meta["versions"]


def test_rerun_from_run_directory_is_identical(tmp_path):
    cfg = write_config(tmp_path / "c.yaml", models=SMALL_MODELS[:2])
    assert cli.main(["--quiet", "all", "--config", cfg]) == 0
    run = tmp_path / "run"
    first = digest(run / "report.csv")
    again = tmp_path / "again"
    assert cli.main(["--quiet", "all", "--config", str(run / "config.yaml"), "--out", str(again)]) == 0
    assert digest(again / "report.csv") == first


def test_model_failure_exits_one_and_keeps_others(tmp_path):
    models = [{"kind": "ridge"}, {"kind": "mlp", "name": "boom", "learning_rate": 1e200, "epochs": 2}]
    cfg = write_config(tmp_path / "c.yaml", models=models)
    assert cli.main(["--quiet", "all", "--config", cfg]) == 1
    run = tmp_path / "run"
    index = json.loads((run / "models/index.json").read_text())
    assert "boom" in index["failures"] and "TrainingError" in index["failures"]["boom"]
    assert "ridge," in (run / "report.csv").read_text()


def test_missing_input_exits_two(tmp_path, capsys):
    assert cli.main(["clean", "--input", str(tmp_path / "nope.csv"), "--out", str(tmp_path)]) == 2
    assert "not found" in capsys.readouterr().err


def test_evaluate_without_checkpoints_exits_two(tmp_path):
    cfg = write_config(tmp_path / "c.yaml")
    assert cli.main(["--quiet", "clean", "--config", cfg]) == 0
    assert cli.main(["--quiet", "evaluate", "--run", str(tmp_path / "run")]) == 2
    assert cli.main(["--quiet", "evaluate", "--run", str(tmp_path / "empty")]) == 2


def test_report_without_metrics_exits_two(tmp_path):
    assert cli.main(["report", "--run", str(tmp_path)]) == 2


def test_bad_config_exits_two(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump({"input": {"synth": {"seed": 1, "hours": 300}}, "seed": 1, "colour": 2}))
    assert cli.main(["all", "--config", str(bad)]) == 2
    cfg = write_config(tmp_path / "c.yaml", models=[{"kind": "prophet"}])
    assert cli.main(["all", "--config", cfg]) == 2
    assert cli.main(["all", "--config", str(tmp_path / "missing.yaml")]) == 2


def test_usage_error_exits_two():
    with pytest.raises(SystemExit) as err:
        cli.main(["train", "--jobs", "0", "--config", "synth"])
    assert err.value.code == 2


def test_console_entry_point(tmp_path):
    out = tmp_path / "s.csv"
    res = subprocess.run([sys.executable, "-m", "aeris.cli", "--quiet", "synth", "--seed", "1", "--hours", "300",
                          "--out", str(out)], capture_output=True, text=True)
    assert res.returncode == 0 and out.exists()


# staged subcommands

def test_staged_commands_match_all(tmp_path):
    cfg = write_config(tmp_path / "c.yaml", models=SMALL_MODELS[:1])
    assert cli.main(["--quiet", "train", "--config", cfg]) == 0  # cleans implicitly
    run = tmp_path / "run"
    assert cli.main(["--quiet", "evaluate", "--run", str(run)]) == 0
    staged = digest(run / "report.csv")
    assert cli.main(["--quiet", "all", "--config", cfg, "--out", str(tmp_path / "one")]) == 0
    assert digest(tmp_path / "one" / "report.csv") == staged


def test_report_prints_markdown(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.yaml", models=SMALL_MODELS[:1])
    cli.main(["--quiet", "all", "--config", cfg])
    capsys.readouterr()
    assert cli.main(["report", "--run", str(tmp_path / "run"), "--format", "md"]) == 0
    assert capsys.readouterr().out.startswith("| Family | Model |")


def test_clean_and_analyze_leave_inputs_untouched(tmp_path, raw_csv):
    before = digest(raw_csv)
    out = tmp_path / "c"
    assert cli.main(["--quiet", "clean", "--input", raw_csv, "--out", str(out), "--threshold", "5", "--span", "10"]) == 0
    assert digest(raw_csv) == before
    clean = str(out / "clean.csv")
    mid = digest(clean)
    assert cli.main(["--quiet", "analyze", "--input", clean, "--out", str(tmp_path / "a")]) == 0
    assert digest(clean) == mid
    assert len(os.listdir(tmp_path / "a" / "analysis")) >= 4


def test_analyze_rejects_uncleaned(tmp_path, raw_csv):
    assert cli.main(["analyze", "--input", raw_csv, "--out", str(tmp_path / "a")]) == 2


# config precedence

def test_flag_beats_config_beats_default(tmp_path):
    cfg = write_config(tmp_path / "c.yaml", cleaning={"ewma_span": 6})
    c = pipeline.load_config(cfg, {"seed": 11}, env={})
    assert c.seed == 11 and c.cleaning_config().ewma_span == 6 and c.split == 0.8
    c = pipeline.load_config(cfg, {"cleaning": {"ewma_span": 4}}, env={})
    assert c.seed == 3 and c.cleaning_config().ewma_span == 4


def test_seed_env_fallback(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump({"input": {"synth": {"seed": 1, "hours": 300}}}))
    assert pipeline.load_config(str(path), env={"AERIS_SEED": "21"}).seed == 21
    assert pipeline.load_config(str(path), {"seed": 2}, env={"AERIS_SEED": "21"}).seed == 2
    with pytest.raises(pipeline.ConfigError, match="seed"):
        pipeline.load_config(str(path), env={})


def test_builtin_synth_config():
    c = pipeline.load_config("synth", env={})
    assert c.seed == 7 and {"stacked-lstm", "gru", "patchtst"} <= {m["kind"] for m in c.models}


def test_synth_seed_from_env(tmp_path, monkeypatch):
    monkeypatch.setenv("AERIS_SEED", "4")
    out = tmp_path / "s.csv"
    assert cli.main(["--quiet", "synth", "--hours", "250", "--out", str(out)]) == 0
    monkeypatch.delenv("AERIS_SEED")
    assert cli.main(["synth", "--hours", "250", "--out", str(out)]) == 2
    assert cli.main(["synth", "--seed", "1", "--hours", "100", "--out", str(out)]) == 2


# synthetic data

def test_synth_is_seeded(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    synth_data(9, 400, str(a))
    synth_data(9, 400, str(b))
    assert digest(a) == digest(b)


def test_synth_spikes_all_caught():
    res = synthesize(7, 3000)
    cfg = data.CleaningConfig(outlier_threshold=5.0)
    blanked, _ = data.remove_outliers(res.frame, cfg)
    for col, rows in res.spikes.items():
        replaced = np.isnan(blanked[col]) & ~np.isnan(res.frame[col])
        assert replaced[rows].all(), col


def test_synth_clean_nonnegative_and_complete():
    res = synthesize(7, 2000)
    cleaned, _ = data.clean(res.frame, data.CleaningConfig())
    assert not any(cleaned.missing_count().values())
    assert all((cleaned[c] >= 0).all() for c in data.POLLUTANTS)


def test_synth_o3_no2_anticorrelated():
    res = synthesize(7, 5000)
    assert np.corrcoef(res.clean["O3"], res.clean["NO2"])[0, 1] < 0


def test_synth_csv_drops_rows(tmp_path):
    out = tmp_path / "s.csv"
    res = synth_data(7, 600, str(out))
    frame = data.parse_dataset(str(out))
    assert frame.n_rows == 600
    for r in res.dropped_rows:
        assert all(np.isnan(frame[c][r]) for c in data.SCHEMA)
