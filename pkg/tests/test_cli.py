import json
import os
from pathlib import Path

import pytest

from envclass import cli
from envclass.features import FeatureSetId

from regen_golden import GOLDEN, render


@pytest.mark.parametrize("name", ["envclass", "ingest", "extract", "train", "evaluate", "predict",
                                  "window-eval", "synth", "reproduce"])
def test_help_matches_golden(name, monkeypatch):
    monkeypatch.setenv("COLUMNS", "80")
    assert render()[name] == (GOLDEN / f"help_{name}.txt").read_text(encoding="utf-8")


def _err(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """A small dataset, its matrix and a dt registry, built through the CLI."""
    d = tmp_path_factory.mktemp("cli")
    assert cli.main(["synth", "--seed", "3", "--sessions-per-label", "4", "--records", "24",
                     "--out", str(d / "data.csv")]) == 0
    assert cli.main(["extract", "--dataset", str(d / "data.csv"), "--layout", "all72",
                     "--out", str(d / "m.csv")]) == 0
    (d / "reg").mkdir()
    for lid in FeatureSetId:
        assert cli.main(["train", "--matrix", str(d / "m.csv"), "--model", "dt", "--classes", "3",
                         "--layout", lid.value, "--seed", "1", "--max-depth", "6",
                         "--out", str(d / "reg" / f"dt_{lid.value}.bundle")]) == 0
    return d


def test_pipeline_outputs(workdir):
    assert (workdir / "m.csv.normalizer.json").exists()
    assert len(list((workdir / "reg").glob("*.bundle"))) == 4
    echo = json.loads((workdir / "reg" / "dt_best4.bundle.config.json").read_text())
    assert echo["seed"] == 1 and echo["max_depth"] == 6 and "out" not in echo


def test_evaluate(workdir):
    out = workdir / "eval"
    assert cli.main(["evaluate", "--registry", str(workdir / "reg"), "--dataset", str(workdir / "data.csv"),
                     "--classes", "3", "--techniques", "none,mv", "--out", str(out)]) == 0
    doc = json.loads((out / "metrics.json").read_text())
    assert {r["technique"] for r in doc["reports"]} == {"none", "mv"}
    assert (out / "manifest.json").exists() and (out / "run_config.json").exists()


def test_predict_and_window_eval(workdir):
    assert cli.main(["predict", "--registry", str(workdir / "reg"), "--input", str(workdir / "data.csv"),
                     "--technique", "mv", "--out", str(workdir / "p.csv")]) == 0
    header = (workdir / "p.csv").read_text().splitlines()[0]
    assert header == "session_id,window_or_record_index,routed_layout,predicted_class,true_class"
    assert cli.main(["window-eval", "--dataset", str(workdir / "data.csv"), "--technique", "da",
                     "--bundle", str(workdir / "reg" / "dt_all72.bundle"), "--out", str(workdir / "w.json")]) == 0
    doc = json.loads((workdir / "w.json").read_text())
    assert doc["technique"] == "da" and doc["windows"]["evaluated"] == doc["n_samples"] == 48
    assert sum(map(sum, doc["confusion"])) == 48


def test_missing_layout_exit_1(workdir, tmp_path, capsys):
    for f in (workdir / "reg").glob("*.bundle"):
        if "no6ghz67" not in f.name:
            (tmp_path / f.name).write_bytes(f.read_bytes())
    code = cli.main(["evaluate", "--registry", str(tmp_path), "--dataset", str(workdir / "data.csv"),
                     "--classes", "3", "--out", str(tmp_path / "e")])
    assert code == 1
    err = _err(capsys)
    assert "no6ghz67" in err["message"] and err["error"] == "RegistryError"


def test_train_without_seed_exits_2(workdir, capsys):
    code = cli.main(["train", "--matrix", str(workdir / "m.csv"), "--model", "dt", "--classes", "3",
                     "--layout", "best4"])
    assert code == 2
    assert "--seed" in capsys.readouterr().err


def test_unknown_flag_exits_2():
    assert cli.main(["synth", "--seed", "1", "--bogus"]) == 2


def test_unknown_config_key_exits_2(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"sede": 4}))
    assert cli.main(["synth", "--config", str(tmp_path / "c.json"), "--out", str(tmp_path / "x.csv")]) == 2


def test_config_overrides_flags(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"seed": 9, "sessions_per_label": 1, "records": 6}))
    assert cli.main(["synth", "--seed", "1", "--config", str(tmp_path / "c.json"),
                     "--out", str(tmp_path / "a.csv")]) == 0
    assert cli.main(["synth", "--seed", "9", "--sessions-per-label", "1", "--records", "6",
                     "--out", str(tmp_path / "b.csv")]) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert json.loads((tmp_path / "a.csv.config.json").read_text())["seed"] == 9


def test_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "outdir"))
    assert cli.main(["synth", "--seed", "2", "--sessions-per-label", "1", "--records", "6"]) == 0
    assert any((tmp_path / "outdir").iterdir())


def test_runtime_error_is_json(tmp_path, capsys):
    code = cli.main(["extract", "--dataset", str(tmp_path / "missing.csv"), "--layout", "best4", "--out", str(tmp_path / "m.csv")])
    assert code == 1
    assert set(_err(capsys)) == {"error", "message"}
