import csv
import json

import pytest

from coopsense.accuracy import AccuracyEstimator, as_arrays, generate_training_set
from coopsense.cli import RESULT_COLUMNS, ConfigError, ExperimentConfig, main, run_experiment
from coopsense.scene import make_default_scenario, save_scenario

SMALL_GA = {"J": 8, "Gamma": 5}


@pytest.fixture(scope="module")
def model_file(tmp_path_factory):
    X, y = as_arrays(generate_training_set(1, 200, K=3))
    path = tmp_path_factory.mktemp("model") / "model.json"
    AccuracyEstimator(epochs=20).fit(X, y).save(path)
    return path


def read_rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_default_sweep_has_twenty_rows(tmp_path, model_file):
    out = tmp_path / "out"
    assert main(["--model", str(model_file), "--out", str(out)]) == 0
    rows = read_rows(out / "results.csv")
    assert tuple(rows[0]) == RESULT_COLUMNS
    assert len(rows) == 1 + 5 * 4
    assert {r[0] for r in rows[1:]} == {"all", "unified", "nearest", "centralized", "proposed"}
    assert all(r[-1] == "" for r in rows[1:])  # elapsed_ms only with --timing
    summary = (out / "summary.txt").read_text()
    assert "dominance" in summary and summary.count("epsilon=") == 4
    hist = read_rows(out / "elite_history.csv")
    assert hist[0] == ["scheme", "epsilon", "A", "generation", "cost"]


def test_results_are_byte_identical(tmp_path, model_file):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({"ga": SMALL_GA, "epsilon": [10000, 30000], "model": str(model_file)}))
    assert main(["--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert main(["--config", str(cfg), "--out", str(tmp_path / "b"), "--workers", "3"]) == 0
    a = (tmp_path / "a" / "results.csv").read_bytes()
    assert a == (tmp_path / "b" / "results.csv").read_bytes()


def test_flags_override_config(tmp_path, model_file):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({"schemes": ["all"], "epsilon": [1e4, 2e4, 3e4]}))
    out = tmp_path / "o"
    rc = main(["--config", str(cfg), "--model", str(model_file), "--scheme", "nearest,unified",
               "--epsilon", "20000", "--accuracy-req", "0.7,0.9", "--out", str(out), "--timing"])
    assert rc == 0
    rows = read_rows(out / "results.csv")[1:]
    assert [(r[0], r[1], r[2]) for r in rows] == [("nearest", "20000.0", "0.7"), ("unified", "20000.0", "0.7"),
                                                  ("nearest", "20000.0", "0.9"), ("unified", "20000.0", "0.9")]
    assert all(float(r[-1]) >= 0 for r in rows)


def test_scenario_file_input(tmp_path, model_file):
    path = tmp_path / "scene.json"
    save_scenario(make_default_scenario(2), path, params={"epsilon": 20000})
    out = tmp_path / "o"
    cfg = ExperimentConfig(scenario=str(path), model=str(model_file), schemes=["nearest"],
                           epsilon=[20000], out=str(out))
    run_experiment(cfg)
    assert len(read_rows(out / "results.csv")) == 2


def test_missing_scenario_names_path(tmp_path, capsys):
    missing = tmp_path / "nope.json"
    assert main(["--scenario", str(missing), "--out", str(tmp_path)]) == 2
    assert str(missing) in capsys.readouterr().err
    with pytest.raises(ConfigError) as info:
        ExperimentConfig(scenario=str(missing)).validate()
    assert info.value.field == "scenario"


@pytest.mark.parametrize("doc, field", [
    ({"colour": 1}, "colour"),
    ({"K": 7}, "K"),
    ({"epsilon": []}, "epsilon"),
    ({"accuracy_req": [1.2]}, "accuracy_req"),
    ({"schemes": ["magic"]}, "schemes"),
    ({"ga": {"J": 1}}, "ga"),
    ({"params": {"omega": 2}}, "params"),
])
def test_config_errors_name_the_field(doc, field):
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_dict(doc).validate()
    assert info.value.field == field


def test_bad_config_file_exit_code(tmp_path, capsys):
    cfg = tmp_path / "exp.json"
    cfg.write_text("{not json")
    assert main(["--config", str(cfg)]) == 2
    assert "config" in capsys.readouterr().err


def test_train_flag_writes_model(tmp_path):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({"training": {"count": 60, "epochs": 3}, "schemes": ["all"],
                               "epsilon": [30000], "K": 2}))
    out = tmp_path / "o"
    assert main(["--config", str(cfg), "--train", "--out", str(out)]) == 0
    model = AccuracyEstimator.load(out / "model.json")
    assert model.K_ == 2
    rows = read_rows(out / "results.csv")
    assert rows[1][3] == "2"


def test_model_K_mismatch(tmp_path, model_file, capsys):
    assert main(["--model", str(model_file), "--K", "2", "--out", str(tmp_path)]) == 2
    assert "K=3" in capsys.readouterr().err
