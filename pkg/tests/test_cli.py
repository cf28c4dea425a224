import csv
import json

import numpy as np
import pytest

from anmf.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, main
from anmf.clutter import dump_batch_csv, generate_secondary, trial_rng
from anmf.errors import NumericalError
from anmf.model import Scenario, TextureModel
import anmf.cli as cli


@pytest.fixture
def cfg_path(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"N": 30, "n": 60, "b": {"re": 0, "im": 0.96}, "theta": 20, "a": 0.9,
                                "eta": [0.05], "seed": 1}))
    return path


def read_rows(path):
    with open(path) as fh:
        return list(csv.reader(line for line in fh if not line.startswith("#")))


def test_minimal_config_theory_curve(cfg_path, tmp_path):
    out = tmp_path / "curve.csv"
    assert main(["theory-curve", "--config", str(cfg_path), "--out", str(out)]) == EXIT_OK
    rows = read_rows(out)
    assert rows[0][:6] == ["rho", "m", "rho_bar", "sigma2", "g", "f"]
    assert len(rows) - 1 == 96  # 0.01 grid on [0.05, 1]
    text = out.read_text()
    assert '"seed": 1' in text and "versions:" in text


def test_rte_theory_curve_has_rho_bar(cfg_path, tmp_path):
    out = tmp_path / "curve.csv"
    assert main(["theory-curve", "--config", str(cfg_path), "--method", "rte", "--eta", "0.01,0.05",
                 "--out", str(out)]) == EXIT_OK
    rows = read_rows(out)
    assert rows[0][-3:] == ["eta_2", "r_2", "pd_2"]
    assert float(rows[-1][2]) == 1.0


@pytest.mark.parametrize("change,word", [({"b": {"re": 1.0, "im": 0.0}}, "b"), ({"eta": [1.5]}, "eta"),
                                         ({"colour": 3}, "colour"), ({"N": "many"}, "N")])
def test_bad_config_exits_2(tmp_path, capsys, change, word):
    cfg = {"N": 30, "n": 60, "eta": [0.05], "seed": 1}
    cfg.update(change)
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(cfg))
    assert main(["theory-curve", "--config", str(path)]) == EXIT_CONFIG
    assert word in capsys.readouterr().err


def test_bad_flags_exit_2(capsys):
    assert main(["theory-curve", "--rho", "sometimes"]) == EXIT_CONFIG
    assert main(["no-such-verb"]) == EXIT_CONFIG
    assert main(["theory-curve", "--config", "/nonexistent/cfg.json"]) == EXIT_CONFIG
    assert "/nonexistent/cfg.json" in capsys.readouterr().err


def test_numerical_failure_exits_3(cfg_path, monkeypatch):
    def boom(*args, **kwargs):
        raise NumericalError("forced")
    monkeypatch.setitem(cli.COMMANDS, "theory-curve", boom)
    assert main(["theory-curve", "--config", str(cfg_path)]) == EXIT_NUMERICAL


def test_optimize_rho_json_and_curve(cfg_path, tmp_path):
    out, curve = tmp_path / "d.json", tmp_path / "obj.csv"
    assert main(["optimize-rho", "--config", str(cfg_path), "--eta", "0.01,0.05", "--out", str(out),
                 "--curve", str(curve)]) == EXIT_OK
    doc = json.loads(out.read_text())
    assert 0.05 <= doc["rho_star"] <= 1
    assert len(doc["r_hat"]) == 2
    np.testing.assert_allclose(doc["gamma_threshold"], np.array(doc["r_hat"]) / np.sqrt(30))
    assert len(read_rows(curve)) > 10


def test_optimize_rho_reads_secondary(cfg_path, tmp_path):
    s = Scenario(30, 60, b=0.96j)
    batch = generate_secondary(trial_rng(5, 0, "secondary"), s.C_sqrt, TextureModel.one(), 60)
    data = tmp_path / "X.csv"
    dump_batch_csv(data, batch)
    out = tmp_path / "d.json"
    assert main(["optimize-rho", "--config", str(cfg_path), "--secondary", str(data), "--out", str(out)]) == EXIT_OK
    bad = Scenario(10, 20)
    dump_batch_csv(data, generate_secondary(trial_rng(5, 0, "secondary"), bad.C_sqrt, TextureModel.one(), 20))
    assert main(["optimize-rho", "--config", str(cfg_path), "--secondary", str(data)]) == EXIT_CONFIG


def test_simulate_roc_small_run(cfg_path, tmp_path):
    out = tmp_path / "roc.csv"
    assert main(["simulate-roc", "--config", str(cfg_path), "--trials", "10", "--eta", "0.01,0.05",
                 "--amplitudes", "0.5,0.9", "--out", str(out)]) == EXIT_OK
    rows = read_rows(out)
    assert rows[0] == ["method", "a", "eta_target", "threshold", "rho_mean", "pfa_emp", "pfa_ci", "pd_emp",
                       "pd_ci", "pd_theory"]
    assert len(rows) == 5
    assert all(float(r[8]) > 0.05 or float(r[7]) in (0.0, 1.0) for r in rows[1:])


@pytest.mark.parametrize("argv", [
    ["theory-curve"],
    ["optimize-rho", "--method", "rte"],
    ["simulate-roc", "--trials", "5", "--method", "rte", "--rho", "0.5"],
    ["calibrate-threshold", "--size", "50", "--rho", "0.5"],
])
def test_outputs_are_byte_identical(cfg_path, tmp_path, argv):
    a, b = tmp_path / "a.out", tmp_path / "b.out"
    assert main(argv + ["--config", str(cfg_path), "--out", str(a)]) == EXIT_OK
    assert main(argv + ["--config", str(cfg_path), "--out", str(b)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    text = a.read_text()
    if argv[0] == "optimize-rho":
        doc = json.loads(text)
        assert doc["config"]["seed"] == 1 and "meta" in doc
    else:
        assert text.startswith("# anmf ")


def test_seed_flag_overrides_config(cfg_path, tmp_path):
    a, b = tmp_path / "a.out", tmp_path / "b.out"
    main(["simulate-roc", "--config", str(cfg_path), "--trials", "5", "--out", str(a)])
    main(["simulate-roc", "--config", str(cfg_path), "--trials", "5", "--seed", "2", "--out", str(b)])
    assert '"seed": 2' in b.read_text()
    assert a.read_bytes() != b.read_bytes()


def test_unwritable_output(cfg_path, capsys):
    assert main(["theory-curve", "--config", str(cfg_path), "--out", "/nonexistent/dir/x.csv"]) == EXIT_CONFIG
    assert "/nonexistent/dir/x.csv" in capsys.readouterr().err
