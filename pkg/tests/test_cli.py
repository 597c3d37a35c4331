import json

import pytest

from wirelesscbc.cli import EXIT_INVALID, EXIT_OK, EXIT_USAGE, floor_decimals, main
from wirelesscbc.config import default_motor_config


@pytest.fixture
def scalar_config(tmp_path):
    doc = default_motor_config()
    doc["plant"] = {"A": [[0.9]], "B": [[1.0]], "sigma_w1": [[1e-4]], "sigma_w2": [[2.5e-5]]}
    doc["spec"] = {"X": [[-2.0, 2.0]], "X0": [[-0.2, 0.2]], "X1": [[[1.5, 2.0]]],
                   "U": [[-0.1, 0.1]], "T": 20}
    doc["synthesis"].update(refine_budget=150, budget=300)
    doc["simulation"].update(trajectories=20, horizon=20)
    doc["output"]["dir"] = str(tmp_path / "run")
    path = tmp_path / "scalar.json"
    path.write_text(json.dumps(doc))
    return path


def test_floor_decimals():
    assert floor_decimals(0.97686907) == 0.9768
    assert floor_decimals(0.9) == 0.9          # no spurious drop from 0.8999999...


def test_bound(capsys):
    assert main(["bound", "--eta", "0.0001306", "--c", "0.000166", "--beta", "0.7233",
                 "--T", "100"]) == EXIT_OK
    assert "guarantee >= 0.9768" in capsys.readouterr().out


def test_bound_vacuous(capsys):
    main(["bound", "--eta", "1", "--c", "0.1", "--beta", "1", "--T", "10"])
    assert "guarantee >= 0.0000" in capsys.readouterr().out


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as info:
        main(["bound", "--eta", "x"])
    assert info.value.code == EXIT_USAGE


def test_missing_config_exit_code(tmp_path, capsys):
    assert main(["certify", "--config", str(tmp_path / "nope.json")]) == EXIT_USAGE
    assert "cannot read" in capsys.readouterr().err


def test_certify_verify_simulate(scalar_config, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["certify", "--config", str(scalar_config)]) == EXIT_OK
    assert "guarantee >=" in capsys.readouterr().out
    cert = json.loads((out / "certificate.json").read_text())
    assert cert["beta"] > cert["eta"]
    for name in ("simulation.json", "summary.txt", "trajectories.csv", "config.json"):
        assert (out / name).exists()

    assert main(["verify", "--config", str(scalar_config),
                 "--certificate", str(out / "certificate.json")]) == EXIT_OK
    verdict = json.loads(capsys.readouterr().out)
    assert verdict["valid"] and verdict["epsilon_raw"] == pytest.approx(cert["epsilon_raw"])

    assert main(["simulate", "--config", str(scalar_config), "--certificate",
                 str(out / "certificate.json"), "--trajectories", "30"]) == EXIT_OK
    assert json.loads((out / "simulation.json").read_text())["trajectories"] == 30


def test_verify_rejects_bad_candidate(scalar_config, tmp_path, capsys):
    cand = tmp_path / "cand.json"
    cand.write_text(json.dumps({"P": [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]],
                                "F": [[0.0]]}))
    assert main(["verify", "--config", str(scalar_config),
                 "--certificate", str(cand)]) == EXIT_INVALID
    assert json.loads(capsys.readouterr().out)["valid"] is False


def test_infeasible_exit_code(scalar_config, tmp_path, capsys):
    doc = json.loads(scalar_config.read_text())
    doc["plant"] = {"A": [[1.2]], "B": [[0.0]]}
    path = tmp_path / "unstable.json"
    path.write_text(json.dumps(doc))
    assert main(["certify", "--config", str(path)]) == EXIT_INVALID
    assert "[search_gain]" in capsys.readouterr().err


def test_motor_emit_config_loads(capsys, tmp_path):
    assert main(["motor", "--emit-config", "--Ts", "2e-4"]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["plant"]["motor"]["Ts"] == 2e-4
    assert main(["motor"]) == EXIT_OK
    assert len(json.loads(capsys.readouterr().out)["A"]) == 2


def test_export_paper_candidate(tmp_path, capsys):
    assert main(["export-paper-candidate", "--out", str(tmp_path)]) == EXIT_OK
    doc = json.loads((tmp_path / "paper_candidate.json").read_text())
    # at the default Ts the published pair does not satisfy the drift inequality
    assert doc["verdict"]["valid"] is False
    assert doc["verdict"]["inequality_satisfied"] is False
    assert doc["verdict"]["drift_radius"] < 1.0
