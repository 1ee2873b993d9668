import json

import numpy as np
import pytest
import yaml

from kgbohm.cli import main
from kgbohm.config import load_scenario, save_scenario, scenario_from_dict
from kgbohm.errors import ConfigError
from kgbohm.scenarios import BUILTIN_NAMES, builtin_document, load_builtin


# -- configuration loading -----------------------------------------------------

@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_builtin_documents_validate(name):
    scenario = load_builtin(name)
    assert scenario.psi.particles >= 1
    assert scenario.name == name


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_round_trip_field_equality(name, tmp_path):
    scenario = load_builtin(name)
    path = tmp_path / "cfg.yaml"
    save_scenario(scenario, path)
    again = load_scenario(path)
    assert again.to_dict() == scenario.to_dict()


def test_missing_mass_names_the_field():
    doc = builtin_document("planewave")
    del doc["wavefunction"]["mass"]
    with pytest.raises(ConfigError) as err:
        scenario_from_dict(doc)
    assert "wavefunction.mass" in str(err.value)


def test_unknown_field_rejected():
    doc = builtin_document("planewave")
    doc["wavefunction"]["charge"] = 1
    with pytest.raises(ConfigError) as err:
        scenario_from_dict(doc)
    assert "charge" in str(err.value)


def test_bad_velocity_law_rejected():
    doc = builtin_document("planewave")
    doc["integrator"]["velocity_law"] = "warp"
    with pytest.raises(ConfigError) as err:
        scenario_from_dict(doc)
    assert "velocity_law" in str(err.value)


def test_terms_and_packet_are_exclusive():
    doc = builtin_document("planewave")
    doc["wavefunction"]["gaussian_packet"] = {"center": [0, 0, 0], "sigma": 0.01}
    with pytest.raises(ConfigError):
        scenario_from_dict(doc)


def test_yaml_parse_error_reports_position(tmp_path):
    path = tmp_path / "broken.yaml"
    path.write_text("wavefunction:\n  mass: [unclosed\n")
    with pytest.raises(ConfigError) as err:
        load_scenario(path)
    assert "line" in str(err.value)


def test_start_shape_validation():
    doc = builtin_document("entangled-pair")
    doc["starts"] = [[0.0, 0.0, 0.0, 0.0]]  # one point for a two-particle state
    with pytest.raises(ConfigError) as err:
        scenario_from_dict(doc)
    assert "starts[0]" in str(err.value)


# -- command line ---------------------------------------------------------------

def _write(tmp_path, doc, name="cfg.yaml"):
    path = tmp_path / name
    with open(path, "w") as fh:
        yaml.safe_dump(doc, fh)
    return str(path)


def test_cli_simulate_plane_wave(tmp_path, capsys):
    cfg = _write(tmp_path, builtin_document("planewave"))
    code = main(["simulate", "--config", cfg, "--out", str(tmp_path / "out")])
    assert code == 0
    csv = (tmp_path / "out" / "trajectory_000.csv").read_text().splitlines()
    assert csv[0] == "s,t_1,x_1,y_1,z_1,vclass_1"
    assert csv[1].endswith(",T")
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["trajectories"][0]["termination"]["type"] == "reached_surface"


def test_cli_simulate_extra_start_and_smax_termination(tmp_path):
    doc = builtin_document("planewave")
    del doc["surfaces"]["sigma"]
    del doc["patches"]["sigma"]
    cfg = _write(tmp_path, doc)
    code = main(["simulate", "--config", cfg, "--out", str(tmp_path / "out"),
                 "--start", "0,0.5,0,0"])
    assert code == 0
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert len(manifest["trajectories"]) == 2
    assert manifest["trajectories"][1]["termination"]["type"] == "reached_s_max"


def test_cli_simulate_config_error_exit_2(tmp_path, capsys):
    doc = builtin_document("planewave")
    del doc["wavefunction"]["mass"]
    cfg = _write(tmp_path, doc)
    code = main(["simulate", "--config", cfg, "--out", str(tmp_path / "out")])
    assert code == 2
    assert "wavefunction.mass" in capsys.readouterr().err


def test_cli_simulate_node_start_exit_3(tmp_path):
    doc = {
        "wavefunction": {"mass": 1.0, "particles": 1, "terms": [
            {"coefficient": [1.0, 0.0], "modes": [{"momentum": [1.0, 0, 0], "sign": 1}]},
            {"coefficient": [1.0, 0.0], "modes": [{"momentum": [5.0, 0, 0], "sign": 1}]},
        ]},
        "starts": [[0.0, float(np.pi / 4), 0.0, 0.0]],
    }
    cfg = _write(tmp_path, doc)
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "out")]) == 3


def test_cli_classify_plane_wave(tmp_path):
    cfg = _write(tmp_path, builtin_document("planewave"))
    code = main(["classify", "--config", cfg, "--out", str(tmp_path / "out")])
    assert code == 0
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["summary"]["cells"]["sigma_minus"] == 0
    assert summary["summary"]["cells"]["sigma_plus"] == 0
    assert (tmp_path / "out" / "rho_grid.csv").exists()


def test_cli_classify_multi_particle_exit_2(tmp_path, capsys):
    cfg = _write(tmp_path, builtin_document("entangled-pair"))
    assert main(["classify", "--config", cfg, "--out", str(tmp_path / "out")]) == 2
    assert "single-particle" in capsys.readouterr().err


def test_cli_ensemble_initial_density_exit_4(tmp_path, capsys):
    doc = builtin_document("two-mode-neg-density")
    # shift the initial window onto a negative band
    doc["patches"]["sigma0"]["bounds"][0] = [0.0, 1.2]
    doc["ensemble"]["samples"] = 10
    cfg = _write(tmp_path, doc)
    code = main(["ensemble", "--config", cfg, "--out", str(tmp_path / "out")])
    assert code == 4
    assert "density" in capsys.readouterr().err


def test_cli_ensemble_unresolved_exit_5(tmp_path):
    doc = builtin_document("two-mode-neg-density")
    # an absurd node threshold floods the patch with unresolvable cells
    doc["node_threshold"] = 0.5
    doc["ensemble"]["samples"] = 10
    cfg = _write(tmp_path, doc)
    assert main(["ensemble", "--config", cfg, "--out", str(tmp_path / "out")]) == 5


def test_cli_verify_offshell_exit_1(tmp_path):
    assert main(["verify", "offshell-fixture", "--out", str(tmp_path)]) == 1
    report = json.loads((tmp_path / "verify_report.json").read_text())
    failed = [r for r in report if not r["passed"]]
    assert any(r["check"] == "wave_equation_residual" for r in failed)


def test_cli_verify_unknown_builtin_exit_2():
    assert main(["verify", "not-a-scenario"]) == 2


def test_cli_ensemble_small_run_files(tmp_path):
    doc = builtin_document("two-mode-neg-density")
    doc["ensemble"]["samples"] = 200
    cfg = _write(tmp_path, doc)
    code = main(["ensemble", "--config", cfg, "--out", str(tmp_path / "out"),
                 "--threads", "1"])
    assert code == 0
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["comparison"]["counts"]["paired_interior"] == 0
    assert report["comparison"]["n_samples"] == 200
    hist = (tmp_path / "out" / "histogram.csv").read_text().splitlines()
    assert len(hist) == 1 + 1000


def test_thread_count_env_fallback(monkeypatch):
    from kgbohm.cli import _thread_count

    class Args:
        threads = None

    monkeypatch.setenv("KG_BOHM_THREADS", "3")
    assert _thread_count(Args()) == 3
    monkeypatch.setenv("KG_BOHM_THREADS", "junk")
    assert _thread_count(Args()) >= 1
    Args.threads = 2
    assert _thread_count(Args()) == 2
