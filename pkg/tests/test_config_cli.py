import json
import os

import numpy as np
import pytest
import yaml

from volterra_mv.cli import main
from volterra_mv.config import ExperimentConfig, config_from_dict, load_config, parse_config
from volterra_mv.errors import ConfigError
from volterra_mv.io import read_ensemble, write_ensemble
from volterra_mv.kernels import Constant, Fractional
from volterra_mv.models import pure_noise
from volterra_mv.solver import Partition, simulate

CONFIGS = os.path.join(os.path.dirname(__file__), os.pardir, "configs")


def small_config(tmp_path, **over):
    raw = {
        "model": {"name": "pure_noise", "params": {"sigma": 1.0}, "d": 1},
        "kernel_b": {"kind": "constant", "c": 1.0},
        "kernel_sigma": {"kind": "constant", "c": 1.0},
        "horizon": 1.0,
        "partition": {"uniform": 64},
        "particles": 400,
        "seed": 3,
        "certify": {"epsilon_grid": [1.0], "finest": 14},
        "diagnostics": {"mesh_ladder": [8, 16, 32], "particle_ladder": [100, 400]},
        "output": {"directory": "out"},
    }
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(raw.get(k), dict):
            raw[k] = {**raw[k], **v}
        else:
            raw[k] = v
    path = tmp_path / "exp.yaml"
    path.write_text(yaml.safe_dump(raw))
    return str(path)


# -- config ---------------------------------------------------------------------------

@pytest.mark.parametrize("name", ["pure_noise", "mean_field_ou", "scalar_interaction"])
def test_shipped_configs_round_trip(name):
    cfg = load_config(os.path.join(CONFIGS, f"{name}.yaml"))
    again = parse_config(cfg.to_yaml(), cfg.base_dir)
    assert again == cfg and again.to_yaml() == cfg.to_yaml()
    cfg.build_model(), cfg.build_kernels(), cfg.build_partition(), cfg.build_initial()


def test_defaults_fill_missing_sections():
    cfg = config_from_dict({"model": {"name": "mean_field_ou"}})
    assert cfg.particles == 1000 and cfg.diagnostics.q_list == [2.0, 4.0]
    assert isinstance(cfg, ExperimentConfig)


@pytest.mark.parametrize("raw,msg", [
    ({}, "model"),
    ({"model": {"name": "x"}, "colour": 1}, "unknown top-level"),
    ({"model": {"name": "pure_noise", "flavour": 1}}, "unknown keys"),
    ({"model": {"name": "pure_noise"}, "horizon": -1.0}, "horizon"),
    ({"model": {"name": "pure_noise"}, "particles": 1}, "particles"),
    ({"model": {"name": "pure_noise"}, "eta": 0.5}, "eta"),
    ({"model": {"name": "pure_noise"}, "mode": "exact"}, "mode"),
    ({"model": {"name": "nope"}}, "unknown model"),
    ({"model": {"name": "pure_noise"}, "kernel_sigma": {"kind": "fractional", "alpha": 1.5}}, "alpha"),
    ({"model": {"name": "pure_noise"}, "initial": {"kind": "empirical", "path": "missing.txt"}}, "not found"),
    ({"model": {"name": "pure_noise"}, "partition": {"times": [0.0, 0.5]}}, "horizon"),
])
def test_config_validation_errors(raw, msg):
    with pytest.raises(ConfigError, match=msg):
        config_from_dict(raw).validate()


def test_invalid_yaml():
    with pytest.raises(ConfigError):
        parse_config("model: [unclosed")


def test_empirical_initial_file(tmp_path):
    (tmp_path / "atoms.txt").write_text("0.5\n-0.5\n1.5\n")
    path = small_config(tmp_path, initial={"kind": "empirical", "path": "atoms.txt"})
    cfg = load_config(path)
    draws = cfg.build_initial().sample(0, np.arange(100), 1)
    assert set(np.unique(draws)) <= {0.5, -0.5, 1.5}


# -- persistence ------------------------------------------------------------------------

@pytest.mark.parametrize("fmt", ["csv", "bin"])
def test_ensemble_round_trip(tmp_path, fmt):
    e = simulate(pure_noise(d=2), Constant(1.0), Fractional(1.0, 0.25), Partition.uniform(8), 5, seed=2)
    write_ensemble(e, tmp_path, fmt)
    back, meta = read_ensemble(str(tmp_path))
    for name in ("X", "A", "Mart"):
        assert np.array_equal(getattr(back, name), getattr(e, name))
    assert meta["N"] == 5 and back.partition == e.partition and back.mode == e.mode
    if fmt == "csv":
        lines = (tmp_path / "ensemble.csv").read_text().splitlines()
        assert lines[0] == "t,particle,component,X,A,M" and len(lines) == 1 + 5 * 9 * 2


# -- CLI ----------------------------------------------------------------------------------

def run(*argv):
    return main([str(a) for a in argv])


def test_certify_exit_codes(tmp_path):
    good = small_config(tmp_path)
    assert run("certify", "--config", good, "--out", tmp_path / "a") == 0
    cert = json.loads((tmp_path / "a" / "certificate_diffusion.json").read_text())
    assert cert["verdict"] == "certified" and "grid_hash" in cert and "tool_version" in cert
    bad = small_config(tmp_path, kernel_sigma={"kind": "fractional", "c": 1.0, "alpha": 0.6})
    assert run("certify", "--config", bad, "--out", tmp_path / "b") == 2
    cert = json.loads((tmp_path / "b" / "certificate_diffusion.json").read_text())
    assert cert["verdict"] == "rejected" and cert["reasons"]


def test_usage_errors_exit_one(tmp_path, capsys):
    assert run("simulate", "--config", tmp_path / "nope.yaml") == 1
    for argv in (["frobnicate"], ["simulate"]):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == 1
    assert "error" in capsys.readouterr().err


def test_simulate_requires_certificates(tmp_path):
    cfg = small_config(tmp_path)
    assert run("simulate", "--config", cfg, "--out", tmp_path / "o") == 1
    assert run("simulate", "--config", cfg, "--out", tmp_path / "o", "--force") == 0


def test_simulate_rejects_stale_certificate(tmp_path):
    cfg = small_config(tmp_path)
    assert run("certify", "--config", cfg, "--out", tmp_path / "o") == 0
    other = small_config(tmp_path, kernel_sigma={"kind": "constant", "c": 2.0})
    assert run("simulate", "--config", other, "--out", tmp_path / "o") == 1


def test_simulate_shape_and_determinism(tmp_path):
    cfg = small_config(tmp_path, particles=1000, partition={"uniform": 50})
    out = tmp_path / "o"
    assert run("certify", "--config", cfg, "--out", out) == 0
    assert run("simulate", "--config", cfg, "--out", out) == 0
    first = (out / "ensemble.csv").read_bytes()
    assert first.count(b"\n") == 1 + 1000 * 51
    assert run("simulate", "--config", cfg, "--out", out, "--threads", "3") == 0
    assert (out / "ensemble.csv").read_bytes() == first
    meta = json.loads((out / "ensemble.json").read_text())
    assert set(meta["certificate_sha256"]) == {"drift", "diffusion"} and meta["seed"] == 3
    assert run("simulate", "--config", cfg, "--out", out, "--seed", "4") == 0
    assert (out / "ensemble.csv").read_bytes() != first


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_simulate_blowup_exit_three(tmp_path):
    cfg = small_config(tmp_path, model={"name": "mean_field_ou", "params": {"theta": -1e9, "sigma0": 1.0}},
                       particles=10)
    assert run("simulate", "--config", cfg, "--out", tmp_path / "o", "--force") == 3


def test_diagnose_pipeline_and_failures(tmp_path):
    cfg = small_config(tmp_path, particles=2000, output={"plot_data": True})
    out = tmp_path / "o"
    assert run("certify", "--config", cfg, "--out", out) == 0
    assert run("simulate", "--config", cfg, "--out", out, "--format", "bin") == 0
    assert run("diagnose", "--config", cfg, "--out", out) == 0
    rep = json.loads((out / "diagnostics.json").read_text())
    assert rep["passed"] and set(rep["verdicts"]) == {"moments", "increments", "holder", "martingale", "reconstruction"}
    assert all(rep["thresholds"][k] for k in rep["verdicts"])
    assert (out / "increments.dat").exists() and (out / "plots.gp").exists()
    # generator drift differs from the simulated drift
    ou = {"name": "mean_field_ou", "params": {"theta": 1.0, "sigma0": 1.0}}
    cfg2 = small_config(tmp_path, model=ou, particles=4000, initial={"kind": "point", "value": [0.5]},
                        diagnostics={"generator_drift_scale": 2.0})
    out2 = tmp_path / "o2"
    assert run("simulate", "--config", cfg2, "--out", out2, "--force") == 0
    assert run("diagnose", "--config", cfg2, "--out", out2) == 2
    assert not json.loads((out2 / "diagnostics.json").read_text())["verdicts"]["martingale"]


def test_diagnose_empty_toggles(tmp_path):
    off = {k: False for k in ("moments", "increments", "holder", "martingale", "reconstruction")}
    cfg = small_config(tmp_path, diagnostics=off)
    out = tmp_path / "o"
    assert run("simulate", "--config", cfg, "--out", out, "--force") == 0
    assert run("diagnose", "--config", cfg, "--out", out) == 0
    assert json.loads((out / "diagnostics.json").read_text())["verdicts"] == {}


def test_diagnose_missing_ensemble(tmp_path):
    assert run("diagnose", "--config", small_config(tmp_path), "--out", tmp_path / "empty") == 1


def test_convergence_and_report(tmp_path):
    cfg = small_config(tmp_path)
    out = tmp_path / "o"
    assert run("convergence", "--config", cfg, "--out", out) == 0
    rep = json.loads((out / "convergence.json").read_text())
    assert max(m["distance"] for m in rep["sections"]["refinement"]["mesh"]) < 1e-10
    assert run("report", "--out", out) == 0
    assert json.loads((out / "summary.json").read_text())["passed"]
    assert run("report", "--out", tmp_path / "nothing") == 1


def test_convergence_short_ladder_exit_one(tmp_path):
    cfg = small_config(tmp_path, diagnostics={"mesh_ladder": [8, 16]})
    assert run("convergence", "--config", cfg, "--out", tmp_path / "o") == 1
