import hashlib
import json
import math

import numpy as np
import pytest

from alignflock.cli import EXIT_DATA, EXIT_FAIL, EXIT_OK, EXIT_USAGE, OUTPUT_ROOT_ENV, main, sha256
from alignflock.geometry import DomainSpec
from alignflock.scenarios import (
    CATALOG,
    INITIAL_DATA,
    ConfigError,
    UnknownScenario,
    catalog,
    damped_oscillator,
    execute,
    field_initial,
    parse_kernel,
    particle_initial,
)

EXPECTED = {
    "sigma-1d-indicator", "sigma-2d-indicator", "complete-graph-decay", "fat-tail-flocking",
    "hydro-1d-subcritical", "hydro-1d-supercritical", "hydro-2d-threshold", "weighted-gap-uniform",
    "harmonic-potential-flock",
}


@pytest.fixture
def root(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path))
    return tmp_path


def write_cfg(path, cfg):
    path.write_text(json.dumps(cfg) if not isinstance(cfg, str) else cfg)
    return str(path)


def test_catalog_contents(capsys):
    assert {e["name"] for e in catalog()} == EXPECTED
    assert main(["list"]) == EXIT_OK
    out = capsys.readouterr().out
    assert all(name in out for name in EXPECTED)
    assert main(["list", "--json"]) == EXIT_OK
    assert {e["name"] for e in json.loads(capsys.readouterr().out)} == EXPECTED


def test_run_writes_manifest(root, capsys):
    cfg = write_cfg(root / "c.json", {"scenario": "sigma-1d-indicator", "output": "out", "seed": 1})
    assert main(["run", cfg]) == EXIT_OK
    out = root / "out"
    man = json.loads((out / "manifest.json").read_text())
    assert man["passed"] and man["failures"] == []
    assert man["config"]["scenario"] == "sigma-1d-indicator"
    for name, digest in man["files"].items():
        assert sha256(out / name) == digest
    bundle = hashlib.sha256("".join(f"{k}:{v}\n" for k, v in sorted(man["files"].items())).encode()).hexdigest()
    assert man["bundle_sha256"] == bundle
    assert {"numpy", "scipy", "python", "alignflock"} <= set(man["versions"])
    assert "PASS" in capsys.readouterr().out


def test_runs_are_deterministic(root):
    hashes = []
    for tag in ("a", "b"):
        cfg = write_cfg(root / f"{tag}.json", {
            "scenario": "complete-graph-decay", "output": tag, "seed": 11,
            "params": {"N": 8, "t_end": 0.2}})
        assert main(["run", cfg]) == EXIT_OK
        hashes.append(json.loads((root / tag / "manifest.json").read_text())["files"])
    for name in hashes[0]:
        if name.endswith(".csv"):
            assert hashes[0][name] == hashes[1][name]


@pytest.mark.parametrize("text", ["", "   \n", "{not json", "[]", "{}", '{"seed": 1}',
                                  '{"scenario": "sigma-1d-indicator", "bogus": 1}',
                                  '{"scenario": "sigma-1d-indicator", "seed": "x"}',
                                  '{"scenario": "sigma-1d-indicator", "params": {"nope": 2}}',
                                  '{"scenario": "sigma-1d-indicator", "kernel": {"family": "weird"}}',
                                  '{"scenario": "sigma-1d-indicator", "domain": {"kind": "sphere"}}'])
def test_bad_config_exits_65_without_outputs(root, text):
    cfg = write_cfg(root / "bad.json", text)
    assert main(["run", cfg]) == EXIT_DATA
    assert sorted(p.name for p in root.iterdir()) == ["bad.json"]


def test_usage_errors_exit_64(root, capsys):
    cfg = write_cfg(root / "c.json", {"scenario": "no-such-thing"})
    assert main(["run", cfg]) == EXIT_USAGE
    with pytest.raises(SystemExit) as err:
        main(["run", cfg, "--frobnicate"])
    assert err.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as err:
        main([])
    assert err.value.code == EXIT_USAGE
    assert main(["verify", "--tol", "nonsense=1"]) == EXIT_USAGE
    assert main(["verify", "--tol", "A1.sigma"]) == EXIT_USAGE
    assert main(["verify", "--filter", "zzz"]) == EXIT_USAGE


def test_failed_check_exits_2(root):
    cfg = write_cfg(root / "c.json", {"scenario": "harmonic-potential-flock", "output": "h",
                                       "params": {"t_end": 0.5, "dt": 0.05, "record_every": 1, "tol": 1e-14}})
    assert main(["run", cfg]) == EXIT_FAIL
    man = json.loads((root / "h" / "manifest.json").read_text())
    assert not man["passed"] and "matches_damped_oscillator" in man["failures"]


def test_unexpected_blowup_exits_2(root):
    cfg = write_cfg(root / "c.json", {"scenario": "hydro-1d-subcritical", "output": "b",
                                       "params": {"a_factor": 2.0, "t_end": 2.0}})
    assert main(["run", cfg]) == EXIT_FAIL
    out = root / "b"
    assert {"blowup.json", "report.json", "manifest.json"} <= {p.name for p in out.iterdir()}
    assert json.loads((out / "manifest.json").read_text())["failures"] == ["unexpected_blowup"]


def test_execute_rejects_unknowns():
    with pytest.raises(UnknownScenario):
        execute("missing")
    with pytest.raises(ConfigError):
        execute("sigma-1d-indicator", {"K": 3})


def test_shipped_configs_parse():
    from pathlib import Path

    from alignflock.cli import load_config

    cfgs = sorted((Path(__file__).parent.parent / "configs").glob("*.json"))
    assert {load_config(p)["scenario"] for p in cfgs} == EXPECTED
    for p in cfgs:
        cfg = load_config(p)
        assert set(cfg.get("params", {})) <= set(CATALOG[cfg["scenario"]].defaults)


@pytest.mark.parametrize("name", INITIAL_DATA)
def test_initial_data_library(name):
    dom = DomainSpec.free(2)
    a = particle_initial({"name": name}, 10, dom, np.random.default_rng(3))
    b = particle_initial({"name": name}, 10, dom, np.random.default_rng(3))
    assert np.array_equal(a.positions, b.positions) and np.array_equal(a.velocities, b.velocities)
    assert a.positions.shape == (10, 2)
    f = field_initial({"name": name}, 16, DomainSpec.torus(2))
    assert f.rho.shape == (16, 16) and np.all(f.rho > 0)


def test_initial_data_errors():
    with pytest.raises(ConfigError):
        particle_initial({"name": "spiral"}, 4, DomainSpec.free(1), np.random.default_rng(0))
    with pytest.raises(ConfigError):
        field_initial({"name": "uniform", "params": {"rho0": "one"}}, 8, DomainSpec.torus(1))


def test_particle_file_initial(tmp_path):
    from alignflock.particles import save_ensemble_csv

    dom = DomainSpec.free(1)
    e = particle_initial({"name": "two-cluster"}, 6, dom, np.random.default_rng(1))
    save_ensemble_csv(e, tmp_path / "e.csv")
    back = particle_initial({"file": str(tmp_path / "e.csv")}, 6, dom, np.random.default_rng(99))
    assert np.array_equal(back.positions, e.positions)


def test_parse_kernel_normalization():
    T1 = DomainSpec.torus(1)
    k = parse_kernel({"family": "indicator", "radius": 1.0}, None, T1, True)
    assert k.amplitude == pytest.approx(0.5)
    with pytest.raises(ConfigError):
        parse_kernel({"family": "fat_tail"}, None, T1, False)


def test_damped_oscillator_regimes():
    for tau in (0.5, 2.0, 3.0):
        t, h = 0.7, 1e-4
        y = lambda s: damped_oscillator(1.0, -0.3, tau, s)
        ypp = (y(t + h) - 2 * y(t) + y(t - h)) / h ** 2
        yp = (y(t + h) - y(t - h)) / (2 * h)
        assert ypp + tau * yp + y(t) == pytest.approx(0.0, abs=1e-6)
        assert y(0.0) == 1.0
    assert damped_oscillator(1.0, 0.0, 0.0, math.pi) == pytest.approx(-1.0)
