import json
import math
import pathlib

import numpy as np
import pytest

import covphase

CONFIGS = pathlib.Path(__file__).resolve().parents[2] / "configs"


def test_version():
    assert isinstance(covphase.version(), str) and covphase.version()


@pytest.mark.parametrize("m,t1,t2", [(1, 2, 5), (2, 0, 1), (0.5, -1, 3)])
def test_free_particle_bracket(m, t1, t2):
    th = covphase.Theory("free_particle", mass=m)
    for sigma in (-1.0, 0.0, 2.5):
        v = th.bracket(("q", [], t2), ("q", [], t1), sigma=sigma)
        assert abs(v - (t1 - t2) / m) < 1e-12
    assert th.bracket(("p", [], 0.3), ("q", [], 1.1)) == pytest.approx(-1.0, abs=1e-12)


def test_vector_boson_structure():
    th = covphase.Theory("vector_boson", mass=1.0, shape=[3, 3, 3])
    n = 27
    assert th.classification == "Symplectic"
    assert th.ambient_dim == 5 * n
    assert th.final_dim == 2 * n
    assert th.kernel_dim == 0
    s = np.linalg.svd(th.omega_final, compute_uv=False)
    assert s.min() / s.max() > 1e-3
    rng = np.random.default_rng(0)
    w = rng.standard_normal(th.final_dim)
    e0 = th.energy(w)
    assert abs(th.energy(th.evolve(w, 3.7)) - e0) < 1e-10 * abs(e0)
    # antisymmetry
    f, g = ("phi", [0, 1, 2], 0.4), ("P0", [1, 1, 2], 1.9)
    assert th.bracket(f, g) == pytest.approx(-th.bracket(g, f), abs=1e-13)


def test_electrodynamics_gauge():
    th = covphase.Theory("electrodynamics", shape=[3, 3, 3])
    assert th.classification == "Gauge"
    assert th.kernel_dim == 26
    P = th.projector
    assert np.abs(P @ P - P).max() < 1e-12
    with pytest.raises(covphase.CovphaseError) as e:
        th.bracket(("AL1", [0, 0, 0], 0.0), ("AT1", [0, 0, 0], 0.0))
    assert e.value.kind == "GaugeVariantObservable"


def test_config_round_trip():
    for path in sorted(CONFIGS.glob("*.json")):
        c = covphase.load_config(path)
        assert covphase.load_config(c) == c


def test_invalid_config_reports_path():
    bad = {"model": {"vector_boson": {"shape": [4, 1, 4]}}, "time": {"dt": 0.1, "n_steps": 4}}
    with pytest.raises(covphase.CovphaseError) as e:
        covphase.analyze(bad)
    assert e.value.kind == "InvalidConfig"
    assert "/model/vector_boson/shape/1" in str(e.value)


def test_pipeline_commands():
    cfg = CONFIGS / "free_particle.json"
    rep = covphase.bracket(cfg)
    values = [row["value"] for row in rep["brackets"]]
    assert values[0] == pytest.approx(-3.0, abs=1e-12)
    ver = covphase.verify(cfg)
    assert ver["ok"]
    assert all(inv["pass"] for inv in ver["invariants"])
    a = json.dumps(covphase.verify(cfg, stable_output=True), sort_keys=True)
    b = json.dumps(covphase.verify(cfg, stable_output=True), sort_keys=True)
    assert a == b
    assert not math.isnan(covphase.evolve(cfg)["trajectory"]["energy_initial"])
