import json

import numpy as np
import pytest

from bridgebound.measures import GaussianMeasure, GridMeasure
from bridgebound.model import ConfigError, build_model, gaussian_1d, load_model, oracle_model, schema


def test_schema_loads():
    s = schema()
    assert s["required"] == ["backend", "d", "mu", "eta", "kernel"]


def test_gaussian_model():
    m = build_model(gaussian_1d(a_u=2.0, a_v=0.5))
    assert isinstance(m.mu, GaussianMeasure) and m.grid is None
    assert m.constants.rho_u == pytest.approx(0.5) and m.constants.rho_v == pytest.approx(2.0)
    assert m.constants.certified
    assert m.max_iter == 10_000 and m.iterations == 30 and m.tol is None


def test_grid_model():
    m = build_model(oracle_model())
    assert isinstance(m.mu, GridMeasure)
    assert m.grid.size == 400 and m.grid.axes[0][0] == -6.0 and m.grid.axes[0][-1] == 6.0
    assert m.K0.rows.shape == (400, 400)
    assert not m.constants.certified


def test_default_grid_covers_both_marginals():
    m = build_model(gaussian_1d(m_v=3.0, a_v=4.0, backend="grid"))
    lo, hi = m.grid.axes[0][0], m.grid.axes[0][-1]
    assert lo == pytest.approx(-6.0) and hi == pytest.approx(6.0)
    cfg = dict(gaussian_1d(backend="grid"), d=1)
    cfg["grid"] = {"n": 50, "width": 4.0}
    assert build_model(cfg).grid.size == 50


def test_two_dimensional():
    cfg = {
        "backend": "grid",
        "d": 2,
        "mu": {"mean": [0, 0], "cov": [[1, 0.2], [0.2, 1]]},
        "eta": {"mean": [1, 0], "cov": [[1, 0], [0, 0.5]]},
        "kernel": {"alpha": [0, 0], "beta": [[1, 0], [0, 1]], "tau": [[1, 0], [0, 1]]},
        "grid": {"n": 20},
    }
    m = build_model(cfg)
    assert m.grid.shape == (20, 20)


@pytest.mark.parametrize(
    "mutate",
    [
        lambda c: c.pop("mu"),
        lambda c: c.update(backend="lattice"),
        lambda c: c.update(d=3),
        lambda c: c.update(extra=1),
        lambda c: c["mu"].update(cov=[[-1.0]]),
        lambda c: c["kernel"].update(tau=[[0.0]]),
        lambda c: c.update(mu={"mean": [0, 0], "cov": [[1, 0], [0, 1]]}),
        lambda c: c.update(grid={"n": 2}),
        lambda c: c.update(backend="grid", grid={"n": 10, "lo": [1.0], "hi": [0.0]}),
        lambda c: c.update(backend="grid", grid={"n": 10, "lo": [1.0]}),
        lambda c: c.update(curvature={"u": {"a": 1.0, "delta": 0.5}, "v": {"a": 1.0}}),
        lambda c: c.update(curvature={"u": {"a": 0.0}}),
        lambda c: c.update(constants={"rho_u": -1.0}),
    ],
)
def test_invalid_configs(mutate):
    cfg = json.loads(json.dumps(gaussian_1d()))
    mutate(cfg)
    with pytest.raises(ConfigError):
        build_model(cfg)


def test_curvature_and_explicit_constants():
    cfg = gaussian_1d()
    cfg["curvature"] = {"u": {"a": 2.0}, "v": {"a": 1.0, "b": 1.0, "delta": 0.5}}
    cfg["constants"] = {"rho_v": 3.0}
    m = build_model(cfg)
    assert m.constants.rho_u == 0.5 and m.constants.rho_v == 3.0
    assert not m.constants.certified


def test_load_model(tmp_path):
    p = tmp_path / "m.json"
    p.write_text(json.dumps(gaussian_1d()))
    assert load_model(p).backend == "gaussian"
    with pytest.raises(ConfigError):
        load_model(tmp_path / "missing.json")
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_model(p)


def test_grid_pi_discretized():
    cfg = oracle_model()
    cfg["pi"] = {"mean": [0.5], "cov": [[1.0]]}
    m = build_model(cfg)
    assert isinstance(m.pi, GridMeasure) and abs(m.pi.weights.sum() - 1) < 1e-12
    assert np.isclose(m.pi.mean()[0], 0.5, atol=1e-9)
