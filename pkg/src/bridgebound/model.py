"""
Model definition files: parsing, validation and construction of the
measures, reference kernel and constants they describe.

The accepted JSON layout is ``model.schema.json`` next to this module.
Marginals and kernel are always given by Gaussian parameters; with
``"backend": "grid"`` they are discretized on one regular grid shared by
both coordinates.
"""

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

import jsonschema
import numpy as np

from .bounds import Constants, gaussian_constants, rho_from_curvature
from .errors import DimensionError, DomainError
from .measures import GaussianKernel, GaussianMeasure, Grid, discretize


class ConfigError(ValueError):
    """The model file is unreadable or does not validate."""


def schema():
    text = resources.files("bridgebound").joinpath("model.schema.json").read_text()
    return json.loads(text)


@dataclass(frozen=True, eq=False)
class Model:
    """A validated model: backend objects plus their Gaussian originals."""

    backend: str
    mu: object
    eta: object
    K0: object
    constants: Constants
    gaussian: tuple
    grid: Optional[Grid] = None
    pi: Optional[object] = None
    config: dict = field(default_factory=dict)

    @property
    def tol(self):
        return self.config.get("solver", {}).get("tol")

    @property
    def max_iter(self):
        return self.config.get("solver", {}).get("max_iter", 10_000)

    @property
    def iterations(self):
        return self.config.get("iterations", 30)


def _gauss(spec, d, what):
    mean = np.asarray(spec["mean"], dtype=float)
    cov = np.asarray(spec["cov"], dtype=float)
    if mean.shape != (d,) or cov.shape != (d, d):
        raise ConfigError(f"{what}: expected mean of length {d} and a {d}x{d} covariance")
    return GaussianMeasure(mean, cov)


def model_grid(cfg, mu, eta):
    """The shared grid: explicit bounds, or mean +/- width sd of both marginals."""
    d = cfg["d"]
    g = cfg.get("grid", {"n": 400 if d == 1 else 60})
    n = g["n"]
    if "lo" in g or "hi" in g:
        if "lo" not in g or "hi" not in g:
            raise ConfigError("grid: give both lo and hi, or neither")
        lo, hi = np.asarray(g["lo"], float), np.asarray(g["hi"], float)
        if lo.shape != (d,) or hi.shape != (d,) or np.any(hi <= lo):
            raise ConfigError("grid: lo and hi need length d and lo < hi")
    else:
        w = g.get("width", 6.0)
        sd = [np.sqrt(np.diag(m.cov)) for m in (mu, eta)]
        lo = np.minimum(mu.mean - w * sd[0], eta.mean - w * sd[1])
        hi = np.maximum(mu.mean + w * sd[0], eta.mean + w * sd[1])
    return Grid.regular(lo, hi, n)


def _constants(cfg, mu, eta, K0, backend):
    given = cfg.get("constants", {})
    curv = cfg.get("curvature", {})
    certified = backend == "gaussian"
    if curv:
        rho = {}
        for side in ("u", "v"):
            c = curv.get(side)
            if c is None:
                rho[side] = None
                continue
            rho[side] = rho_from_curvature(c["a"], c.get("b", 0.0), c.get("delta", 0.0))
    else:
        base = gaussian_constants(mu, eta, K0)
        rho = {"u": base.rho_u, "v": base.rho_v}
    for side in ("u", "v"):
        key = f"rho_{side}"
        if key in given:
            rho[side] = given[key]
            certified = False
        elif rho[side] is None:
            raise ConfigError(f"no explicit constant for delta > 0: set constants.{key}")
    return Constants.from_kernel(K0, rho["u"], rho["v"], certified=certified)


def build_model(cfg):
    """Validate a parsed model definition and build the :class:`Model`."""
    try:
        jsonschema.validate(cfg, schema())
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid model at {path}: {exc.message}") from None
    d = cfg["d"]
    try:
        mu = _gauss(cfg["mu"], d, "mu")
        eta = _gauss(cfg["eta"], d, "eta")
        pi = _gauss(cfg["pi"], d, "pi") if "pi" in cfg else None
        k = cfg["kernel"]
        K0 = GaussianKernel(
            np.asarray(k["alpha"], float), np.asarray(k["beta"], float), np.asarray(k["tau"], float)
        )
        if K0.d != d:
            raise ConfigError(f"kernel: expected dimension {d}")
        constants = _constants(cfg, mu, eta, K0, cfg["backend"])
    except (DomainError, DimensionError) as exc:
        raise ConfigError(str(exc)) from None
    gaussian = (mu, eta, K0)
    if cfg["backend"] == "gaussian":
        return Model("gaussian", mu, eta, K0, constants, gaussian, None, pi, cfg)
    grid = model_grid(cfg, mu, eta)
    gpi = discretize(pi, grid) if pi is not None else None
    return Model(
        "grid",
        discretize(mu, grid),
        discretize(eta, grid),
        discretize(K0, grid),
        constants,
        gaussian,
        grid,
        gpi,
        cfg,
    )


def load_model(path):
    """Read, validate and build a model definition file."""
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc.msg} at line {exc.lineno})") from None
    return build_model(cfg)


def gaussian_1d(a_u=1.0, a_v=1.0, beta=1.0, tau=1.0, alpha=0.0, m_u=0.0, m_v=1.0, backend="gaussian"):
    """Model dict for N(m_u, 1/a_u) -> N(m_v, 1/a_v) with kernel (alpha, beta, tau)."""
    return {
        "backend": backend,
        "d": 1,
        "mu": {"mean": [m_u], "cov": [[1.0 / a_u]]},
        "eta": {"mean": [m_v], "cov": [[1.0 / a_v]]},
        "kernel": {"alpha": [alpha], "beta": [[beta]], "tau": [[tau]]},
    }


def oracle_model():
    """The cross-backend reference: N(0,1) -> N(2, 0.5), kernel (0, 1, 1), grid +/-6, n = 400."""
    cfg = gaussian_1d(a_u=1.0, a_v=2.0, m_v=2.0, backend="grid")
    cfg["grid"] = {"lo": [-6.0], "hi": [6.0], "n": 400}
    return cfg
