"""
Side-by-side run of a Gaussian model and its grid discretization.

Grid solutions are read as functions on the continuum (linear
interpolation between nodes) and compared with the closed forms on a fine
mesh of the interior: the box within three standard deviations of the
relevant marginal's mean, where truncation of the grid does not matter.
Potentials are compared after removing their interior average, since each
backend fixes the additive constant against its own version of mu. The
grid kernel's rows are renormalized after truncation, so the grid U is
first shifted by log of each row's captured mass to refer to the
continuum kernel.
"""

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.special import logsumexp

from .metrics import kl
from .model import build_model
from .moments import cond_cov, cond_mean
from .sinkhorn import iterate, kernel_at, solve_bridge

DEFAULT_TOLERANCES = {"mean": 1e-3, "cov": 1e-3, "kl_relative": 1e-3, "potentials": 5e-3}
INTERIOR_SDS = 3.0
MESH_1D = 1001
MESH_2D = 101


def interior_mesh(grid, g, width=INTERIOR_SDS):
    """Fine evaluation points in the interior box of ``g`` clipped to the grid."""
    sd = np.sqrt(np.diag(g.cov))
    lo = np.maximum(g.mean - width * sd, [a[0] for a in grid.axes])
    hi = np.minimum(g.mean + width * sd, [a[-1] for a in grid.axes])
    n = MESH_1D if grid.d == 1 else MESH_2D
    axes = [np.linspace(a, b, n) for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def interpolate(values, grid, points):
    """Piecewise-linear interpolant of node values (leading axis = nodes)."""
    v = np.asarray(values)
    tail = v.shape[1:]
    f = RegularGridInterpolator(grid.axes, v.reshape(grid.shape + (-1,)), method="linear")
    return f(points).reshape((len(points),) + tail)


def row_log_mass(K, grid):
    """log of the mass each row of the Gaussian kernel ``K`` keeps on ``grid``."""
    logk = K.log_transition_density(grid.points, grid.points)
    return logsumexp(logk, axis=1) + np.log(grid.cell_volume)


def _field_gap(exact, approx, grid, points):
    diff = exact.materialize(points).values - interpolate(approx.values, grid, points)
    return float(np.sqrt(np.max(np.sum(diff**2, axis=(1, 2)))))


def _centered_gap(q, values, grid, points):
    a = q(points)
    b = interpolate(values, grid, points)
    return float(np.max(np.abs((a - a.mean()) - (b - b.mean()))))


def oracle_compare(cfg):
    """Max discrepancies between the two backends for one model definition.

    Returns a dict with ``discrepancies``, ``tolerances``, per-quantity
    ``pass`` flags and the solver iteration counts. The grid side uses
    ``cfg["grid"]`` (default: mean +/- 6 sd, n = 400 in 1-d).
    """
    grid_model = build_model(dict(cfg, backend="grid"))
    gauss_model = build_model(dict(cfg, backend="gaussian"))
    tol = dict(DEFAULT_TOLERANCES, **cfg.get("tolerances", {}))
    steps = cfg.get("compare_steps", 10)

    solver = cfg.get("solver", {})
    kw = dict(tol=solver.get("tol"), max_iter=solver.get("max_iter", 10_000))
    gb = solve_bridge(gauss_model.mu, gauss_model.eta, gauss_model.K0, **kw)
    db = solve_bridge(grid_model.mu, grid_model.eta, grid_model.K0, **kw)

    grid = grid_model.grid
    mu_g, eta_g = gauss_model.mu, gauss_model.eta
    inner_x = interior_mesh(grid, mu_g)
    inner_y = interior_mesh(grid, eta_g)

    Lg, Ld = kernel_at(gb, "even"), kernel_at(db, "even")
    gap_m = _field_gap(cond_mean(Lg), cond_mean(Ld), grid, inner_x)
    gap_s = _field_gap(cond_cov(Lg), cond_cov(Ld), grid, inner_x)

    sg = iterate(mu_g, eta_g, gauss_model.K0, steps, potentials=False)
    sd = iterate(grid_model.mu, grid_model.eta, grid_model.K0, steps, potentials=False)
    hg = np.array([kl(gb.P_star, s.P) for s in sg])
    hd = np.array([kl(db.P_star, s.P) for s in sd])
    live = hg > 1e-12 * max(hg.max(), 1e-300)
    gap_kl = float(np.max(np.abs(hd[live] - hg[live]) / hg[live])) if live.any() else 0.0

    gap_u = _centered_gap(gb.U_star, db.U_star + row_log_mass(gauss_model.K0, grid), grid, inner_x)
    gap_v = _centered_gap(gb.V_star, db.V_star, grid, inner_y)

    disc = {
        "mean": gap_m,
        "cov": gap_s,
        "kl_relative": gap_kl,
        "potentials": max(gap_u, gap_v),
    }
    passed = {k: bool(disc[k] <= tol[k]) for k in disc}
    return {
        "discrepancies": disc,
        "potential_gaps": {"U": gap_u, "V": gap_v},
        "tolerances": tol,
        "pass": passed,
        "all_pass": all(passed.values()),
        "grid_n": int(grid_model.grid.size),
        "iterations": {"gaussian": gb.iterations_used, "grid": db.iterations_used},
        "kl_trajectory": {"gaussian": hg.tolist(), "grid": hd.tolist()},
    }

