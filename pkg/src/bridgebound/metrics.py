"""
Relative entropy, Fisher information and exact quadratic Wasserstein
distances on the grid and Gaussian backends.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg, sparse
from scipy.optimize import linprog
from scipy.special import rel_entr

from .errors import DimensionError, SizeError
from .measures import (
    DiscreteJoint,
    GaussianJoint,
    GaussianKernel,
    GaussianMeasure,
    Grid,
    GridKernel,
    GridMeasure,
    product,
)

LP_MAX_ATOMS = 64
# the defaults (1e-7) are too loose when many atoms carry tiny masses
LP_OPTIONS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}
EIG_FLOOR = 1e-14


def sqrtm_psd(A):
    """Symmetric square root through an eigendecomposition.

    Eigenvalues are clamped at 1e-14 before the square root.
    """
    A = 0.5 * (A + A.T)
    ev, V = np.linalg.eigh(A)
    return (V * np.sqrt(np.maximum(ev, EIG_FLOOR))) @ V.T


def _x_minus_log1p(x):
    # x - log(1 + x) without cancellation near 0
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-3
    xs = x[small]
    out = np.empty_like(x)
    out[small] = xs**2 / 2 - xs**3 / 3 + xs**4 / 4 - xs**5 / 5
    out[~small] = x[~small] - np.log1p(x[~small])
    return out


def gaussian_kl(m1, S1, m2, S2):
    """KL(N(m1, S1) | N(m2, S2)), evaluated from S1 - S2 to keep small values accurate."""
    m1, m2 = np.atleast_1d(m1), np.atleast_1d(m2)
    S1, S2 = np.atleast_2d(S1), np.atleast_2d(S2)
    delta = linalg.eigh(S1 - S2, S2, eigvals_only=True)
    dm = m1 - m2
    cf = linalg.cho_factor(S2)
    quad = dm @ linalg.cho_solve(cf, dm)
    return float(0.5 * (np.sum(_x_minus_log1p(delta)) + quad))


# --------------------------------------------------------------------------
# relative entropy
# --------------------------------------------------------------------------


def kl(nu, mu):
    """Relative entropy H(nu | mu), ``+inf`` when nu is not absolutely continuous.

    Parameters
    ----------
    nu, mu : measures or joints of the same backend
        Discrete objects must share their supports; the comparison is on
        weights, so the grid's cell volume cancels.

    Returns
    -------
    float
    """
    if isinstance(nu, GridMeasure) and isinstance(mu, GridMeasure):
        if not nu.grid.same_as(mu.grid):
            raise DimensionError("measures live on different grids")
        return float(np.sum(rel_entr(nu.weights, mu.weights)))
    if isinstance(nu, DiscreteJoint) and isinstance(mu, DiscreteJoint):
        if not (nu.x.same_as(mu.x) and nu.y.same_as(mu.y)):
            raise DimensionError("joints live on different grids")
        return float(np.sum(rel_entr(nu.mass, mu.mass)))
    if isinstance(nu, (GaussianMeasure, GaussianJoint)) and type(nu) is type(mu):
        if nu.mean.size != mu.mean.size:
            raise DimensionError("dimensions differ")
        return gaussian_kl(nu.mean, nu.cov, mu.mean, mu.cov)
    raise DimensionError(f"cannot compare {type(nu).__name__} with {type(mu).__name__}")


def kl_disintegrated(mu, L, K):
    """The mu-average of the row entropies H(L(x, .) | K(x, .)).

    Equals ``kl(product(mu, L), product(mu, K))``.
    """
    if isinstance(L, GridKernel) and isinstance(K, GridKernel) and isinstance(mu, GridMeasure):
        if not (L.source.same_as(K.source) and L.target.same_as(K.target)):
            raise DimensionError("kernels live on different grids")
        if not mu.grid.same_as(L.source):
            raise DimensionError("measure support and kernel source differ")
        live = mu.weights > 0
        rows = np.sum(rel_entr(L.rows[live], K.rows[live]), axis=1)
        return float(mu.weights[live] @ rows)
    if (
        isinstance(L, GaussianKernel)
        and isinstance(K, GaussianKernel)
        and isinstance(mu, GaussianMeasure)
    ):
        if not (L.d == K.d == mu.d):
            raise DimensionError("dimensions differ")
        # row KL = cov part (x-free) + 1/2 E |tau_K^{-1/2}(da + dB x)|^2
        cov_part = gaussian_kl(np.zeros(K.d), L.tau, np.zeros(K.d), K.tau)
        da = L.alpha - K.alpha
        dB = L.beta - K.beta
        c = da + dB @ mu.mean
        cf = linalg.cho_factor(K.tau)
        mean_part = c @ linalg.cho_solve(cf, c) + np.trace(
            linalg.cho_solve(cf, dB @ mu.cov @ dB.T)
        )
        return float(cov_part + 0.5 * mean_part)
    raise DimensionError("kl_disintegrated needs a measure and two kernels of one backend")


# --------------------------------------------------------------------------
# Fisher information
# --------------------------------------------------------------------------


def grid_gradient(values, grid):
    """Central-difference gradient of a grid function, shape (N, d).

    Second-order one-sided stencils are used on the boundary.
    """
    if grid.axes is None:
        raise DimensionError("finite differences need a regular grid")
    f = np.asarray(values, dtype=float).reshape(grid.shape)
    grads = np.gradient(f, *grid.spacing, edge_order=2)
    if grid.d == 1:
        grads = [grads]
    return np.stack([g.ravel() for g in grads], axis=1)


def fisher(nu, mu):
    """Fisher information J(nu | mu) = E_nu |grad log(dnu/dmu)|^2.

    Grid measures must share a regular grid; the gradient is a central
    difference with step equal to the grid spacing. Returns ``+inf`` if
    nu charges an atom where mu vanishes, or if the log-ratio is not
    finite where it is differentiated.
    """
    if isinstance(nu, GridMeasure) and isinstance(mu, GridMeasure):
        if not nu.grid.same_as(mu.grid):
            raise DimensionError("measures live on different grids")
        if np.any((nu.weights > 0) & (mu.weights == 0)):
            return float("inf")
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.log(nu.weights) - np.log(mu.weights)
            g = grid_gradient(r, nu.grid)
            sq = np.sum(g * g, axis=1)
        live = nu.weights > 0
        if not np.all(np.isfinite(sq[live])):
            return float("inf")
        return float(nu.weights[live] @ sq[live])
    if isinstance(nu, GaussianMeasure) and isinstance(mu, GaussianMeasure):
        if nu.d != mu.d:
            raise DimensionError("dimensions differ")
        # grad log ratio is x -> G x + g with G = S_mu^-1 - S_nu^-1
        Pm, Pn = mu.precision, nu.precision
        G = Pm - Pn
        c = Pm @ (nu.mean - mu.mean)
        return float(c @ c + np.trace(G @ nu.cov @ G.T))
    raise DimensionError(f"cannot compare {type(nu).__name__} with {type(mu).__name__}")


def fisher_kernel_lipschitz(K, x, y):
    """Return ``(J(K(x,.) | K(y,.)), kappa^2 |x - y|^2)`` with kappa = |tau^-1 beta|_2."""
    if not isinstance(K, GaussianKernel):
        raise TypeError("fisher_kernel_lipschitz needs a GaussianKernel")
    dx = np.atleast_1d(np.asarray(x, float) - np.asarray(y, float))
    chi = K.chi
    v = chi @ dx
    kappa = np.linalg.norm(chi, 2)
    return float(v @ v), float(kappa**2 * (dx @ dx))


# --------------------------------------------------------------------------
# Wasserstein-2
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GaussianPlan:
    """Optimal coupling of two Gaussians: X -> offset + linear @ X.

    The joint law is degenerate, so it is kept as the transport map
    together with the (singular) joint mean and covariance.
    """

    mean: np.ndarray
    cov: np.ndarray
    linear: np.ndarray
    offset: np.ndarray


def _cost_matrix(x, y):
    return np.sum((x[:, None, :] - y[None, :, :]) ** 2, axis=2)


def w2_quantile(nu, mu):
    """Exact W2 between 1-d discrete measures via the monotone coupling."""
    if nu.d != 1 or mu.d != 1:
        raise DimensionError("the quantile solver is one-dimensional")
    x, y = nu.points[:, 0], mu.points[:, 0]
    ix, iy = np.argsort(x, kind="stable"), np.argsort(y, kind="stable")
    ca = np.cumsum(nu.weights[ix])
    cb = np.cumsum(mu.weights[iy])
    ca[-1] = cb[-1] = 1.0
    t = np.union1d(ca, cb)
    t = t[(t > 0) & (t <= 1.0)]
    lo = np.concatenate([[0.0], t[:-1]])
    dm = t - lo
    mid = 0.5 * (lo + t)
    i = np.minimum(np.searchsorted(ca, mid, side="right"), len(ca) - 1)
    j = np.minimum(np.searchsorted(cb, mid, side="right"), len(cb) - 1)
    plan = np.zeros((nu.grid.size, mu.grid.size))
    np.add.at(plan, (ix[i], iy[j]), dm)
    cost = float(np.sum(dm * (x[ix[i]] - y[iy[j]]) ** 2))
    return np.sqrt(max(cost, 0.0)), DiscreteJoint(nu.grid, mu.grid, plan)


def w2_lp(nu, mu, max_atoms=LP_MAX_ATOMS):
    """Exact W2 between discrete measures from the transportation LP.

    Only atoms of positive mass enter the program; more than
    ``max_atoms`` of them on either side raises :class:`SizeError`.
    """
    if nu.d != mu.d:
        raise DimensionError("dimensions differ")
    ia = np.flatnonzero(nu.weights > 0)
    ib = np.flatnonzero(mu.weights > 0)
    n, m = ia.size, ib.size
    if n > max_atoms or m > max_atoms:
        raise SizeError(f"{n} x {m} atoms exceed the exact solver cap {max_atoms}")
    C = _cost_matrix(nu.points[ia], mu.points[ib])
    A = sparse.vstack(
        [
            sparse.kron(sparse.eye(n), np.ones((1, m))),
            sparse.kron(np.ones((1, n)), sparse.eye(m)),
        ]
    ).tocsr()
    b = np.concatenate([nu.weights[ia], mu.weights[ib]])
    # the constraints have rank n + m - 1; keeping the redundant row lets
    # presolve declare tiny-mass problems infeasible
    A, b = A[:-1], b[:-1]
    opts = dict(LP_OPTIONS)
    res = linprog(C.ravel(), A_eq=A, b_eq=b, bounds=(0, None), method="highs-ds", options=opts)
    if res.status == 2:
        opts["presolve"] = False
        res = linprog(C.ravel(), A_eq=A, b_eq=b, bounds=(0, None), method="highs-ds", options=opts)
    if res.status != 0:
        raise RuntimeError(f"transportation LP failed: {res.message}")
    sub = np.maximum(res.x.reshape(n, m), 0.0)
    plan = np.zeros((nu.grid.size, mu.grid.size))
    plan[np.ix_(ia, ib)] = sub
    cost = float(np.sum(sub * C))
    return np.sqrt(max(cost, 0.0)), DiscreteJoint(nu.grid, mu.grid, plan / plan.sum())


def w2_bures(nu, mu):
    """Closed-form W2 between Gaussians and the optimal (degenerate) coupling."""
    if nu.d != mu.d:
        raise DimensionError("dimensions differ")
    S1, S2 = nu.cov, mu.cov
    r2 = sqrtm_psd(S2)
    cross = sqrtm_psd(r2 @ S1 @ r2)
    dm = nu.mean - mu.mean
    val = dm @ dm + np.trace(S1 + S2 - 2 * cross)
    r1 = sqrtm_psd(S1)
    r1i = np.linalg.inv(r1)
    T = r1i @ sqrtm_psd(r1 @ S2 @ r1) @ r1i
    T = 0.5 * (T + T.T)
    mean = np.concatenate([nu.mean, mu.mean])
    cov = np.block([[S1, S1 @ T], [T @ S1, S2]])
    plan = GaussianPlan(mean, cov, T, mu.mean - T @ nu.mean)
    return float(np.sqrt(max(val, 0.0))), plan


def w2(nu, mu, method="auto"):
    """Quadratic Wasserstein distance D_2(nu, mu) and an optimal coupling.

    Parameters
    ----------
    nu, mu : GridMeasure or GaussianMeasure
        Same backend and dimension.
    method : {'auto', 'quantile', 'lp', 'bures'}
        ``auto`` picks Bures for Gaussians, the monotone coupling for 1-d
        grids and the exact LP otherwise.

    Returns
    -------
    distance : float
    coupling : DiscreteJoint or GaussianPlan
    """
    if isinstance(nu, GaussianMeasure) and isinstance(mu, GaussianMeasure):
        if method not in ("auto", "bures"):
            raise ValueError(f"method {method!r} does not apply to Gaussians")
        return w2_bures(nu, mu)
    if isinstance(nu, GridMeasure) and isinstance(mu, GridMeasure):
        if method == "auto":
            method = "quantile" if nu.d == 1 and mu.d == 1 else "lp"
        if method == "quantile":
            return w2_quantile(nu, mu)
        if method == "lp":
            return w2_lp(nu, mu)
        raise ValueError(f"method {method!r} does not apply to grids")
    raise DimensionError(f"cannot compare {type(nu).__name__} with {type(mu).__name__}")


def w2_kernel_avg(mu, L, K, method="auto"):
    """The mu-average of D_2(L(x, .), K(x, .))^2 and the per-row couplings.

    For grids the couplings are a dict ``{row index: DiscreteJoint}`` over
    the atoms of positive mu-mass. For Gaussians it is a function
    ``x -> GaussianPlan``.
    """
    if isinstance(mu, GridMeasure) and isinstance(L, GridKernel) and isinstance(K, GridKernel):
        if not (L.source.same_as(K.source) and L.target.same_as(K.target)):
            raise DimensionError("kernels live on different grids")
        if not mu.grid.same_as(L.source):
            raise DimensionError("measure support and kernel source differ")
        total = 0.0
        plans = {}
        for i in np.flatnonzero(mu.weights > 0):
            dist, plan = w2(L.row(i), K.row(i), method)
            total += mu.weights[i] * dist**2
            plans[int(i)] = plan
        return float(total), plans
    if (
        isinstance(mu, GaussianMeasure)
        and isinstance(L, GaussianKernel)
        and isinstance(K, GaussianKernel)
    ):
        da = L.alpha - K.alpha
        dB = L.beta - K.beta
        c = da + dB @ mu.mean
        zero = np.zeros(K.d)
        bures, shape_plan = w2_bures(GaussianMeasure(zero, L.tau), GaussianMeasure(zero, K.tau))
        total = c @ c + np.trace(dB @ mu.cov @ dB.T) + bures**2

        def coupling_at(x):
            x = np.atleast_1d(np.asarray(x, dtype=float))
            ml, mk = L.alpha + L.beta @ x, K.alpha + K.beta @ x
            T = shape_plan.linear
            return GaussianPlan(np.concatenate([ml, mk]), shape_plan.cov, T, mk - T @ ml)

        return float(total), coupling_at
    raise DimensionError("w2_kernel_avg needs a measure and two kernels of one backend")


def glue(mu, plans, L):
    """The mixture pi_mu = sum_i mu_i pi_{x_i} of per-row grid couplings."""
    mass = np.zeros((L.target.size, L.target.size))
    for i, plan in plans.items():
        mass += mu.weights[i] * plan.mass
    return DiscreteJoint(L.target, L.target, mass / mass.sum())


def coupling_cost(P):
    """Transport cost of a discrete coupling, sum P_ij |x_i - y_j|^2."""
    return float(np.sum(P.mass * _cost_matrix(P.x_points, P.y_points)))
