"""
Sinkhorn (IPFP) iterations, Schrodinger bridges and Sinkhorn potentials.

The iterates P_n alternate between the two single-marginal constraint
sets: from an even index the second marginal is reset to ``eta`` keeping
the law of X given Y, from an odd index the first marginal is reset to
``mu`` keeping the law of Y given X. The grid backend does this as a
log-domain row/column scaling, the Gaussian backend through Gaussian
conditioning.

Potentials follow the integral recursions started at ``V_0 = 0``::

    U_{2n}   = U + log K_W(exp(-V_{2n}))       = U_{2n+1}
    V_{2n+1} = V + log K_W^flat(exp(-U_{2n+1})) = V_{2n+2}

so that P_n(dx, dy) = exp(-U_n(x) - W(x, y) - V_n(y)) dx dy. On a grid,
W is the log of the discretized (row-normalized) reference kernel, so the
product form is exact on the grid. Gaussian potentials are quadratic
forms and are propagated in closed form.
"""

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .errors import ConvergenceError, DimensionError, SupportError
from .measures import (
    DiscreteJoint,
    GaussianJoint,
    GaussianKernel,
    GaussianMeasure,
    GridKernel,
    GridMeasure,
    disintegrate,
    flip,
    product,
    spd,
)
from .metrics import grid_gradient, kl
from .moments import AffineField, ConstantField, MatrixField

GRID_TOL = 1e-10
GAUSSIAN_TOL = 1e-12
MAX_ITER = 10_000


# --------------------------------------------------------------------------
# quadratic potentials (Gaussian backend)
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Quadratic:
    """The function z -> 1/2 z'Az + b'z + c on R^k."""

    A: np.ndarray
    b: np.ndarray
    c: float = 0.0

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        object.__setattr__(self, "A", 0.5 * (A + A.T))
        object.__setattr__(self, "b", np.atleast_1d(np.asarray(self.b, dtype=float)))
        object.__setattr__(self, "c", float(self.c))

    @classmethod
    def zero(cls, k):
        return cls(np.zeros((k, k)), np.zeros(k), 0.0)

    @classmethod
    def from_gaussian(cls, g):
        """-log density of N(m, S)."""
        P = g.precision
        _, logdet = np.linalg.slogdet(2 * np.pi * g.cov)
        return cls(P, -P @ g.mean, 0.5 * g.mean @ P @ g.mean + 0.5 * logdet)

    @classmethod
    def transition(cls, K):
        """W(x, y) = -log g_tau(y - alpha - beta x) as a form in z = (x, y)."""
        D = np.hstack([-K.beta, np.eye(K.d)])
        P = np.linalg.inv(K.tau)
        _, logdet = np.linalg.slogdet(2 * np.pi * K.tau)
        return cls(D.T @ P @ D, -D.T @ P @ K.alpha, 0.5 * K.alpha @ P @ K.alpha + 0.5 * logdet)

    @property
    def k(self):
        return self.b.size

    def __call__(self, z):
        z = np.atleast_2d(z)
        return 0.5 * np.einsum("ni,ij,nj->n", z, self.A, z) + z @ self.b + self.c

    def __add__(self, other):
        return Quadratic(self.A + other.A, self.b + other.b, self.c + other.c)

    def __sub__(self, other):
        return Quadratic(self.A - other.A, self.b - other.b, self.c - other.c)

    def shift(self, c):
        return Quadratic(self.A, self.b, self.c + c)

    def embed(self, block, d):
        """Lift a form on R^d to z = (x, y) in R^2d acting on ``block``."""
        A = np.zeros((2 * d, 2 * d))
        b = np.zeros(2 * d)
        s = slice(0, d) if block == "x" else slice(d, 2 * d)
        A[s, s] = self.A
        b[s] = self.b
        return Quadratic(A, b, self.c)

    def integrate_out(self, block):
        """The form -log of the integral of exp(-q) over ``block`` of z = (x, y)."""
        d = self.k // 2
        keep, drop = (slice(d, 2 * d), slice(0, d)) if block == "x" else (slice(0, d), slice(d, 2 * d))
        Akk, Akd, Add = self.A[keep, keep], self.A[keep, drop], self.A[drop, drop]
        Add = spd(Add, "integrated block")
        G = np.linalg.solve(Add, np.column_stack([Akd.T, self.b[drop]]))
        _, logdet = np.linalg.slogdet(Add / (2 * np.pi))
        A = Akk - Akd @ G[:, :d]
        b = self.b[keep] - Akd @ G[:, d]
        c = self.c - 0.5 * self.b[drop] @ G[:, d] + 0.5 * logdet
        return Quadratic(A, b, c)

    def mean_under(self, g):
        """E_g[q(X)] for a Gaussian g."""
        return float(0.5 * np.trace(self.A @ g.cov) + self(g.mean)[0])

    def to_joint(self):
        """Normalized Gaussian with density proportional to exp(-q), and log of the mass."""
        A = spd(self.A, "joint precision")
        cov = np.linalg.inv(A)
        mean = -cov @ self.b
        _, logdet = np.linalg.slogdet(A / (2 * np.pi))
        log_mass = -self.c + 0.5 * self.b @ cov @ self.b - 0.5 * logdet
        return GaussianJoint(mean, 0.5 * (cov + cov.T)), float(log_mass)


# --------------------------------------------------------------------------
# states
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SinkhornState:
    """Snapshot of the n-th Sinkhorn iterate.

    Attributes
    ----------
    n : int
    P : DiscreteJoint or GaussianJoint
        The iterate P_n.
    pi : GridMeasure or GaussianMeasure
        Its free marginal: the second one for even n, the first for odd n.
    U, V : ndarray or Quadratic or None
        Potentials (U_n, V_n) when tracked.
    log_mass : ndarray or None
        Log of ``P.mass`` (grid backend), kept to avoid underflow.
    """

    n: int
    P: object
    pi: object
    U: Optional[object] = None
    V: Optional[object] = None
    log_mass: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def parity(self):
        return "even" if self.n % 2 == 0 else "odd"


@dataclass(frozen=True, eq=False)
class Bridge:
    """Schrodinger bridge P* = exp(-UU - W - VV) with gauge mu(UU - U) = 0."""

    P_star: object
    U_star: object
    V_star: object
    iterations_used: int
    residual: float
    gauge: float = 0.0
    system_residual: float = 0.0


def _backend(mu, eta, K0):
    if all(isinstance(o, GridMeasure) for o in (mu, eta)) and isinstance(K0, GridKernel):
        if not (mu.grid.same_as(K0.source) and eta.grid.same_as(K0.target)):
            raise DimensionError("kernel grids must be the grids of mu and eta")
        return "grid"
    if all(isinstance(o, GaussianMeasure) for o in (mu, eta)) and isinstance(K0, GaussianKernel):
        if not mu.d == eta.d == K0.d:
            raise DimensionError("dimensions differ")
        return "gaussian"
    raise DimensionError("mu, eta and K0 must all be grid objects or all Gaussian")


def _log(w):
    with np.errstate(divide="ignore"):
        return np.log(w)


def marginal_potentials(mu, eta):
    """(U, V): -log densities of mu and eta w.r.t. Lebesgue measure."""
    if isinstance(mu, GridMeasure):
        return mu.potential, eta.potential
    return Quadratic.from_gaussian(mu), Quadratic.from_gaussian(eta)


def _grid_W(K0):
    # W_ij = -log(K0_ij / cell volume of the target), +inf where the row vanishes
    return -(_log(K0.rows) - np.log(K0.target.cell_volume))


def initial_state(mu, eta, K0, potentials=True):
    """The state P_0 = mu x K0 with U_0 = U + log K_W(1) and V_0 = 0."""
    backend = _backend(mu, eta, K0)
    P = product(mu, K0)
    if backend == "grid":
        state = SinkhornState(0, P, P.second(), log_mass=_log(mu.weights)[:, None] + _log(K0.rows))
    else:
        state = SinkhornState(0, P, P.second())
    if not potentials:
        return state
    U, V = marginal_potentials(mu, eta)
    V0 = np.zeros(eta.grid.size) if backend == "grid" else Quadratic.zero(eta.d)
    U0 = _update_U(U, V0, K0)
    return SinkhornState(0, P, state.pi, U0, V0, state.log_mass)


def _update_U(U, Vn, K0):
    """U + log K_W(exp(-Vn))."""
    if isinstance(K0, GridKernel):
        logK = _log(K0.rows)
        return U + logsumexp(logK - Vn[None, :], axis=1)
    d = K0.d
    joint = Quadratic.transition(K0) + Vn.embed("y", d)
    return U - joint.integrate_out("y")


def _update_V(V, Un, K0):
    """V + log K_W^flat(exp(-Un))."""
    if isinstance(K0, GridKernel):
        W = _grid_W(K0)
        lx = np.log(K0.source.cell_volume)
        return V + logsumexp(-W - Un[:, None] + lx, axis=0)
    d = K0.d
    joint = Quadratic.transition(K0) + Un.embed("x", d)
    return V - joint.integrate_out("x")


def potentials_update(state, U, V, K0):
    """Advance (U_n, V_n) of ``state`` to (U_{n+1}, V_{n+1}).

    From an even n the V-potential is refreshed and U is carried over;
    from an odd n the U-potential is refreshed and V is carried over.

    Parameters
    ----------
    state : SinkhornState
        Must carry ``U`` and ``V``.
    U, V : ndarray or Quadratic
        Marginal potentials, -log densities of mu and eta.
    K0 : GridKernel or GaussianKernel
        The reference transition.
    """
    if state.U is None or state.V is None:
        raise ValueError("state does not carry potentials")
    if state.n % 2 == 0:
        return state.U, _update_V(V, state.U, K0)
    return _update_U(U, state.V, K0), state.V


def joint_from_potentials(Un, Vn, K0):
    """Rebuild exp(-Un(x) - W(x, y) - Vn(y)) dx dy.

    Returns the normalized joint and the log of its total mass before
    normalization (0 when the potentials are consistent).
    """
    if isinstance(K0, GridKernel):
        lx = np.log(K0.source.cell_volume)
        ly = np.log(K0.target.cell_volume)
        logP = -Un[:, None] - _grid_W(K0) - Vn[None, :] + lx + ly
        log_total = logsumexp(logP)
        return DiscreteJoint(K0.source, K0.target, np.exp(logP - log_total)), float(log_total)
    d = K0.d
    q = Un.embed("x", d) + Quadratic.transition(K0) + Vn.embed("y", d)
    return q.to_joint()


def marginal_residuals(P, mu, eta):
    """Distances of the marginals of P to (mu, eta).

    Total variation on grids, largest parameter deviation for Gaussians.
    """
    if isinstance(P, DiscreteJoint):
        r1 = 0.5 * np.abs(P.mass.sum(axis=1) - mu.weights).sum()
        r2 = 0.5 * np.abs(P.mass.sum(axis=0) - eta.weights).sum()
        return float(r1), float(r2)
    out = []
    for g, target in ((P.first(), mu), (P.second(), eta)):
        out.append(
            max(np.abs(g.mean - target.mean).max(), np.abs(g.cov - target.cov).max())
        )
    return float(out[0]), float(out[1])


def sinkhorn_step(state, mu, eta, K0=None):
    """One Sinkhorn half-step P_n -> P_{n+1}.

    From an even index the second marginal is set to ``eta``, from an odd
    index the first marginal is set to ``mu``; the corresponding
    conditional law is kept. Potentials are advanced too when ``K0`` is
    given and ``state`` carries them.

    Raises
    ------
    SupportError
        A grid atom that must receive mass has no mass in P_n.
    """
    odd_next = state.n % 2 == 0
    P = state.P
    if isinstance(P, DiscreteJoint):
        L = state.log_mass
        if L is None:
            L = _log(P.mass)
        axis, target = (0, eta.weights) if odd_next else (1, mu.weights)
        lsum = logsumexp(L, axis=axis)
        if np.any(np.isneginf(lsum) & (target > 0)):
            raise SupportError(
                "the current plan has no mass where the target marginal is positive; "
                "the entropic problem is infeasible on this grid"
            )
        with np.errstate(invalid="ignore"):
            shift = np.where(np.isneginf(lsum), -np.inf, _log(target) - lsum)
        L = L + (shift[None, :] if odd_next else shift[:, None])
        L = np.where(np.isnan(L), -np.inf, L)
        mass = np.exp(L)
        mass /= mass.sum()
        newP = DiscreteJoint(P.x, P.y, mass)
        pi = newP.first() if odd_next else newP.second()
    else:
        if odd_next:
            _, back = disintegrate(P, "second")
            newP = flip(product(eta, back))
            pi = newP.first()
        else:
            _, fwd = disintegrate(P, "first")
            newP = product(mu, fwd)
            pi = newP.second()
        L = None
    U = V = None
    if K0 is not None and state.U is not None:
        U0, V0 = marginal_potentials(mu, eta)
        U, V = potentials_update(state, U0, V0, K0)
    return SinkhornState(state.n + 1, newP, pi, U, V, L)


def iterate(mu, eta, K0, n_steps, potentials=True):
    """The states P_0, ..., P_{n_steps}."""
    state = initial_state(mu, eta, K0, potentials)
    states = [state]
    for _ in range(n_steps):
        state = sinkhorn_step(state, mu, eta, K0 if potentials else None)
        states.append(state)
    return states


def gauge_constant(Un, mu):
    """mu(U_n - U): the additive constant fixed to zero for bridge potentials."""
    U, _ = marginal_potentials(mu, mu)
    if isinstance(mu, GridMeasure):
        live = mu.weights > 0
        return float(mu.weights[live] @ (Un[live] - U[live]))
    return (Un - U).mean_under(mu)


def schrodinger_residual(UU, VV, mu, eta, K0):
    """Sup-norm residual of UU = U + log K_W(e^-VV), VV = V + log K_W^flat(e^-UU).

    Grid: over atoms of positive mass. Gaussian: over the coefficients.
    """
    U, V = marginal_potentials(mu, eta)
    rU = UU - _update_U(U, VV, K0)
    rV = VV - _update_V(V, UU, K0)
    if isinstance(K0, GridKernel):
        a = np.abs(rU[mu.weights > 0]).max()
        b = np.abs(rV[eta.weights > 0]).max()
        return float(max(a, b))
    return float(
        max(np.abs(r.A).max() + np.abs(r.b).max() + abs(r.c) for r in (rU, rV))
    )


def solve_bridge(mu, eta, K0, tol=None, max_iter=MAX_ITER, keep_states=False):
    """Schrodinger bridge from ``mu`` to ``eta`` w.r.t. ``mu x K0`` as a Sinkhorn limit.

    Iterates until the larger of the two marginal residuals (see
    :func:`marginal_residuals`) drops below ``tol``.

    Parameters
    ----------
    mu, eta : GridMeasure or GaussianMeasure
    K0 : GridKernel or GaussianKernel
    tol : float, optional
        Defaults to 1e-10 on grids and 1e-12 for Gaussians.
    max_iter : int
    keep_states : bool
        Also return the list of visited states.

    Returns
    -------
    Bridge, or (Bridge, list of SinkhornState)

    Raises
    ------
    ConvergenceError
        ``max_iter`` steps without reaching ``tol``.
    """
    backend = _backend(mu, eta, K0)
    if tol is None:
        tol = GRID_TOL if backend == "grid" else GAUSSIAN_TOL
    state = initial_state(mu, eta, K0)
    states = [state]
    res = max(marginal_residuals(state.P, mu, eta))
    while res >= tol:
        if state.n >= max_iter:
            raise ConvergenceError(
                f"no convergence after {state.n} iterations (residual {res:.3e})",
                residual=res,
                iterations=state.n,
            )
        state = sinkhorn_step(state, mu, eta, K0)
        if keep_states:
            states.append(state)
        res = max(marginal_residuals(state.P, mu, eta))
    c = gauge_constant(state.U, mu)
    if backend == "grid":
        UU, VV = state.U - c, state.V + c
    else:
        UU, VV = state.U.shift(-c), state.V.shift(c)
    bridge = Bridge(
        state.P,
        UU,
        VV,
        state.n,
        res,
        gauge=c,
        system_residual=schrodinger_residual(UU, VV, mu, eta, K0),
    )
    return (bridge, states) if keep_states else bridge


def kernel_at(obj, parity=None):
    """Markov transition of a state or bridge.

    Even parity: the law of Y given X (K_{2n}, or L_{mu,eta} for a bridge).
    Odd parity: the law of X given Y, read off the flipped joint
    (K_{2n+1}, or the conjugate bridge transition).
    """
    if isinstance(obj, SinkhornState):
        parity = parity or obj.parity
        P = obj.P
    elif isinstance(obj, Bridge):
        if parity is None:
            raise ValueError("a bridge needs an explicit parity")
        P = obj.P_star
    else:
        raise TypeError(f"expected a SinkhornState or Bridge, got {type(obj).__name__}")
    if parity == "even":
        return disintegrate(P, "first")[1]
    if parity == "odd":
        return disintegrate(flip(P), "first")[1]
    raise ValueError("parity must be 'even' or 'odd'")


def grad_potential(f, grid=None):
    """Gradient field of a potential.

    A :class:`Quadratic` gives the exact affine field; a grid array needs
    its regular ``grid`` and uses central differences.
    """
    if isinstance(f, Quadratic):
        return AffineField(f.b, f.A)
    return MatrixField(grid.points, grid_gradient(f, grid)[:, :, None])


def hess_potential(f, grid=None):
    """Hessian field of a potential (constant for a quadratic)."""
    if isinstance(f, Quadratic):
        return ConstantField(f.A)
    g = grid_gradient(f, grid)
    H = np.stack([grid_gradient(g[:, k], grid) for k in range(grid.d)], axis=1)
    H = 0.5 * (H + np.swapaxes(H, 1, 2))
    return MatrixField(grid.points, H)


def trajectory_rows(states, mu, eta, bridge=None):
    """Per-iteration records: n, residuals, kl(P* | P_n), gauge constant."""
    rows = []
    for s in states:
        r1, r2 = marginal_residuals(s.P, mu, eta)
        rows.append(
            {
                "n": s.n,
                "residual_first": r1,
                "residual_second": r2,
                "residual": max(r1, r2),
                "kl_star": kl(bridge.P_star, s.P) if bridge is not None else float("nan"),
                "gauge": gauge_constant(s.U, mu) if s.U is not None else float("nan"),
            }
        )
    return rows


def write_trajectory(path, rows):
    cols = ["n", "residual", "residual_first", "residual_second", "kl_star", "gauge"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([r["n"]] + [format(float(r[c]), ".17g") for c in cols[1:]])
