"""
Probability measures, Markov kernels and couplings on R^d.

Two backends live side by side:

- grid: weighted atoms on a (usually regular) grid, kernels are
  row-stochastic matrices and couplings are mass matrices;
- gaussian: measures N(m, S), affine Gaussian kernels
  x -> N(alpha + beta x, tau) and jointly Gaussian couplings.

Mixed-backend operations are rejected; use :func:`discretize` to move a
Gaussian object onto a grid.
"""

import warnings
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from .errors import DimensionError, DomainError, ZeroMassRowWarning

MASS_TOL = 1e-12
SPD_RTOL = 1e-12


def _frozen(a, ndim=None):
    a = np.array(a, dtype=float)
    if ndim is not None and a.ndim != ndim:
        raise DimensionError(f"expected a {ndim}-d array, got shape {a.shape}")
    a.setflags(write=False)
    return a


def spd(A, what="matrix"):
    """Symmetrize ``A`` and check it is numerically positive definite.

    Fails if the smallest eigenvalue is below ``1e-12`` times the largest.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] != A.shape[1]:
        raise DimensionError(f"{what} must be square, got {A.shape}")
    A = 0.5 * (A + A.T)
    ev = np.linalg.eigvalsh(A)
    if not np.all(np.isfinite(ev)) or ev[-1] <= 0 or ev[0] < SPD_RTOL * ev[-1]:
        raise DomainError(f"{what} is not positive definite (eigenvalues {ev})")
    return A


# --------------------------------------------------------------------------
# supports
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Grid:
    """Finite support in R^d.

    Parameters
    ----------
    points : ndarray, shape (N, d)
        Support points, pairwise distinct.
    cell_volume : float
        Lebesgue volume of one grid cell (the reference measure of a
        density on the grid). Use 1.0 for an arbitrary point cloud.
    axes : tuple of ndarray or None
        One coordinate vector per dimension when ``points`` is the
        'ij'-ordered tensor grid of these axes. Needed for finite
        differences.
    """

    points: np.ndarray
    cell_volume: float = 1.0
    axes: Optional[Tuple[np.ndarray, ...]] = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise DimensionError(f"points must be a non-empty (N, d) array, got {pts.shape}")
        if not self.cell_volume > 0:
            raise DomainError("cell_volume must be positive")
        if len(np.unique(pts, axis=0)) != len(pts):
            raise DimensionError("grid points must be pairwise distinct")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "cell_volume", float(self.cell_volume))
        if self.axes is not None:
            axes = tuple(_frozen(a, 1) for a in self.axes)
            if len(axes) != pts.shape[1] or np.prod([len(a) for a in axes]) != len(pts):
                raise DimensionError("axes do not match the grid points")
            object.__setattr__(self, "axes", axes)

    @classmethod
    def regular(cls, lo, hi, n):
        """Regular tensor grid with ``n`` nodes per axis on the box [lo, hi]."""
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DimensionError("lo and hi must be vectors of equal length")
        if lo.size > 2:
            raise DimensionError("regular grids are supported for d <= 2 only")
        if np.any(hi <= lo):
            raise DomainError("grid bounds must satisfy lo < hi")
        ns = np.broadcast_to(np.atleast_1d(n), lo.shape).astype(int)
        if np.any(ns < 2):
            raise DomainError("need at least two nodes per axis")
        axes = tuple(np.linspace(a, b, k) for a, b, k in zip(lo, hi, ns))
        mesh = np.meshgrid(*axes, indexing="ij")
        points = np.stack([m.ravel() for m in mesh], axis=1)
        vol = float(np.prod([(b - a) / (k - 1) for a, b, k in zip(lo, hi, ns)]))
        return cls(points, vol, axes)

    @property
    def d(self):
        return self.points.shape[1]

    @property
    def size(self):
        return self.points.shape[0]

    @property
    def shape(self):
        if self.axes is None:
            return (self.size,)
        return tuple(len(a) for a in self.axes)

    @property
    def spacing(self):
        if self.axes is None:
            raise DimensionError("spacing is only defined for regular grids")
        return tuple(float(a[1] - a[0]) for a in self.axes)

    def same_as(self, other):
        return self is other or (
            isinstance(other, Grid)
            and self.points.shape == other.points.shape
            and np.array_equal(self.points, other.points)
        )


def _check_same_grid(a, b, what="supports"):
    if not a.same_as(b):
        raise DimensionError(f"{what} do not match")


# --------------------------------------------------------------------------
# measures
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GridMeasure:
    """Discrete probability measure: ``weights[i]`` at ``grid.points[i]``."""

    grid: Grid
    weights: np.ndarray

    def __post_init__(self):
        w = _frozen(self.weights, 1)
        if w.shape[0] != self.grid.size:
            raise DimensionError("one weight per grid point is required")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise DomainError("weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > MASS_TOL:
            raise DomainError(f"weights sum to {w.sum()!r}, not 1")
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_log_density(cls, grid, log_density):
        """Normalize ``exp(log_density)`` on ``grid`` (cell volume cancels)."""
        ld = np.asarray(log_density, dtype=float)
        w = np.exp(ld - ld.max())
        return cls(grid, w / w.sum())

    @classmethod
    def dirac(cls, grid, index):
        w = np.zeros(grid.size)
        w[index] = 1.0
        return cls(grid, w)

    @classmethod
    def uniform(cls, grid):
        return cls(grid, np.full(grid.size, 1.0 / grid.size))

    points = property(lambda self: self.grid.points)
    cell_volume = property(lambda self: self.grid.cell_volume)
    d = property(lambda self: self.grid.d)

    @property
    def potential(self):
        """Grid potential U with weights = exp(-U) * cell_volume (+inf off support)."""
        with np.errstate(divide="ignore"):
            return -np.log(self.weights / self.cell_volume)

    def mean(self):
        return self.weights @ self.points

    def cov(self):
        c = self.points - self.mean()
        return (self.weights[:, None] * c).T @ c


@dataclass(frozen=True, eq=False)
class GaussianMeasure:
    """Gaussian measure N(mean, cov) on R^d."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        m = _frozen(np.atleast_1d(self.mean), 1)
        S = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if S.shape != (m.size, m.size):
            raise DimensionError(f"cov has shape {S.shape}, expected {(m.size, m.size)}")
        if np.max(np.abs(S - S.T), initial=0.0) > MASS_TOL * max(1.0, np.abs(S).max()):
            raise DomainError("cov must be symmetric")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "cov", _frozen(spd(S, "cov")))

    @property
    def d(self):
        return self.mean.size

    @property
    def precision(self):
        return np.linalg.inv(self.cov)

    def log_density(self, x):
        x = np.atleast_2d(x)
        c = x - self.mean
        P = self.precision
        _, logdet = np.linalg.slogdet(2 * np.pi * self.cov)
        return -0.5 * np.einsum("ni,ij,nj->n", c, P, c) - 0.5 * logdet


Measure = Union[GridMeasure, GaussianMeasure]


# --------------------------------------------------------------------------
# kernels
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GridKernel:
    """Row-stochastic Markov matrix with ``rows[i, j] = K(x_i, {y_j})``."""

    source: Grid
    target: Grid
    rows: np.ndarray

    def __post_init__(self):
        R = _frozen(self.rows, 2)
        if R.shape != (self.source.size, self.target.size):
            raise DimensionError(
                f"rows has shape {R.shape}, expected {(self.source.size, self.target.size)}"
            )
        if np.any(R < 0) or not np.all(np.isfinite(R)):
            raise DomainError("kernel entries must be finite and nonnegative")
        if np.max(np.abs(R.sum(axis=1) - 1.0)) > MASS_TOL:
            raise DomainError("every kernel row must sum to 1")
        object.__setattr__(self, "rows", R)

    @classmethod
    def identity(cls, grid):
        return cls(grid, grid, np.eye(grid.size))

    def row(self, i):
        """The measure K(x_i, .) on the target grid."""
        return GridMeasure(self.target, self.rows[i])


@dataclass(frozen=True, eq=False)
class GaussianKernel:
    """Linear Gaussian transition x -> N(alpha + beta x, tau)."""

    alpha: np.ndarray
    beta: np.ndarray
    tau: np.ndarray

    def __post_init__(self):
        a = _frozen(np.atleast_1d(self.alpha), 1)
        d = a.size
        B = np.atleast_2d(np.asarray(self.beta, dtype=float))
        T = np.atleast_2d(np.asarray(self.tau, dtype=float))
        if B.shape != (d, d) or T.shape != (d, d):
            raise DimensionError("alpha, beta and tau dimensions disagree")
        if not np.isfinite(np.linalg.cond(B)) or abs(np.linalg.det(B)) == 0:
            raise DomainError("beta must be invertible")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", _frozen(B))
        object.__setattr__(self, "tau", _frozen(spd(T, "tau")))

    @property
    def d(self):
        return self.alpha.size

    @property
    def chi(self):
        """The matrix tau^{-1} beta."""
        return np.linalg.solve(self.tau, self.beta)

    def at(self, x):
        """The Gaussian measure K(x, .)."""
        return GaussianMeasure(self.alpha + self.beta @ np.atleast_1d(x), self.tau)

    def log_transition_density(self, x, y):
        """Matrix of log g_tau(y_j - alpha - beta x_i) = -W(x_i, y_j)."""
        x = np.atleast_2d(x)
        y = np.atleast_2d(y)
        r = y[None, :, :] - (self.alpha + x @ self.beta.T)[:, None, :]
        P = np.linalg.inv(self.tau)
        _, logdet = np.linalg.slogdet(2 * np.pi * self.tau)
        return -0.5 * np.einsum("ijk,kl,ijl->ij", r, P, r) - 0.5 * logdet


Kernel = Union[GridKernel, GaussianKernel]


# --------------------------------------------------------------------------
# joints
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DiscreteJoint:
    """Coupling on grid x grid with ``mass[i, j] = P({x_i} x {y_j})``."""

    x: Grid
    y: Grid
    mass: np.ndarray

    def __post_init__(self):
        M = _frozen(self.mass, 2)
        if M.shape != (self.x.size, self.y.size):
            raise DimensionError("mass shape does not match the supports")
        if np.any(M < 0) or not np.all(np.isfinite(M)):
            raise DomainError("mass entries must be finite and nonnegative")
        if abs(M.sum() - 1.0) > MASS_TOL:
            raise DomainError(f"total mass is {M.sum()!r}, not 1")
        object.__setattr__(self, "mass", M)

    x_points = property(lambda self: self.x.points)
    y_points = property(lambda self: self.y.points)

    def first(self):
        return GridMeasure(self.x, _renorm(self.mass.sum(axis=1)))

    def second(self):
        return GridMeasure(self.y, _renorm(self.mass.sum(axis=0)))


@dataclass(frozen=True, eq=False)
class GaussianJoint:
    """Jointly Gaussian coupling of (X, Y), each in R^d."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        m = _frozen(self.mean, 1)
        if m.size % 2:
            raise DimensionError("joint mean must have even length 2d")
        S = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if S.shape != (m.size, m.size):
            raise DimensionError("joint cov shape does not match the mean")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "cov", _frozen(spd(S, "joint cov")))

    @property
    def d(self):
        return self.mean.size // 2

    def blocks(self):
        """Return (mean_x, mean_y, S_xx, S_xy, S_yy)."""
        d = self.d
        S = self.cov
        return self.mean[:d], self.mean[d:], S[:d, :d], S[:d, d:], S[d:, d:]

    def first(self):
        mx, _, Sxx, _, _ = self.blocks()
        return GaussianMeasure(mx, Sxx)

    def second(self):
        _, my, _, _, Syy = self.blocks()
        return GaussianMeasure(my, Syy)


Joint = Union[DiscreteJoint, GaussianJoint]


def _renorm(w):
    # marginal sums of a unit-mass matrix can drift by one ulp per atom
    return w / w.sum()


# --------------------------------------------------------------------------
# operations
# --------------------------------------------------------------------------


def _backend_pair(mu, K):
    if isinstance(mu, GridMeasure) and isinstance(K, GridKernel):
        _check_same_grid(mu.grid, K.source, "measure support and kernel source")
        return "grid"
    if isinstance(mu, GaussianMeasure) and isinstance(K, GaussianKernel):
        if mu.d != K.d:
            raise DimensionError("measure and kernel dimensions differ")
        return "gaussian"
    raise DimensionError(
        f"cannot combine {type(mu).__name__} with {type(K).__name__}; use discretize()"
    )


def product(mu, K):
    """The joint law mu(dx) K(x, dy).

    Parameters
    ----------
    mu : GridMeasure or GaussianMeasure
    K : GridKernel or GaussianKernel
        Same backend as ``mu``; a grid kernel's source must be ``mu``'s grid.

    Returns
    -------
    DiscreteJoint or GaussianJoint
    """
    if _backend_pair(mu, K) == "grid":
        return DiscreteJoint(mu.grid, K.target, mu.weights[:, None] * K.rows)
    m, S = mu.mean, mu.cov
    B = K.beta
    mean = np.concatenate([m, K.alpha + B @ m])
    SB = S @ B.T
    cov = np.block([[S, SB], [SB.T, K.tau + B @ S @ B.T]])
    return GaussianJoint(mean, cov)


def push(mu, K):
    """The image measure mu K (second marginal of ``product(mu, K)``)."""
    if _backend_pair(mu, K) == "grid":
        return GridMeasure(K.target, _renorm(mu.weights @ K.rows))
    B = K.beta
    return GaussianMeasure(K.alpha + B @ mu.mean, K.tau + B @ mu.cov @ B.T)


def flip(P):
    """Exchange the two coordinates of a coupling."""
    if isinstance(P, DiscreteJoint):
        return DiscreteJoint(P.y, P.x, P.mass.T)
    d = P.d
    perm = np.r_[np.arange(d, 2 * d), np.arange(d)]
    return GaussianJoint(P.mean[perm], P.cov[np.ix_(perm, perm)])


def disintegrate(P, coordinate="first"):
    """Split a coupling into a marginal and a conditional kernel.

    With ``coordinate="first"`` returns ``(law of X, law of Y given X)``;
    with ``"second"`` returns ``(law of Y, law of X given Y)``.

    Discrete marginal atoms of zero mass get a uniform placeholder row and
    a :class:`ZeroMassRowWarning`; they carry no mass, so
    ``product(marginal, kernel)`` still reproduces ``P``.
    """
    if coordinate not in ("first", "second"):
        raise ValueError("coordinate must be 'first' or 'second'")
    if coordinate == "second":
        P = flip(P)
    if isinstance(P, DiscreteJoint):
        w = P.mass.sum(axis=1)
        rows = np.empty_like(P.mass)
        empty = w <= 0
        if np.any(empty):
            warnings.warn(
                f"{int(empty.sum())} marginal atom(s) carry no mass; "
                "their kernel rows are set to uniform",
                ZeroMassRowWarning,
                stacklevel=2,
            )
            rows[empty] = 1.0 / P.y.size
        rows[~empty] = P.mass[~empty] / w[~empty, None]
        rows[~empty] /= rows[~empty].sum(axis=1, keepdims=True)
        return GridMeasure(P.x, _renorm(w)), GridKernel(P.x, P.y, rows)
    mx, my, Sxx, Sxy, Syy = P.blocks()
    beta = np.linalg.solve(Sxx, Sxy).T
    tau = spd(Syy - beta @ Sxy, "conditional covariance")
    return GaussianMeasure(mx, Sxx), GaussianKernel(my - beta @ mx, beta, tau)


def default_grid(measure, n, width=6.0):
    """Regular grid on mean +/- ``width`` standard deviations (per axis)."""
    sd = np.sqrt(np.diag(measure.cov))
    return Grid.regular(measure.mean - width * sd, measure.mean + width * sd, n)


def discretize(obj, grid, target=None):
    """Move a Gaussian measure or kernel onto grids.

    A measure N(m, S) becomes the normalized density on ``grid``. A kernel
    becomes the row-normalized transition density from ``grid`` to
    ``target`` (defaults to ``grid``).
    """
    if isinstance(obj, GaussianMeasure):
        if grid.d != obj.d:
            raise DimensionError("grid and measure dimensions differ")
        return GridMeasure.from_log_density(grid, obj.log_density(grid.points))
    if isinstance(obj, GaussianKernel):
        target = grid if target is None else target
        if grid.d != obj.d or target.d != obj.d:
            raise DimensionError("grid and kernel dimensions differ")
        logk = obj.log_transition_density(grid.points, target.points)
        logk -= logk.max(axis=1, keepdims=True)
        rows = np.exp(logk)
        return GridKernel(grid, target, rows / rows.sum(axis=1, keepdims=True))
    raise TypeError(f"cannot discretize {type(obj).__name__}")


def marginals(P):
    return P.first(), P.second()
