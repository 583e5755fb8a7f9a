"""
Conditional moments of Markov kernels and norms of matrix-valued fields.

Fields over a grid are stored pointwise (:class:`MatrixField`). Fields
attached to Gaussian kernels are affine or constant, so they are kept in
closed form (:class:`AffineField`, :class:`ConstantField`) and only
materialized on a grid when compared against grid fields.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .measures import (
    DiscreteJoint,
    GaussianJoint,
    GaussianKernel,
    GaussianMeasure,
    GridKernel,
    GridMeasure,
)


def spectral_norm(M):
    """Largest singular value, sqrt of the top eigenvalue of M'M."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return float(np.linalg.norm(M, 2))


def frobenius_norm(M):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return float(np.sqrt(np.sum(M * M)))


@dataclass(frozen=True, eq=False)
class MatrixField:
    """One ``p x q`` matrix per support point; vectors are ``p x 1``."""

    support: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        s = np.array(self.support, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None, None]
        elif v.ndim == 2:
            v = v[:, :, None]
        if v.ndim != 3 or v.shape[0] != s.shape[0]:
            raise DimensionError("need one matrix per support point")
        s.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "support", s)
        object.__setattr__(self, "values", v)

    @property
    def shape(self):
        return self.values.shape[1:]

    def _check(self, other):
        if not isinstance(other, MatrixField):
            raise DimensionError("cannot mix pointwise and closed-form fields; materialize first")
        if self.support.shape != other.support.shape or not np.array_equal(
            self.support, other.support
        ):
            raise DimensionError("field supports differ")
        if self.shape != other.shape:
            raise DimensionError("field value shapes differ")

    def __sub__(self, other):
        self._check(other)
        return MatrixField(self.support, self.values - other.values)

    def __add__(self, other):
        self._check(other)
        return MatrixField(self.support, self.values + other.values)

    def __mul__(self, c):
        return MatrixField(self.support, c * self.values)

    __rmul__ = __mul__

    def left(self, A):
        """The field x -> A f(x)."""
        return MatrixField(self.support, np.einsum("ij,njk->nik", np.atleast_2d(A), self.values))

    def sandwich(self, A, B):
        """The field x -> A f(x) B."""
        A, B = np.atleast_2d(A), np.atleast_2d(B)
        return MatrixField(self.support, np.einsum("ij,njk,kl->nil", A, self.values, B))

    def restrict(self, mask):
        return MatrixField(self.support[mask], self.values[mask])

    def sup_norm(self):
        """Largest Frobenius norm over the support."""
        return float(np.sqrt(np.max(np.sum(self.values**2, axis=(1, 2)))))

    def materialize(self, support):
        self._check(MatrixField(support, self.values))
        return self

    def to_csv(self, path):
        """Write x-coordinates followed by the row-major matrix entries."""
        d = self.support.shape[1]
        p, q = self.shape
        header = [f"x{k}" for k in range(d)] + [f"v{i}{j}" for i in range(p) for j in range(q)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for x, v in zip(self.support, self.values.reshape(len(self.support), -1)):
                w.writerow([format(float(t), ".17g") for t in np.concatenate([x, v])])


@dataclass(frozen=True, eq=False)
class AffineField:
    """Closed-form vector field x -> offset + linear @ x."""

    offset: np.ndarray
    linear: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "offset", np.atleast_1d(np.asarray(self.offset, dtype=float)))
        object.__setattr__(self, "linear", np.atleast_2d(np.asarray(self.linear, dtype=float)))

    @property
    def shape(self):
        return (self.offset.size, 1)

    def __sub__(self, other):
        if not isinstance(other, AffineField):
            raise DimensionError("field kinds differ")
        return AffineField(self.offset - other.offset, self.linear - other.linear)

    def __add__(self, other):
        if not isinstance(other, AffineField):
            raise DimensionError("field kinds differ")
        return AffineField(self.offset + other.offset, self.linear + other.linear)

    def __mul__(self, c):
        return AffineField(c * self.offset, c * self.linear)

    __rmul__ = __mul__

    def left(self, A):
        A = np.atleast_2d(A)
        return AffineField(A @ self.offset, A @ self.linear)

    def materialize(self, support):
        s = np.atleast_2d(np.asarray(support, dtype=float))
        if s.shape[1] != self.linear.shape[1]:
            s = s.reshape(-1, self.linear.shape[1])
        return MatrixField(s, self.offset + s @ self.linear.T)


@dataclass(frozen=True, eq=False)
class ConstantField:
    """Closed-form constant matrix field."""

    value: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "value", np.atleast_2d(np.asarray(self.value, dtype=float)))

    @property
    def shape(self):
        return self.value.shape

    def __sub__(self, other):
        if not isinstance(other, ConstantField):
            raise DimensionError("field kinds differ")
        return ConstantField(self.value - other.value)

    def __add__(self, other):
        if not isinstance(other, ConstantField):
            raise DimensionError("field kinds differ")
        return ConstantField(self.value + other.value)

    def __mul__(self, c):
        return ConstantField(c * self.value)

    __rmul__ = __mul__

    def left(self, A):
        return ConstantField(np.atleast_2d(A) @ self.value)

    def sandwich(self, A, B):
        return ConstantField(np.atleast_2d(A) @ self.value @ np.atleast_2d(B))

    def materialize(self, support):
        s = np.atleast_2d(np.asarray(support, dtype=float))
        return MatrixField(s, np.broadcast_to(self.value, (len(s),) + self.value.shape))


# --------------------------------------------------------------------------
# conditional moments
# --------------------------------------------------------------------------


def cond_mean(K):
    """Conditional mean field m_K(x) = E[Y | X = x] of a kernel."""
    if isinstance(K, GaussianKernel):
        return AffineField(K.alpha, K.beta)
    if isinstance(K, GridKernel):
        return MatrixField(K.source.points, K.rows @ K.target.points)
    raise TypeError(f"not a kernel: {type(K).__name__}")


def cond_cov(K):
    """Conditional covariance field sigma_K(x) = Cov[Y | X = x]."""
    if isinstance(K, GaussianKernel):
        return ConstantField(K.tau)
    if isinstance(K, GridKernel):
        y = K.target.points
        m = K.rows @ y
        # centered second moments; subtracting m m' loses accuracy for narrow rows
        c = y[None, :, :] - m[:, None, :]
        vals = np.einsum("ij,ijk,ijl->ikl", K.rows, c, c)
        vals = 0.5 * (vals + np.swapaxes(vals, 1, 2))
        return MatrixField(K.source.points, vals)
    raise TypeError(f"not a kernel: {type(K).__name__}")


def cross_cov(P):
    """Cross-covariance E[(X - EX)(Y - EY)'] of a coupling."""
    if isinstance(P, GaussianJoint):
        return np.array(P.blocks()[3])
    if isinstance(P, DiscreteJoint):
        x = P.x_points - P.mass.sum(axis=1) @ P.x_points
        y = P.y_points - P.mass.sum(axis=0) @ P.y_points
        return x.T @ P.mass @ y
    raise TypeError(f"not a joint: {type(P).__name__}")


def field_norm(f, p, mu):
    """The L_p(mu) norm (integral of mu(dx) ||f(x)||_F^p)^(1/p).

    Parameters
    ----------
    f : MatrixField, AffineField or ConstantField
    p : float
        Exponent, ``p >= 1``.
    mu : GridMeasure or GaussianMeasure
        For a grid measure the field must live on the same support
        (closed-form fields are evaluated on it). For a Gaussian measure
        the field must be closed form; affine fields need ``p == 2``.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    if isinstance(mu, GridMeasure):
        if not isinstance(f, MatrixField):
            f = f.materialize(mu.points)
        if f.support.shape != mu.points.shape or not np.array_equal(f.support, mu.points):
            raise DimensionError("field support differs from the measure support")
        # factor out the largest entry so squares neither underflow nor overflow
        scale = float(np.max(np.abs(f.values), initial=0.0))
        if scale == 0.0 or not np.isfinite(scale):
            return scale
        sq = np.sum((f.values / scale) ** 2, axis=(1, 2))
        return scale * float(np.sum(mu.weights * sq ** (p / 2.0)) ** (1.0 / p))
    if isinstance(mu, GaussianMeasure):
        if isinstance(f, ConstantField):
            return frobenius_norm(f.value)
        if isinstance(f, AffineField):
            if p != 2:
                raise NotImplementedError("affine fields under a Gaussian need p == 2")
            if f.linear.shape[1] != mu.d:
                raise DimensionError("field and measure dimensions differ")
            c = f.offset + f.linear @ mu.mean
            val = c @ c + np.trace(f.linear @ mu.cov @ f.linear.T)
            return float(np.sqrt(max(val, 0.0)))
        raise DimensionError("pointwise fields cannot be integrated against a Gaussian")
    raise TypeError(f"not a measure: {type(mu).__name__}")


def trace_constant(mu, L):
    """sqrt of the mu-average of Tr(sigma_L(x))."""
    if isinstance(L, GaussianKernel):
        return float(np.sqrt(np.trace(L.tau)))
    if isinstance(L, GridKernel):
        if not isinstance(mu, GridMeasure) or not mu.grid.same_as(L.source):
            raise DimensionError("measure support and kernel source differ")
        tr = np.trace(cond_cov(L).values, axis1=1, axis2=2)
        return float(np.sqrt(max(mu.weights @ tr, 0.0)))
    raise TypeError(f"not a kernel: {type(L).__name__}")
