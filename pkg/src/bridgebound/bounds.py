"""
Both sides of the entropic continuity inequalities, evaluated instance by
instance, with the constants they depend on.

Every check produces a :class:`BoundReport`; ``passed`` is exactly
``lhs <= rhs + numerical_slack``. The slack only absorbs roundoff
(1e-9 * max(1, |rhs|) on grids, 1e-10 for Gaussians) unless a report says
otherwise, e.g. the finite-difference allowance of grid identity checks.
"""

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError
from .measures import (
    GaussianJoint,
    GaussianKernel,
    GaussianMeasure,
    GridKernel,
    GridMeasure,
    disintegrate,
    flip,
    product,
    push,
)
from .metrics import coupling_cost, glue, kl, kl_disintegrated, w2, w2_kernel_avg
from .moments import cond_cov, cond_mean, field_norm, spectral_norm, trace_constant
from .sinkhorn import grad_potential, hess_potential, kernel_at, solve_bridge

GAUSSIAN_SLACK = 1e-10
GRID_STENCIL_TOL = 5e-3


def default_slack(rhs, backend):
    if backend == "gaussian":
        return GAUSSIAN_SLACK
    return 1e-9 * max(1.0, abs(rhs)) if math.isfinite(rhs) else 0.0


def _bridge_backend(bridge):
    return "gaussian" if isinstance(bridge.P_star, GaussianJoint) else "grid"


def _backend_of(obj):
    return "gaussian" if isinstance(obj, (GaussianMeasure, GaussianKernel)) else "grid"


# --------------------------------------------------------------------------
# constants
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Constants:
    """LS/T2 constants of both marginal sides and the contraction parameter.

    ``epsilon = kappa**2 * rho_u * rho_v`` with ``kappa = |chi|_2`` and
    ``chi = tau^-1 beta``.
    """

    rho_u: float
    rho_v: float
    kappa: float
    chi: np.ndarray
    epsilon: float
    certified: bool = True

    def __post_init__(self):
        for name in ("rho_u", "rho_v", "kappa", "epsilon"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be strictly positive")
        if abs(self.epsilon - self.kappa**2 * self.rho_u * self.rho_v) > 1e-12 * self.epsilon:
            raise DomainError("epsilon must equal kappa^2 rho_u rho_v")

    @classmethod
    def from_kernel(cls, K0, rho_u, rho_v, certified=True):
        chi = K0.chi
        kappa = spectral_norm(chi)
        return cls(rho_u, rho_v, kappa, chi, kappa**2 * rho_u * rho_v, certified)

    @property
    def rate(self):
        """1 / (1 + 1/epsilon), the entropy contraction per pair of steps."""
        return 1.0 / (1.0 + 1.0 / self.epsilon)

    def as_dict(self):
        return {
            "rho_u": self.rho_u,
            "rho_v": self.rho_v,
            "kappa": self.kappa,
            "chi": np.asarray(self.chi).tolist(),
            "epsilon": self.epsilon,
            "certified": self.certified,
        }


def rho_from_curvature(a, b=0.0, delta=0.0):
    """LS/T2 constant of a density whose Hessian is >= a I outside a ball of radius delta.

    Only the strongly log-concave case ``delta == 0`` has an explicit
    constant, ``1 / a``; otherwise ``None`` is returned and the caller has
    to supply the constant.
    """
    if not a > 0:
        raise DomainError("curvature a must be positive")
    if b < 0 or delta < 0:
        raise DomainError("b and delta must be nonnegative")
    if delta == 0:
        return 1.0 / a
    return None


def rho_gaussian_kernel(K):
    """|tau|_2: a linear Gaussian kernel satisfies LS and T2 with this constant."""
    return spectral_norm(K.tau)


def gaussian_curvature(g):
    """Lower bound a on the Hessian of -log of a Gaussian density: 1 / |cov|_2."""
    return 1.0 / spectral_norm(g.cov)


def epsilon_from_curvature(K0, a_u, a_v):
    """|tau^-1 beta|_2^2 / (a_u a_v), the strongly log-concave choice."""
    return spectral_norm(K0.chi) ** 2 / (a_u * a_v)


def gaussian_constants(mu, eta, K0):
    """Certified constants for Gaussian marginals (delta = 0, rho = 1/a)."""
    rho_u = rho_from_curvature(gaussian_curvature(mu))
    rho_v = rho_from_curvature(gaussian_curvature(eta))
    return Constants.from_kernel(K0, rho_u, rho_v)


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundReport:
    """One verified inequality ``lhs <= rhs``."""

    name: str
    lhs: float
    rhs: float
    slack: float
    passed: bool
    numerical_slack: float
    constants: dict = field(default_factory=dict)
    flags: tuple = ()
    params: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "name": self.name,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "slack": self.slack,
            "pass": self.passed,
            "numerical_slack": self.numerical_slack,
            "constants": self.constants,
            "flags": list(self.flags),
            "params": self.params,
        }

    @property
    def degenerate(self):
        return "degenerate" in self.flags


def make_report(name, lhs, rhs, backend="grid", numerical_slack=None, constants=None, flags=(), params=None):
    lhs, rhs = float(lhs), float(rhs)
    if numerical_slack is None:
        numerical_slack = default_slack(rhs, backend)
    flags = tuple(flags)
    if math.isinf(rhs) and rhs > 0:
        flags = tuple(sorted(set(flags) | {"degenerate"}))
    passed = bool(lhs <= rhs + numerical_slack)
    return BoundReport(
        name,
        lhs,
        rhs,
        rhs - lhs,
        passed,
        float(numerical_slack),
        dict(constants or {}),
        flags,
        dict(params or {}),
    )


@dataclass(frozen=True)
class DecayCurve:
    """Entries (n, H(P* | P_n), (1 + 1/eps)^-floor(n/2) H(P* | P_0))."""

    entries: tuple

    @property
    def n(self):
        return np.array([e[0] for e in self.entries])

    @property
    def entropy(self):
        return np.array([e[1] for e in self.entries])

    @property
    def bound(self):
        return np.array([e[2] for e in self.entries])

    def rows(self):
        return [{"n": n, "H_n": h, "bound_n": b} for n, h, b in self.entries]


def _fmt(x):
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "NaN"
        if math.isinf(x):
            return "Infinity" if x > 0 else "-Infinity"
        return format(x, ".17g")
    if x is None:
        return "null"
    if isinstance(x, str):
        return json.dumps(x)
    if isinstance(x, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_fmt(x[k])}" for k in sorted(x)) + "}"
    if isinstance(x, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(v) for v in x) + "]"
    raise TypeError(f"cannot serialize {type(x).__name__}")


def _sort_key(r):
    return (r.name, _fmt(r.params))


def dumps_reports(reports):
    """Deterministic JSON array: sorted keys and reports, 17 significant digits."""
    items = [_fmt(r.to_dict()) for r in sorted(reports, key=_sort_key)]
    return "[\n" + ",\n".join("  " + s for s in items) + "\n]\n"


def summary_csv(reports):
    lines = ["name,lhs,rhs,slack,pass"]
    for r in sorted(reports, key=_sort_key):
        name = r.name
        if r.params:
            name += "[" + ";".join(f"{k}={_fmt(r.params[k])}" for k in sorted(r.params)) + "]"
        name = name.replace(",", ";").replace('"', "")
        lines.append(",".join([name, _fmt(r.lhs), _fmt(r.rhs), _fmt(r.slack), _fmt(r.passed)]))
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# the coupling lemma and the continuity theorem
# --------------------------------------------------------------------------


def verify_lemma(nuX, nuY, method="auto", params=None):
    """Bias and covariance estimates for two marginals.

    Checks ``|EX - EY| <= D2`` and
    ``|C_XX - C_YY|_F <= 2 D2^2 + 2 D2 sqrt(Tr C_YY)``.
    """
    D, _ = w2(nuX, nuY, method)
    if isinstance(nuX, GaussianMeasure):
        mX, mY, CX, CY = nuX.mean, nuY.mean, nuX.cov, nuY.cov
    else:
        mX, mY, CX, CY = nuX.mean(), nuY.mean(), nuX.cov(), nuY.cov()
    backend = _backend_of(nuX)
    bias = make_report("bias-diff", np.linalg.norm(mX - mY), D, backend, params=params)
    rhs = 2 * D**2 + 2 * D * math.sqrt(max(np.trace(CY), 0.0))
    cov = make_report(
        "cov-diff", np.linalg.norm(CX - CY, "fro"), rhs, backend, params=params
    )
    return [bias, cov]


def _degenerate_reports(names, backend, constants, params):
    return [
        make_report(n, 0.0, math.inf, backend, constants=constants, params=params)
        for n in names
    ]


def verify_theorem1(mu, K, L, rho, flags=(), params=None):
    """Transport and moment bounds between mu x L and mu x K.

    ``K`` must satisfy T2(rho); this is the caller's responsibility (for a
    Gaussian K, ``rho_gaussian_kernel(K)`` is certified).

    Returns reports, in order:

    - ``eq-0:marginal``  D2(mu L, mu K)^2 <= average row D2^2
    - ``eq-0:entropy``   average row D2^2 <= 2 rho H(mu x L | mu x K)
    - ``eq-1``           |||m_K - m_L|||_{2,mu}^2 <= 2 rho H
    - ``eq-2``           |||sigma_K - sigma_L|||_{1,mu} <= 4 rho H + c sqrt(8 rho H)

    and, on grids, ``eq-0:glued``: total-variation distance of the glued
    row couplings' marginals to (mu L, mu K), which must vanish.
    """
    backend = _backend_of(mu)
    consts = {"rho": float(rho)}
    H = kl_disintegrated(mu, L, K)
    names = ["eq-0:marginal", "eq-0:entropy", "eq-1", "eq-2"]
    if math.isinf(H):
        return _degenerate_reports(names, backend, consts, params)
    muL, muK = push(mu, L), push(mu, K)
    if backend == "grid" and max(muL.grid.size, muK.grid.size) <= 64:
        dmarg, _ = w2(muL, muK, "lp")
    else:
        dmarg, _ = w2(muL, muK)
    avg, plans = w2_kernel_avg(mu, L, K)
    dm = field_norm(cond_mean(K) - cond_mean(L), 2, mu)
    ds = field_norm(cond_cov(K) - cond_cov(L), 1, mu)
    c = trace_constant(mu, L)
    info = dict(params or {}, entropy=H, c=c)
    out = [
        make_report(names[0], dmarg**2, avg, backend, constants=consts, flags=flags, params=info),
        make_report(names[1], avg, 2 * rho * H, backend, constants=consts, flags=flags, params=info),
        make_report(names[2], dm**2, 2 * rho * H, backend, constants=consts, flags=flags, params=info),
        make_report(
            names[3],
            ds,
            4 * rho * H + c * math.sqrt(8 * rho * H),
            backend,
            constants=consts,
            flags=flags,
            params=info,
        ),
    ]
    if backend == "grid":
        pi_mu = glue(mu, plans, L)
        tv = max(
            0.5 * np.abs(pi_mu.mass.sum(axis=1) - muL.weights).sum(),
            0.5 * np.abs(pi_mu.mass.sum(axis=0) - muK.weights).sum(),
        )
        out.append(
            make_report(
                "eq-0:glued", tv, 0.0, backend, constants=consts, flags=flags,
                params=dict(info, glued_cost=coupling_cost(pi_mu)),
            )
        )
    return out


def empirical_t2_constant(K, probes):
    """Largest ratio D2(nu, K(x_i, .))^2 / (2 KL(nu | K(x_i, .))) over probe measures.

    Parameters
    ----------
    K : GridKernel
    probes : dict
        Row index -> iterable of GridMeasure on ``K.target``.

    This is an empirical certificate only: T2 holds with this constant for
    the probed measures, not for all of them.
    """
    best = 0.0
    for i, measures in probes.items():
        row = K.row(i)
        for nu in measures:
            h = kl(nu, row)
            if not (h > 0) or math.isinf(h):
                continue
            D, _ = w2(nu, row)
            best = max(best, D**2 / (2 * h))
    return best


def default_probes(K, L=None, tilts=(-2.0, -1.0, -0.5, 0.5, 1.0, 2.0)):
    """Rows of ``L`` plus exponential tilts exp(t <y - m, e> / s) of each row of ``K``."""
    y = K.target.points
    probes = {}
    for i in range(K.source.size):
        row = K.rows[i]
        m = row @ y
        s = math.sqrt(max(np.trace((row[:, None] * (y - m)).T @ (y - m)), 1e-300))
        ms = [L.row(i)] if L is not None else []
        for t in tilts:
            for k in range(y.shape[1]):
                with np.errstate(divide="ignore"):
                    lw = np.log(row) + t * (y[:, k] - m[k]) / s
                w = np.exp(lw - lw.max())
                ms.append(GridMeasure(K.target, w / w.sum()))
        probes[i] = ms
    return probes


# --------------------------------------------------------------------------
# Sinkhorn bridges
# --------------------------------------------------------------------------


def _side(state_P, parity):
    """(marginal, Sinkhorn transition) for the constrained side of an iterate."""
    if parity == "even":
        return disintegrate(state_P, "first")
    return disintegrate(flip(state_P), "first")


def verify_corollaries(bridge, states, constants):
    """Bias and covariance estimates of Sinkhorn transitions against the bridge.

    Even n >= 2: transitions K_n under mu with rho_v and c_{mu,eta};
    odd n >= 1: flipped transitions under eta with rho_u and c_{eta,mu}.
    """
    backend = _bridge_backend(bridge)
    cd = constants.as_dict()
    L_even = kernel_at(bridge, "even")
    L_odd = kernel_at(bridge, "odd")
    out = []
    for s in states:
        if s.n == 0:
            continue
        parity = s.parity
        ref, K = _side(s.P, parity)
        L, rho, tag = (L_even, constants.rho_v, "e") if parity == "even" else (L_odd, constants.rho_u, "o")
        H = kl(bridge.P_star, s.P)
        params = {"n": s.n, "entropy": H}
        flags = () if constants.certified else ("uncertified",)
        if math.isinf(H):
            out += _degenerate_reports([f"eq-1-{tag}", f"eq-2-{tag}"], backend, cd, params)
            continue
        dm = field_norm(cond_mean(K) - cond_mean(L), 2, ref)
        ds = field_norm(cond_cov(K) - cond_cov(L), 1, ref)
        c = trace_constant(ref, L)
        out.append(make_report(f"eq-1-{tag}", dm**2, 2 * rho * H, backend, constants=cd, flags=flags, params=params))
        out.append(
            make_report(
                f"eq-2-{tag}",
                ds,
                4 * rho * H + c * math.sqrt(8 * rho * H),
                backend,
                constants=cd,
                flags=flags,
                params=dict(params, c=c),
            )
        )
    return out


def verify_decay(bridge, states, constants):
    """Entropy decay H(P* | P_n) <= (1 + 1/eps)^-floor(n/2) H(P* | P_0).

    Returns the :class:`DecayCurve`, one ``def-eps`` report per n >= 1 and
    a ``def-eps:monotone`` report whose lhs is the largest increase of H_n.
    """
    backend = _bridge_backend(bridge)
    cd = constants.as_dict()
    flags = () if constants.certified else ("uncertified",)
    states = sorted(states, key=lambda s: s.n)
    if states[0].n != 0:
        raise ValueError("the trajectory must start at n = 0")
    H = [kl(bridge.P_star, s.P) for s in states]
    H0 = H[0]
    entries = []
    reports = []
    for s, h in zip(states, H):
        bound = constants.rate ** (s.n // 2) * H0
        entries.append((s.n, h, bound))
        if s.n >= 1:
            reports.append(
                make_report("def-eps", h, bound, backend, constants=cd, flags=flags, params={"n": s.n})
            )
    rise = max((b - a for a, b in zip(H, H[1:])), default=0.0)
    reports.append(
        make_report("def-eps:monotone", max(rise, 0.0), 0.0, backend, constants=cd, flags=flags)
    )
    return DecayCurve(tuple(entries)), reports


def verify_pi_bounds(mu, pi, K, rho, kappa, tol=None, max_iter=10_000):
    """Bounds for the bridge from mu to pi K with reference mu x K.

    ``K`` must satisfy LS(rho) and J(K(x,.) | K(y,.)) <= kappa^2 |x - y|^2.
    Checks ``2 H(P_{mu,piK} | mu x K) <= kappa^2 rho D2(pi, mu)^2``, the
    transport chain, and the first/second moment estimates.
    """
    backend = _backend_of(mu)
    consts = {"rho": float(rho), "kappa": float(kappa)}
    flags = () if backend == "gaussian" else ("uncertified",)
    eta = push(pi, K)
    bridge = solve_bridge(mu, eta, K, tol=tol, max_iter=max_iter)
    L = kernel_at(bridge, "even")
    H = kl(bridge.P_star, product(mu, K))
    D, _ = w2(pi, mu)
    dmarg, _ = w2(eta, push(mu, K))
    avg, _ = w2_kernel_avg(mu, L, K)
    dm = field_norm(cond_mean(K) - cond_mean(L), 2, mu)
    ds = field_norm(cond_cov(K) - cond_cov(L), 1, mu)
    c = trace_constant(mu, L)
    kr = kappa * rho * D
    params = {"entropy": H, "w2_pi_mu": D, "c": c, "iterations": bridge.iterations_used}
    kw = dict(constants=consts, flags=flags, params=params)
    return [
        make_report("pi-entropy", 2 * H, kappa**2 * rho * D**2, backend, **kw),
        make_report("eq-0:pi-marginal", dmarg**2, avg, backend, **kw),
        make_report("eq-0:pi-entropy", avg, 2 * rho * H, backend, **kw),
        make_report("eq-1-v2", dm, kr, backend, **kw),
        make_report("eq-2-v2", 0.5 * ds, kr**2 + c * kr, backend, **kw),
    ]


def verify_potential_identities(bridge, state, constants, h0, stencil_tol=GRID_STENCIL_TOL):
    """Gradient/Hessian identities and estimates for Sinkhorn potentials.

    For even n (U side, under mu)::

        grad U_n - grad UU   = chi' (m_n - m_bridge)
        hess U_n - hess UU   = chi' (sigma_n - sigma_bridge) chi

    and for odd n the V side under eta with chi and chi' exchanged.
    Reports the identity residuals (``lem-u-mc:*`` / ``lem-v-mc:*``, with
    slack 1e-10 for Gaussians and ``stencil_tol`` on grids), the
    Proposition bounds (``prop:*``), and the end-to-end decay estimates
    assembled from ``constants`` and ``h0 = H(P* | P_0)``.
    """
    backend = _bridge_backend(bridge)
    cd = constants.as_dict()
    chi = np.atleast_2d(constants.chi)
    chi2 = spectral_norm(chi) ** 2
    n = state.n
    parity = state.parity
    ref, K = _side(state.P, parity)
    L = kernel_at(bridge, parity)
    grid = None
    if parity == "even":
        pot, pot_star, A, B, side, rho = state.U, bridge.U_star, chi.T, chi, "u", constants.rho_v
        if backend == "grid":
            grid = state.P.x
    else:
        pot, pot_star, A, B, side, rho = state.V, bridge.V_star, chi, chi.T, "v", constants.rho_u
        if backend == "grid":
            grid = state.P.y
    dgrad = grad_potential(pot, grid) - grad_potential(pot_star, grid)
    dhess = hess_potential(pot, grid) - hess_potential(pot_star, grid)
    dm = cond_mean(K) - cond_mean(L)
    ds = cond_cov(K) - cond_cov(L)
    id_slack = GAUSSIAN_SLACK if backend == "gaussian" else stencil_tol
    res_g = field_norm(dgrad - dm.left(A), 2, ref)
    res_h = field_norm(dhess - ds.sandwich(A, B), 1, ref)
    ng = field_norm(dgrad, 2, ref)
    nh = field_norm(dhess, 1, ref)
    nm = field_norm(dm, 2, ref)
    ns = field_norm(ds, 1, ref)
    flags = () if constants.certified else ("uncertified",)
    params = {"n": n}
    kw = dict(constants=cd, flags=flags, params=params)
    tag = f"lem-{side}-mc"
    out = [
        make_report(f"{tag}:grad", res_g, 0.0, backend, numerical_slack=id_slack, **kw),
        make_report(f"{tag}:hess", res_h, 0.0, backend, numerical_slack=id_slack, **kw),
    ]
    # the proposition bounds inherit the identity residual on grids
    prop_g_slack = None if backend == "gaussian" else (math.sqrt(chi2) * nm + res_g) ** 2 - chi2 * nm**2 + default_slack(chi2 * nm**2, "grid")
    prop_h_slack = None if backend == "gaussian" else res_h + default_slack(chi2 * ns, "grid")
    out += [
        make_report(f"prop-{side}:grad", ng**2, chi2 * nm**2, backend, numerical_slack=prop_g_slack, **kw),
        make_report(f"prop-{side}:hess", nh, chi2 * ns, backend, numerical_slack=prop_h_slack, **kw),
    ]
    k = n // 2
    q = constants.rate
    c = trace_constant(ref, L)
    m_rhs = 2 * rho * q**k * h0
    s_rhs = 4 * rho * q**k * h0 + 2 * c * math.sqrt(2 * rho) * q ** (k / 2) * math.sqrt(h0)
    names = ("m2n-e", "s2n-e", "nablaU", "nabla2U") if side == "u" else ("m2n1-o", "s2n1-o", "nablaV", "nabla2V")
    out += [
        make_report(names[0], nm**2, m_rhs, backend, **kw),
        make_report(names[1], ns, s_rhs, backend, **kw),
        make_report(
            names[2], ng**2, chi2 * m_rhs, backend,
            numerical_slack=None if backend == "gaussian" else prop_g_slack, **kw,
        ),
        make_report(
            names[3], nh, chi2 * s_rhs, backend,
            numerical_slack=None if backend == "gaussian" else prop_h_slack, **kw,
        ),
    ]
    return out
