"""
Seeded verification batches.

Every randomized suite draws instance ``i`` from its own child of
``SeedSequence(seed)``, so any failing instance can be replayed alone;
the drawn parameters are logged in each report's ``params``. Instances
run on a thread pool capped by ``BRIDGEBOUND_THREADS`` and results are
collected in instance order.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .bounds import (
    default_probes,
    empirical_t2_constant,
    make_report,
    rho_gaussian_kernel,
    verify_corollaries,
    verify_decay,
    verify_lemma,
    verify_pi_bounds,
    verify_potential_identities,
    verify_theorem1,
)
from .measures import (
    GaussianKernel,
    GaussianMeasure,
    Grid,
    GridKernel,
    GridMeasure,
    default_grid,
    discretize,
    push,
)
from .metrics import fisher, kl, w2, w2_lp, w2_quantile
from .model import build_model, gaussian_1d, oracle_model
from .moments import spectral_norm
from .sinkhorn import iterate, kernel_at, marginal_residuals, solve_bridge

SUITES = ("theorem1", "lemma", "corollaries", "decay", "pi_bounds", "potentials", "talagrand", "w2", "pinning")

DEFAULT_INSTANCES = {
    "lemma": 500,
    "theorem1": 200,
    "talagrand": 200,
    "pi_bounds": 10,
    "w2": 300,
    "pinning": 20,
}

PINNING_TOL = 1e-12
W2_AGREE_TOL = 1e-10
BURES_GRID_TOL = 2e-2


@dataclass
class SuiteResult:
    reports: list = field(default_factory=list)
    curves: list = field(default_factory=list)  # (label, DecayCurve)

    def extend(self, other):
        self.reports += other.reports
        self.curves += other.curves


def workers():
    env = os.environ.get("BRIDGEBOUND_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def run_parallel(fn, items):
    """``[fn(x) for x in items]`` on the worker pool, in input order."""
    items = list(items)
    n = workers()
    if n == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def instance_rngs(seed, count):
    children = np.random.SeedSequence(seed).spawn(count)
    return [(i, np.random.default_rng(c)) for i, c in enumerate(children)]


def _tag(seed, i, **extra):
    return dict(extra, seed=int(seed), instance=int(i))


def _random_spd(rng, d, lo=0.3, hi=2.0):
    Q, _ = np.linalg.qr(rng.normal(size=(d, d)))
    return Q @ np.diag(rng.uniform(lo, hi, size=d)) @ Q.T


def _random_gaussian(rng, d, spread=1.0):
    return GaussianMeasure(rng.normal(scale=spread, size=d), _random_spd(rng, d))


def _random_kernel(rng, d):
    return GaussianKernel(
        rng.normal(scale=0.5, size=d), rng.uniform(-1.2, 1.2, size=(d, d)), _random_spd(rng, d)
    )


def _g(m):
    return {"mean": m.mean.tolist(), "cov": m.cov.tolist()}


def _k(K):
    return {"alpha": K.alpha.tolist(), "beta": K.beta.tolist(), "tau": K.tau.tolist()}


# --------------------------------------------------------------------------
# randomized suites
# --------------------------------------------------------------------------


def _random_atoms(rng, max_atoms=20):
    n = int(rng.integers(1, max_atoms + 1))
    pts = rng.normal(loc=rng.normal(scale=2.0), scale=rng.uniform(0.2, 3.0), size=n)
    w = rng.dirichlet(np.ones(n))
    return GridMeasure(Grid(pts), w)


def lemma_suite(seed, instances):
    def one(arg):
        i, rng = arg
        nuX, nuY = _random_atoms(rng), _random_atoms(rng)
        params = _tag(
            seed, i,
            x_points=nuX.points[:, 0].tolist(), x_weights=nuX.weights.tolist(),
            y_points=nuY.points[:, 0].tolist(), y_weights=nuY.weights.tolist(),
        )
        return verify_lemma(nuX, nuY, method="lp", params=params)

    return SuiteResult([r for rs in run_parallel(one, instance_rngs(seed, instances)) for r in rs])


def theorem1_gaussian_suite(seed, instances):
    def one(arg):
        i, rng = arg
        d = int(rng.integers(1, 3))
        mu, K, L = _random_gaussian(rng, d), _random_kernel(rng, d), _random_kernel(rng, d)
        params = _tag(seed, i, kind="gaussian", mu=_g(mu), K=_k(K), L=_k(L))
        return verify_theorem1(mu, K, L, rho_gaussian_kernel(K), params=params)

    return SuiteResult([r for rs in run_parallel(one, instance_rngs(seed, instances)) for r in rs])


def random_discrete_triple(rng):
    """(mu, K, L, description) on a 1-d grid; K is a discretized Gaussian kernel."""
    n = int(rng.integers(15, 41))
    grid = Grid.regular([-4.0], [4.0], n)
    mu = GridMeasure(grid, rng.dirichlet(np.full(n, 2.0)))
    Kg = GaussianKernel([rng.normal(scale=0.5)], [[rng.uniform(-1.0, 1.0)]], [[rng.uniform(0.3, 1.5)]])
    K = discretize(Kg, grid)
    desc = {"n": n, "mu_weights": mu.weights.tolist(), "K": _k(Kg)}
    if rng.random() < 0.5:
        Lg = GaussianKernel(
            Kg.alpha + rng.normal(scale=0.3, size=1),
            Kg.beta + rng.normal(scale=0.2, size=(1, 1)),
            Kg.tau * rng.uniform(0.6, 1.5),
        )
        L = discretize(Lg, grid)
        desc.update(L_kind="perturbed", L=_k(Lg))
    else:
        s = float(rng.uniform(0.05, 0.5))
        R = rng.dirichlet(np.ones(n), size=n)
        L = GridKernel(grid, grid, (1 - s) * K.rows + s * R)
        desc.update(L_kind="mixture", mix=s, R=R.tolist())
    return mu, K, L, desc


def theorem1_discrete_suite(seed, instances):
    def one(arg):
        i, rng = arg
        mu, K, L, desc = random_discrete_triple(rng)
        rho_hat = empirical_t2_constant(K, default_probes(K, L))
        params = _tag(seed, i, kind="discrete", rho_hat=rho_hat, **desc)
        return verify_theorem1(mu, K, L, rho_hat, flags=("empirical",), params=params)

    return SuiteResult([r for rs in run_parallel(one, instance_rngs(seed + 1, instances)) for r in rs])


def talagrand_suite(seed, instances):
    """T2 and LS for Gaussian reference measures with constant |Sigma_mu|_2."""

    def one(arg):
        i, rng = arg
        d = int(rng.integers(1, 3))
        nu, mu = _random_gaussian(rng, d), _random_gaussian(rng, d)
        c = spectral_norm(mu.cov)
        H = kl(nu, mu)
        D, _ = w2(nu, mu)
        J = fisher(nu, mu)
        params = _tag(seed, i, nu=_g(nu), mu=_g(mu))
        consts = {"rho": c}
        return [
            make_report("t2", 0.5 * D**2, c * H, "gaussian", constants=consts, params=params),
            make_report("ls", H, 0.5 * c * J, "gaussian", constants=consts, params=params),
        ]

    return SuiteResult([r for rs in run_parallel(one, instance_rngs(seed, instances)) for r in rs])


def w2_suite(seed, instances, bures_instances=30):
    """Quantile vs exact LP on 1-d pairs; Bures vs LP between 64-point discretizations."""

    def one(arg):
        i, rng = arg
        nu, mu = _random_atoms(rng), _random_atoms(rng)
        dq, _ = w2_quantile(nu, mu)
        dl, _ = w2_lp(nu, mu)
        params = _tag(
            seed, i, dq=dq, dlp=dl,
            x_points=nu.points[:, 0].tolist(), x_weights=nu.weights.tolist(),
            y_points=mu.points[:, 0].tolist(), y_weights=mu.weights.tolist(),
        )
        return [make_report("w2:quantile-lp", abs(dq - dl), 0.0, numerical_slack=W2_AGREE_TOL, params=params)]

    def bures(arg):
        i, rng = arg
        nu = GaussianMeasure([rng.uniform(-1, 1)], [[rng.uniform(0.3, 2.0)]])
        mu = GaussianMeasure([rng.uniform(-1, 1)], [[rng.uniform(0.3, 2.0)]])
        # one 64-point grid per measure: a shared lattice inflates small
        # distances by about sqrt(shift * spacing)
        db, _ = w2(nu, mu)
        dl, _ = w2_lp(discretize(nu, default_grid(nu, 64)), discretize(mu, default_grid(mu, 64)))
        params = _tag(seed, i, nu=_g(nu), mu=_g(mu), bures=db, dlp=dl)
        return [make_report("w2:bures-grid", abs(db - dl), 0.0, numerical_slack=BURES_GRID_TOL, params=params)]

    out = run_parallel(one, instance_rngs(seed, instances))
    out += run_parallel(bures, instance_rngs(seed + 2, bures_instances))
    return SuiteResult([r for rs in out for r in rs])


def pinning_reports(states, mu, eta, params, tol=PINNING_TOL):
    """Each even iterate's first marginal is mu, each odd iterate's second is eta."""
    out = []
    for s in states:
        r1, r2 = marginal_residuals(s.P, mu, eta)
        lhs, side = (r1, "first") if s.n % 2 == 0 else (r2, "second")
        out.append(
            make_report("pinning", lhs, 0.0, numerical_slack=tol, params=dict(params, n=s.n, side=side))
        )
    return out


def pinning_suite(seed, instances, steps=20):
    def one(arg):
        i, rng = arg
        n = int(rng.integers(10, 61))
        grid = Grid.regular([-5.0], [5.0], n)
        mu = GridMeasure(grid, rng.dirichlet(np.full(n, 1.0)))
        eta = GridMeasure(grid, rng.dirichlet(np.full(n, 1.0)))
        Kg = GaussianKernel([rng.normal(scale=0.5)], [[rng.uniform(-1, 1)]], [[rng.uniform(0.5, 2.0)]])
        K0 = discretize(Kg, grid)
        states = iterate(mu, eta, K0, steps, potentials=False)
        return pinning_reports(states, mu, eta, _tag(seed, i, grid_n=n, K=_k(Kg)))

    return SuiteResult([r for rs in run_parallel(one, instance_rngs(seed, instances)) for r in rs])


def random_pi_instance(rng):
    mu = GaussianMeasure([rng.normal()], [[rng.uniform(0.3, 2.0)]])
    pi = GaussianMeasure([mu.mean[0] + rng.normal(scale=0.7)], [[rng.uniform(0.3, 2.0)]])
    K = GaussianKernel([rng.normal(scale=0.5)], [[rng.uniform(-1.2, 1.2)]], [[rng.uniform(0.3, 2.0)]])
    return mu, pi, K


def pi_bounds_suite(seed, instances, model=None):
    if model is not None:
        pi = model.pi
        if pi is None:
            g = model.gaussian[0]
            pi = GaussianMeasure(g.mean + 0.5, g.cov)
            if model.backend == "grid":
                pi = discretize(pi, model.grid)
        K = model.gaussian[2]
        rho, kappa = rho_gaussian_kernel(K), spectral_norm(K.chi)
        extra = {}
        if model.backend == "grid":
            # the continuum constant is tight for mean shifts and does not
            # transfer to the lattice; probe the discretized kernel as well
            bridge = solve_bridge(model.mu, push(pi, model.K0), model.K0, tol=model.tol, max_iter=model.max_iter)
            L = kernel_at(bridge, "even")
            rho_hat = empirical_t2_constant(model.K0, default_probes(model.K0, L))
            extra = {"rho_gaussian": rho, "rho_hat": rho_hat}
            rho = max(rho, rho_hat)
        reports = verify_pi_bounds(model.mu, pi, model.K0, rho, kappa, tol=model.tol, max_iter=model.max_iter)
        if extra:
            reports = [
                replace(r, flags=tuple(sorted(set(r.flags) | {"empirical"})), params=dict(r.params, **extra))
                for r in reports
            ]
        return SuiteResult(reports)

    fixed = (
        GaussianMeasure([0.0], [[1.0]]),
        GaussianMeasure([0.5], [[1.0]]),
        GaussianKernel([0.0], [[1.0]], [[1.0]]),
    )

    def run(mu, pi, K, params):
        reports = verify_pi_bounds(mu, pi, K, rho_gaussian_kernel(K), spectral_norm(K.chi))
        return [replace(r, params=dict(r.params, **params)) for r in reports]

    def one(arg):
        i, rng = arg
        mu, pi, K = random_pi_instance(rng)
        return run(mu, pi, K, _tag(seed, i, mu=_g(mu), pi=_g(pi), K=_k(K)))

    out = run(*fixed, {"instance": "fixed"})
    for rs in run_parallel(one, instance_rngs(seed, instances)):
        out += rs
    return SuiteResult(out)


# --------------------------------------------------------------------------
# model-driven suites
# --------------------------------------------------------------------------


def sweep_configs():
    """The 1-d Gaussian sweep a_u, a_v in {0.5, 1, 2}, beta in {0.5, 1}, tau = 1."""
    out = []
    for a_u in (0.5, 1.0, 2.0):
        for a_v in (0.5, 1.0, 2.0):
            for beta in (0.5, 1.0):
                label = f"a_u={a_u:g};a_v={a_v:g};beta={beta:g}"
                out.append((label, gaussian_1d(a_u=a_u, a_v=a_v, beta=beta)))
    return out


def _labelled(reports, label):
    return [replace(r, params=dict(r.params, model=label)) for r in reports]


def _trajectory(model, n_max):
    bridge, states = solve_bridge(
        model.mu, model.eta, model.K0, tol=model.tol, max_iter=model.max_iter, keep_states=True
    )
    if len(states) <= n_max:
        states = iterate(model.mu, model.eta, model.K0, n_max)
    return bridge, states[: n_max + 1]


def decay_suite(model=None, n_max=30):
    models = [("model", model)] if model is not None else [(l, build_model(c)) for l, c in sweep_configs()]

    def one(item):
        label, m = item
        bridge, states = _trajectory(m, n_max)
        curve, reports = verify_decay(bridge, states, m.constants)
        return curve, _labelled(reports, label)

    res = SuiteResult()
    for (label, _), (curve, reports) in zip(models, run_parallel(one, models)):
        res.curves.append((label, curve))
        res.reports += reports
    return res


def corollary_suite(model=None, n_max=20):
    models = [("model", model)] if model is not None else [(l, build_model(c)) for l, c in sweep_configs()]

    def one(item):
        label, m = item
        bridge, states = _trajectory(m, n_max)
        return _labelled(verify_corollaries(bridge, states, m.constants), label)

    return SuiteResult([r for rs in run_parallel(one, models) for r in rs])


def potentials_suite(model=None, n_max=10):
    """Identity, Proposition and end-to-end reports for n = 1..n_max.

    Without a model: the oracle model on both backends.
    """
    if model is None:
        cfg = oracle_model()
        models = [("oracle:grid", build_model(cfg)), ("oracle:gaussian", build_model(dict(cfg, backend="gaussian")))]
    else:
        models = [("model", model)]

    def one(item):
        label, m = item
        bridge, states = _trajectory(m, n_max)
        h0 = kl(bridge.P_star, states[0].P)
        out = []
        for s in states[1:]:
            out += verify_potential_identities(bridge, s, m.constants, h0)
        return _labelled(out, label)

    return SuiteResult([r for rs in run_parallel(one, models) for r in rs])


def run_suite(name, seed=0, instances=None, model=None):
    """Run one suite (or ``all``) and return a :class:`SuiteResult`."""
    if name == "all":
        res = SuiteResult()
        for s in SUITES:
            res.extend(run_suite(s, seed, instances, model))
        return res
    count = instances if instances is not None else DEFAULT_INSTANCES.get(name)
    if name == "lemma":
        return lemma_suite(seed, count)
    if name == "theorem1":
        res = theorem1_gaussian_suite(seed, count)
        res.extend(theorem1_discrete_suite(seed, count))
        return res
    if name == "talagrand":
        return talagrand_suite(seed, count)
    if name == "w2":
        return w2_suite(seed, count)
    if name == "pinning":
        return pinning_suite(seed, count)
    if name == "pi_bounds":
        return pi_bounds_suite(seed, count, model)
    if name == "decay":
        return decay_suite(model)
    if name == "corollaries":
        return corollary_suite(model)
    if name == "potentials":
        return potentials_suite(model)
    raise ValueError(f"unknown suite {name!r}")


def decay_csv(curves):
    lines = ["model,n,H_n,bound_n"]
    for label, curve in curves:
        for n, h, b in curve.entries:
            lines.append(f"{label.replace(',', ';')},{n},{format(float(h), '.17g')},{format(float(b), '.17g')}")
    return "\n".join(lines) + "\n"
