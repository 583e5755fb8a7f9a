import json
import math

import numpy as np
import pytest

from bridgebound.bounds import (
    Constants,
    dumps_reports,
    epsilon_from_curvature,
    gaussian_constants,
    make_report,
    rho_from_curvature,
    rho_gaussian_kernel,
    summary_csv,
    verify_corollaries,
    verify_decay,
    verify_lemma,
    verify_pi_bounds,
    verify_potential_identities,
    verify_theorem1,
)
from bridgebound.errors import DomainError
from bridgebound.measures import GaussianKernel, GaussianMeasure, Grid, GridKernel, GridMeasure, discretize
from bridgebound.metrics import kl
from bridgebound.model import build_model, gaussian_1d, oracle_model
from bridgebound.sinkhorn import iterate, solve_bridge
from bridgebound.suites import pi_bounds_suite

from conftest import random_measure, random_spd


def _all_pass(reports):
    bad = [r for r in reports if not r.passed]
    assert not bad, bad[:3]


# ---------------------------------------------------------------- constants


def test_rho_from_curvature():
    assert rho_from_curvature(1.0) == 1.0
    assert rho_from_curvature(2.0) == 0.5
    assert rho_from_curvature(1.0, 1.0, 0.5) is None
    for a in (0.0, -1.0):
        with pytest.raises(DomainError):
            rho_from_curvature(a)


def test_rho_gaussian_kernel(rng):
    assert rho_gaussian_kernel(GaussianKernel([0.0, 0.0], np.eye(2), np.eye(2))) == pytest.approx(1.0)
    K = GaussianKernel([0.0, 0.0], np.eye(2), np.diag([0.25, 0.5]))
    assert rho_gaussian_kernel(K) == pytest.approx(0.5)
    for _ in range(10):
        tau = random_spd(rng, 2)
        K = GaussianKernel([0.0, 0.0], np.eye(2), tau)
        assert rho_gaussian_kernel(K) == pytest.approx(np.linalg.eigvalsh(tau).max(), rel=1e-12)


def test_constants_invariants():
    K = GaussianKernel([0.0], [[2.0]], [[0.5]])
    c = Constants.from_kernel(K, 0.5, 2.0)
    assert c.kappa == pytest.approx(4.0) and c.epsilon == pytest.approx(16.0)
    assert c.rate == pytest.approx(1 / (1 + 1 / 16))
    with pytest.raises(DomainError):
        Constants(0.0, 1.0, 1.0, np.eye(1), 0.0)
    with pytest.raises(DomainError):
        Constants(1.0, 1.0, 1.0, np.eye(1), 2.0)


def test_epsilon_two_ways(rng):
    for _ in range(20):
        a_u, a_v = rng.uniform(0.3, 3.0, 2)
        beta, tau = rng.uniform(0.2, 2.0, 2)
        m = build_model(gaussian_1d(a_u=a_u, a_v=a_v, beta=beta, tau=tau))
        e2 = epsilon_from_curvature(m.K0, a_u, a_v)
        assert abs(m.constants.epsilon - e2) <= 1e-12 * e2


# ---------------------------------------------------------------- reports


def test_report_pass_rule():
    r = make_report("x", 1.0, 1.0 - 5e-10, "grid")
    assert r.passed and r.slack == pytest.approx(-5e-10)
    assert not make_report("x", 1.0, 1.0 - 2e-9, "grid").passed
    assert not make_report("x", 1.0, 1.0 - 2e-10, "gaussian").passed
    d = make_report("x", 3.0, math.inf)
    assert d.passed and d.degenerate


def test_serialization_is_deterministic():
    rs = [
        make_report("b", 0.1, 0.3, params={"z": 1, "a": [0.1, 2]}),
        make_report("a", 1 / 3, math.inf),
    ]
    s1, s2 = dumps_reports(rs), dumps_reports(rs[::-1])
    assert s1 == s2
    data = json.loads(s1)
    assert [d["name"] for d in data] == ["a", "b"]
    assert data[0]["lhs"] == 1 / 3 and data[0]["rhs"] == math.inf
    assert "0.33333333333333331" in s1
    assert summary_csv(rs).splitlines()[0] == "name,lhs,rhs,slack,pass"


# ---------------------------------------------------------------- lemma / theorem


def test_lemma_identical_and_dirac():
    g = Grid(np.array([[0.0], [1.0], [3.0]]))
    nu = GridMeasure(g, np.array([0.2, 0.3, 0.5]))
    for r in verify_lemma(nu, nu, "lp"):
        assert r.lhs == pytest.approx(0.0, abs=1e-12) and r.rhs == pytest.approx(0.0, abs=1e-9)
    dx = GridMeasure(Grid(np.array([[0.5, -1.0]])), np.array([1.0]))
    dy = GridMeasure(Grid(np.array([[2.0, 1.0]])), np.array([1.0]))
    bias, cov = verify_lemma(dx, dy, "lp")
    assert bias.lhs == pytest.approx(np.hypot(1.5, 2.0), rel=1e-12)
    assert bias.rhs == pytest.approx(bias.lhs, rel=1e-9) and bias.passed
    assert cov.passed


def test_lemma_random(rng):
    for _ in range(50):
        n, m = rng.integers(1, 21, 2)
        X = GridMeasure(Grid(rng.normal(size=(n, 1)) * 2 + np.arange(n)[:, None] * 1e-6), rng.dirichlet(np.ones(n)))
        Y = GridMeasure(Grid(rng.normal(size=(m, 1)) + np.arange(m)[:, None] * 1e-6), rng.dirichlet(np.ones(m)))
        _all_pass(verify_lemma(X, Y, "lp"))


def test_theorem1_L_equals_K():
    mu = GaussianMeasure([0.3], [[1.5]])
    K = GaussianKernel([0.1], [[0.7]], [[0.8]])
    rs = verify_theorem1(mu, K, K, rho_gaussian_kernel(K))
    assert len(rs) == 4
    for r in rs:
        assert abs(r.lhs) <= 1e-12 and abs(r.rhs) <= 1e-12 and r.passed


def test_theorem1_shifted_alpha_strict(rng):
    for d in (1, 2):
        mu = GaussianMeasure(rng.normal(size=d), random_spd(rng, d))
        beta, tau = rng.normal(size=(d, d)), random_spd(rng, d)
        K = GaussianKernel(np.zeros(d), beta, tau)
        L = GaussianKernel(rng.normal(size=d), beta, tau)
        rs = {r.name: r for r in verify_theorem1(mu, K, L, rho_gaussian_kernel(K))}
        # every row moves by the same vector: the first link is an equality
        assert rs["eq-0:marginal"].lhs == pytest.approx(rs["eq-0:marginal"].rhs, rel=1e-10)
        assert rs["eq-0:entropy"].rhs > rs["eq-0:marginal"].lhs
        for name in ("eq-0:entropy", "eq-1", "eq-2"):
            assert rs[name].slack > 0, rs[name]


def test_theorem1_grid_kernel_equal():
    g = Grid.regular([-3.0], [3.0], 31)
    mu = discretize(GaussianMeasure([0.0], [[1.0]]), g)
    K = discretize(GaussianKernel([0.0], [[0.5]], [[1.0]]), g)
    rs = verify_theorem1(mu, K, K, 1.0)
    assert {r.name for r in rs} == {"eq-0:marginal", "eq-0:entropy", "eq-1", "eq-2", "eq-0:glued"}
    _all_pass(rs)


def test_theorem1_degenerate():
    g = Grid.regular([0.0], [2.0], 3)
    mu = GridMeasure.uniform(g)
    K = GridKernel(g, g, np.array([[1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0]]))
    L = GridKernel(g, g, np.full((3, 3), 1 / 3))
    rs = verify_theorem1(mu, K, L, 1.0)
    assert rs and all(r.degenerate and r.passed and r.rhs == math.inf for r in rs)


# ---------------------------------------------------------------- Sinkhorn bounds


def test_corollaries_at_convergence():
    m = build_model(gaussian_1d())
    b = solve_bridge(m.mu, m.eta, m.K0, tol=1e-13)
    states = iterate(m.mu, m.eta, m.K0, b.iterations_used + 2)[-2:]
    for r in verify_corollaries(b, states, m.constants):
        assert abs(r.lhs) <= 1e-10 and abs(r.rhs) <= 1e-6 and r.passed


def test_corollaries_gaussian_model():
    m = build_model(gaussian_1d())
    b = solve_bridge(m.mu, m.eta, m.K0)
    rs = verify_corollaries(b, iterate(m.mu, m.eta, m.K0, 20), m.constants)
    assert len(rs) == 40
    _all_pass(rs)


def test_corollaries_grid_model():
    m = build_model(oracle_model())
    b = solve_bridge(m.mu, m.eta, m.K0)
    rs = verify_corollaries(b, iterate(m.mu, m.eta, m.K0, 10), m.constants)
    assert len(rs) == 20 and all("uncertified" in r.flags for r in rs)
    _all_pass(rs)


def test_decay_epsilon_one():
    m = build_model(gaussian_1d())
    assert m.constants.epsilon == pytest.approx(1.0, rel=1e-14)
    b = solve_bridge(m.mu, m.eta, m.K0)
    curve, rs = verify_decay(b, iterate(m.mu, m.eta, m.K0, 30), m.constants)
    H0 = curve.entropy[0]
    assert curve.bound[0] == H0
    for n, bound in zip(curve.n, curve.bound):
        assert bound == pytest.approx(2.0 ** -(n // 2) * H0, rel=1e-12)
    _all_pass(rs)
    assert np.all(np.diff(curve.entropy) <= 1e-15)


def test_decay_requires_start():
    m = build_model(gaussian_1d())
    b = solve_bridge(m.mu, m.eta, m.K0)
    with pytest.raises(ValueError):
        verify_decay(b, iterate(m.mu, m.eta, m.K0, 3)[1:], m.constants)


def test_pi_equals_mu():
    mu = GaussianMeasure([0.0], [[1.0]])
    K = GaussianKernel([0.0], [[1.0]], [[1.0]])
    rs = verify_pi_bounds(mu, mu, K, 1.0, 1.0)
    for r in rs:
        assert abs(r.lhs) <= 1e-10 and abs(r.rhs) <= 1e-10 and r.passed


def test_pi_shifted_gaussian():
    mu = GaussianMeasure([0.0], [[1.0]])
    pi = GaussianMeasure([0.5], [[1.0]])
    K = GaussianKernel([0.0], [[1.0]], [[1.0]])
    rs = verify_pi_bounds(mu, pi, K, 1.0, 1.0)
    assert len(rs) == 5
    assert all(r.slack >= -1e-10 for r in rs)


def test_pi_grid_small_shift():
    rs = pi_bounds_suite(0, 0, build_model(oracle_model())).reports
    assert len(rs) == 5
    _all_pass(rs)
    assert all("empirical" in r.flags and "rho_hat" in r.params for r in rs)


def _identity_reports(cfg, n_max=10):
    m = build_model(cfg)
    b = solve_bridge(m.mu, m.eta, m.K0)
    states = iterate(m.mu, m.eta, m.K0, n_max)
    h0 = kl(b.P_star, states[0].P)
    out = []
    for s in states[1:]:
        out += verify_potential_identities(b, s, m.constants, h0)
    return out


def test_potential_identities_gaussian():
    rs = _identity_reports(dict(oracle_model(), backend="gaussian"))
    ids = [r for r in rs if r.name.startswith("lem-")]
    assert len(ids) == 20 and all(r.lhs <= 1e-10 for r in ids)
    _all_pass(rs)


def test_potential_identities_grid():
    rs = _identity_reports(oracle_model())
    ids = [r for r in rs if r.name.startswith("lem-")]
    assert all(r.lhs <= 5e-3 for r in ids)
    assert {r.name for r in rs} >= {"prop-u:grad", "prop-v:hess", "nablaU", "nabla2V", "m2n-e", "s2n1-o"}
    _all_pass(rs)


def test_proposition_unit_chi():
    cfg = gaussian_1d(a_u=2.0, a_v=0.5, beta=1.0, tau=1.0)
    m = build_model(cfg)
    assert m.constants.kappa == pytest.approx(1.0)
    for r in _identity_reports(cfg, 6):
        if r.name.startswith("prop-"):
            # chi = 1: both sides are the same field norm
            assert r.lhs == pytest.approx(r.rhs, rel=1e-8, abs=1e-14) and r.passed


def test_gaussian_constants_certified():
    mu, eta = GaussianMeasure([0.0], [[2.0]]), GaussianMeasure([1.0], [[0.5]])
    c = gaussian_constants(mu, eta, GaussianKernel([0.0], [[1.0]], [[1.0]]))
    assert c.rho_u == pytest.approx(2.0) and c.rho_v == pytest.approx(0.5) and c.certified
