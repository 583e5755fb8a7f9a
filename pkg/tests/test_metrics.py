import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bridgebound.errors import DimensionError, SizeError
from bridgebound.measures import (
    DiscreteJoint,
    GaussianKernel,
    GaussianMeasure,
    Grid,
    GridKernel,
    GridMeasure,
    discretize,
    product,
    push,
)
from bridgebound.metrics import (
    GaussianPlan,
    coupling_cost,
    fisher,
    fisher_kernel_lipschitz,
    gaussian_kl,
    glue,
    kl,
    kl_disintegrated,
    w2,
    w2_bures,
    w2_kernel_avg,
    w2_lp,
    w2_quantile,
)

from conftest import random_kernel, random_measure, random_spd


def _atoms(rng, n):
    return GridMeasure(Grid(rng.normal(scale=2.0, size=n)), rng.dirichlet(np.ones(n)))


# ---------------------------------------------------------------- KL


def test_kl_self_and_bernoulli(rng, line5):
    mu = random_measure(rng, line5)
    assert kl(mu, mu) == 0.0
    g = Grid([0.0, 1.0])
    v = kl(GridMeasure(g, [0.5, 0.5]), GridMeasure(g, [0.25, 0.75]))
    assert v == pytest.approx(0.5 * math.log(2) + 0.5 * math.log(2 / 3), rel=1e-14)
    assert v == pytest.approx(0.14384103622589045, rel=1e-12)


def test_kl_infinite_and_zero_convention():
    g = Grid([0.0, 1.0, 2.0])
    assert kl(GridMeasure(g, [0.5, 0.5, 0]), GridMeasure(g, [1.0, 0, 0])) == math.inf
    assert kl(GridMeasure(g, [1.0, 0, 0]), GridMeasure(g, [0.5, 0.5, 0])) == pytest.approx(math.log(2))


def test_kl_gaussian_quadrature():
    assert kl(GaussianMeasure([0.0], [[1.0]]), GaussianMeasure([1.0], [[1.0]])) == pytest.approx(0.5, abs=1e-15)
    x = np.linspace(-8, 8, 2000)
    h = x[1] - x[0]
    p = np.exp(-0.5 * x**2) / np.sqrt(2 * np.pi)
    q = np.exp(-0.5 * (x - 1) ** 2) / np.sqrt(2 * np.pi)
    assert np.sum(p * np.log(p / q)) * h == pytest.approx(0.5, abs=1e-6)


def test_kl_gaussian_general_quadrature():
    a = GaussianMeasure([0.3], [[0.7]])
    b = GaussianMeasure([-0.4], [[1.9]])
    x = np.linspace(-12, 12, 24001)
    h = x[1] - x[0]
    la = -0.5 * (x - 0.3) ** 2 / 0.7 - 0.5 * np.log(2 * np.pi * 0.7)
    lb = -0.5 * (x + 0.4) ** 2 / 1.9 - 0.5 * np.log(2 * np.pi * 1.9)
    assert kl(a, b) == pytest.approx(np.sum(np.exp(la) * (la - lb)) * h, rel=1e-9)


def test_gaussian_kl_tiny_difference_is_accurate():
    S = np.array([[1.0, 0.2], [0.2, 1.5]])
    e = 1e-9
    v = gaussian_kl(np.zeros(2), S * (1 + e), np.zeros(2), S)
    # d/2 (e - log(1+e)) ~ d e^2 / 4
    assert v == pytest.approx(2 * e**2 / 4, rel=1e-6)


def test_kl_backend_mismatch(line5):
    with pytest.raises(DimensionError):
        kl(GridMeasure.uniform(line5), GaussianMeasure([0.0], [[1.0]]))


@given(st.integers(2, 10), st.integers(0, 2**32 - 1))
def test_kl_nonnegative_and_disintegration(n, seed):
    rng = np.random.default_rng(seed)
    g = Grid(np.arange(float(n)))
    mu, nu = random_measure(rng, g), random_measure(rng, g)
    assert kl(nu, mu) >= 0
    L, K = random_kernel(rng, g, g), random_kernel(rng, g, g)
    assert kl_disintegrated(mu, L, K) == pytest.approx(kl(product(mu, L), product(mu, K)), abs=1e-10)


def test_kl_disintegrated_examples(rng, line5):
    mu = random_measure(rng, line5)
    K, L = random_kernel(rng, line5, line5), random_kernel(rng, line5, line5)
    assert kl_disintegrated(mu, K, K) == 0.0
    assert kl_disintegrated(GridMeasure.dirac(line5, 2), L, K) == pytest.approx(kl(L.row(2), K.row(2)), rel=1e-14)
    assert kl_disintegrated(mu, L, K) == pytest.approx(kl(product(mu, L), product(mu, K)), abs=1e-12)


def test_kl_disintegrated_gaussian(rng):
    for d in (1, 2):
        mu = GaussianMeasure(rng.normal(size=d), random_spd(rng, d))
        K = GaussianKernel(rng.normal(size=d), np.eye(d) + 0.3 * rng.normal(size=(d, d)), random_spd(rng, d))
        L = GaussianKernel(rng.normal(size=d), np.eye(d) + 0.3 * rng.normal(size=(d, d)), random_spd(rng, d))
        assert kl_disintegrated(mu, L, K) == pytest.approx(kl(product(mu, L), product(mu, K)), rel=1e-10)


# ---------------------------------------------------------------- Fisher


def test_fisher_examples():
    mu = GaussianMeasure([0.0], [[1.0]])
    assert fisher(mu, mu) == 0.0
    assert fisher(GaussianMeasure([0.5], [[1.0]]), mu) == pytest.approx(0.25, rel=1e-14)
    g = Grid.regular([-8.0], [8.0], 800)
    v = fisher(discretize(GaussianMeasure([0.5], [[1.0]]), g), discretize(mu, g))
    assert v == pytest.approx(0.25, abs=1e-3)


def test_fisher_gaussian_quadrature():
    nu = GaussianMeasure([0.2], [[0.6]])
    mu = GaussianMeasure([-0.3], [[1.4]])
    x = np.linspace(-12, 12, 40001)
    w = np.exp(-0.5 * (x - 0.2) ** 2 / 0.6)
    w /= w.sum()
    grad = -(x - 0.2) / 0.6 + (x + 0.3) / 1.4
    assert fisher(nu, mu) == pytest.approx(w @ grad**2, rel=1e-9)


def test_fisher_grid_infinite():
    g = Grid.regular([0.0], [1.0], 3)
    assert fisher(GridMeasure(g, [0.5, 0.5, 0]), GridMeasure(g, [1.0, 0, 0])) == math.inf


def test_fisher_kernel_lipschitz_examples():
    K = GaussianKernel([0.0, 0.0], np.eye(2), np.eye(2))
    J, bound = fisher_kernel_lipschitz(K, [1.0, 2.0], [1.0, 2.0])
    assert J == 0.0 and bound == 0.0
    J, bound = fisher_kernel_lipschitz(K, [1.0, 2.0], [0.0, 0.5])
    assert J == pytest.approx(1 + 2.25) and J == pytest.approx(bound)
    K1 = GaussianKernel([0.0], [[3.0]], [[2.0]])
    J, bound = fisher_kernel_lipschitz(K1, [1.0], [0.0])
    assert J == pytest.approx(2.25) and bound == pytest.approx(2.25)
    # quadrature: nu = N(3, 2), mu = N(0, 2)
    x = np.linspace(-15, 18, 40001)
    w = np.exp(-0.25 * (x - 3) ** 2)
    w /= w.sum()
    grad = -(x - 3) / 2 + x / 2
    assert J == pytest.approx(w @ grad**2, rel=1e-12)


def test_fisher_kernel_lipschitz_bound_holds(rng):
    for _ in range(20):
        K = GaussianKernel(rng.normal(size=2), rng.normal(size=(2, 2)) + 2 * np.eye(2), random_spd(rng, 2))
        J, bound = fisher_kernel_lipschitz(K, rng.normal(size=2), rng.normal(size=2))
        assert J <= bound * (1 + 1e-12)


# ---------------------------------------------------------------- W2


def test_w2_diracs():
    a, b = GridMeasure(Grid([[0.0, 0.0]]), [1.0]), GridMeasure(Grid([[3.0, 4.0]]), [1.0])
    for method in ("lp", "auto"):
        D, plan = w2(a, b, method)
        assert D == pytest.approx(5.0)
        assert plan.mass[0, 0] == 1.0


def test_w2_gaussian_shift():
    D, plan = w2(GaussianMeasure([0.0], [[1.0]]), GaussianMeasure([0.7], [[1.0]]))
    assert D == pytest.approx(0.7, abs=1e-12)
    assert isinstance(plan, GaussianPlan)
    assert np.allclose(plan.linear, [[1.0]]) and np.allclose(plan.offset, [0.7])


def test_w2_bures_map_pushes_forward(rng):
    for d in (1, 2):
        a = GaussianMeasure(rng.normal(size=d), random_spd(rng, d))
        b = GaussianMeasure(rng.normal(size=d), random_spd(rng, d))
        D, plan = w2_bures(a, b)
        T = plan.linear
        assert np.allclose(T @ a.cov @ T.T, b.cov, atol=1e-10)
        assert np.allclose(plan.offset + T @ a.mean, b.mean, atol=1e-12)
        # cost of the map equals D^2
        cost = np.sum((plan.offset + (T - np.eye(d)) @ a.mean) ** 2) + np.trace((T - np.eye(d)) @ a.cov @ (T - np.eye(d)).T)
        assert cost == pytest.approx(D**2, rel=1e-9, abs=1e-12)


@given(st.integers(1, 20), st.integers(1, 20), st.integers(0, 2**32 - 1))
def test_quantile_equals_lp(n, m, seed):
    rng = np.random.default_rng(seed)
    a, b = _atoms(rng, n), _atoms(rng, m)
    dq, pq = w2_quantile(a, b)
    dl, pl = w2_lp(a, b)
    assert abs(dq - dl) <= 1e-10
    assert np.allclose(pq.mass.sum(1), a.weights, atol=1e-12)
    assert np.allclose(pq.mass.sum(0), b.weights, atol=1e-12)
    assert coupling_cost(pq) == pytest.approx(dq**2, abs=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_w2_metric_properties(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (GridMeasure(Grid(rng.normal(size=(k, 2))), rng.dirichlet(np.ones(k))) for k in (4, 5, 6))
    dab, _ = w2(a, b)
    dba, _ = w2(b, a)
    dbc, _ = w2(b, c)
    dac, _ = w2(a, c)
    assert abs(dab - dba) <= 1e-9
    assert dac <= dab + dbc + 1e-9


def test_w2_lp_size_cap():
    g = Grid(np.arange(65.0))
    u = GridMeasure.uniform(g)
    with pytest.raises(SizeError):
        w2_lp(u, u)
    # zero-mass atoms do not count towards the cap
    w = np.zeros(65)
    w[:10] = 0.1
    D, _ = w2_lp(GridMeasure(g, w), GridMeasure(g, w))
    assert D == pytest.approx(0.0, abs=1e-7)


def test_w2_lp_tiny_masses():
    # nearly-degenerate marginals that made the full equality system infeasible
    g = Grid(np.linspace(-4, 4, 30))
    w1 = np.exp(-0.5 * g.points[:, 0] ** 2 * 6)
    w2_ = np.exp(-0.5 * (g.points[:, 0] - 0.3) ** 2)
    a, b = GridMeasure(g, w1 / w1.sum()), GridMeasure(g, w2_ / w2_.sum())
    assert w2_lp(a, b)[0] == pytest.approx(w2_quantile(a, b)[0], abs=1e-10)


def test_w2_kernel_avg_examples(rng, line5):
    mu = random_measure(rng, line5)
    K, L = random_kernel(rng, line5, line5), random_kernel(rng, line5, line5)
    total, plans = w2_kernel_avg(mu, K, K)
    assert total == pytest.approx(0.0, abs=1e-14)
    total, _ = w2_kernel_avg(GridMeasure.dirac(line5, 1), L, K)
    assert total == pytest.approx(w2(L.row(1), K.row(1))[0] ** 2, rel=1e-14)
    total, plans = w2_kernel_avg(mu, L, K)
    glued = glue(mu, plans, L)
    assert np.allclose(glued.mass.sum(1), push(mu, L).weights, atol=1e-12)
    assert np.allclose(glued.mass.sum(0), push(mu, K).weights, atol=1e-12)
    assert coupling_cost(glued) == pytest.approx(total, rel=1e-12)
    dmarg, _ = w2_lp(push(mu, L), push(mu, K))
    assert dmarg**2 <= total + 1e-12


def test_w2_kernel_avg_gaussian(rng):
    mu = GaussianMeasure([0.3], [[1.2]])
    K = GaussianKernel([0.0], [[1.0]], [[1.0]])
    L = GaussianKernel([0.5], [[0.8]], [[0.5]])
    total, coupling_at = w2_kernel_avg(mu, L, K)
    # quadrature over x of the closed-form row distance
    x = np.linspace(0.3 - 12, 0.3 + 12, 20001)
    w = np.exp(-0.5 * (x - 0.3) ** 2 / 1.2)
    w /= w.sum()
    rows = (0.5 + 0.8 * x - x) ** 2 + (np.sqrt(0.5) - 1.0) ** 2
    assert total == pytest.approx(w @ rows, rel=1e-10)
    plan = coupling_at(np.array([1.0]))
    assert isinstance(plan, GaussianPlan)
