import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bscflow.errors import BadParams, QuadratureBudgetExceeded, UnknownFamily
from bscflow.integrand import (CONSTANT, L1ONLY, W11, dominating_bound, make_builtin,
                               polar_grid, simplex_vertices, steklov, steklov_convergence_gap)

RADIAL = ["area", "exp", "orlicz", "quadratic"]
SWITCHED = {"t_o": 0.05, "T": 0.1, "f1": {"family": "quadratic"},
            "f2": {"family": "quadratic", "c": 2}}
WEIGHTED = {"T": 1.0, "terms": [
    {"weight": "1 + t", "dweight": "1", "integrand": {"family": "area"}},
    {"weight": "exp(-t)", "dweight": "-exp(-t)", "integrand": {"family": "quadratic"}}]}


def all_integrands():
    fams = [make_builtin(n) for n in RADIAL]
    fams.append(make_builtin("switched", SWITCHED))
    fams.append(make_builtin("weighted_sum", WEIGHTED))
    fams.append(steklov(make_builtin("switched", SWITCHED), 0.01))
    return fams


INTEGRANDS = all_integrands()
IDS = [f.name for f in INTEGRANDS]


def test_area_at_zero():
    f = make_builtin("area")
    assert f.value(0.0, np.zeros(2)) == 1.0
    np.testing.assert_array_equal(f.grad(0.0, np.zeros(2)), 0.0)


def test_orlicz_at_zero():
    assert make_builtin("orlicz").value(0.0, np.zeros(2)) == 0.0


def test_exp_at_unit_slope():
    f = make_builtin("exp")
    assert f.value(0.0, np.array([1.0, 0.0])) == pytest.approx(np.e)
    g = f.grad(0.0, np.array([1.0, 0.0]))
    d = 1e-6
    fd = [(f.value(0, np.array([1 + d, 0])) - f.value(0, np.array([1 - d, 0]))) / (2 * d),
          (f.value(0, np.array([1, d])) - f.value(0, np.array([1, -d]))) / (2 * d)]
    np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-9)


@pytest.mark.parametrize("name, reg", [("area", CONSTANT), ("exp", CONSTANT),
                                       ("orlicz", CONSTANT), ("quadratic", CONSTANT)])
def test_regularity_tags(name, reg):
    assert make_builtin(name).regularity == reg


def test_composite_tags():
    assert make_builtin("switched", SWITCHED).regularity == L1ONLY
    assert make_builtin("weighted_sum", WEIGHTED).regularity == W11
    no_dw = {"T": 1.0, "terms": [{"weight": "1 + t", "integrand": {"family": "area"}}]}
    assert make_builtin("weighted_sum", no_dw).regularity == L1ONLY
    assert steklov(make_builtin("switched", SWITCHED), 0.01).regularity == W11


@pytest.mark.parametrize("name, params, err", [
    ("nope", {}, UnknownFamily),
    ("switched", {"t_o": 0.2, "T": 0.1, "f1": {"family": "area"}, "f2": {"family": "area"}},
     BadParams),
    ("switched", {"t_o": 0.05, "T": 0.1}, BadParams),
    ("weighted_sum", {"T": 1.0, "terms": [{"weight": "t - 0.5",
                                           "integrand": {"family": "area"}}]}, BadParams),
    ("weighted_sum", {"T": 1.0, "terms": [{"weight": "import os",
                                           "integrand": {"family": "area"}}]}, BadParams),
    ("area", {"scale": -1}, BadParams),
    ("weighted_sum", {}, BadParams),
])
def test_bad_construction(name, params, err):
    with pytest.raises(err):
        make_builtin(name, params)


def test_switched_picks_first_piece_at_switch():
    f = make_builtin("switched", SWITCHED)
    xi = np.array([[1.0, 0.0]])
    assert f.value(0.05, xi)[0] == 0.5
    assert f.value(0.0500001, xi)[0] == 1.0


@pytest.mark.parametrize("f", INTEGRANDS, ids=IDS)
@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 31))
def test_convex_in_xi(f, seed):
    rng = np.random.default_rng(seed)
    t = rng.uniform(0, 0.1)
    a, b = rng.uniform(-1.5, 1.5, size=(2, 2))
    lam = rng.uniform()
    mid = f.value(t, lam * a + (1 - lam) * b)
    chord = lam * f.value(t, a) + (1 - lam) * f.value(t, b)
    assert mid <= chord + 1e-10 * (1 + abs(chord))


@pytest.mark.parametrize("f", INTEGRANDS, ids=IDS)
def test_gradient_matches_finite_differences(f):
    rng = np.random.default_rng(3)
    for _ in range(10):
        t = rng.uniform(0, 0.09)
        xi = rng.uniform(-1.2, 1.2, size=2)
        g = f.grad(t, xi)
        d = 1e-6
        fd = np.array([(f.value(t, xi + d * e) - f.value(t, xi - d * e)) / (2 * d)
                       for e in np.eye(2)])
        np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-8)


def test_weighted_sum_time_derivative():
    f = make_builtin("weighted_sum", WEIGHTED)
    xi = np.array([[0.3, -0.8]])
    for t in (0.1, 0.5, 0.9):
        d = 1e-6
        fd = (f.value(t + d, xi) - f.value(t - d, xi)) / (2 * d)
        np.testing.assert_allclose(f.dtime(t, xi), fd, rtol=1e-6)
        assert abs(f.dtime(t, xi)[0]) <= f.dtime_bound(t, 1.0)


# dominating bounds

def test_simplex_contains_ball():
    for dim, L in [(1, 1.0), (2, 0.7), (2, 3.0)]:
        v = simplex_vertices(L, dim)
        assert len(v) == dim + 1
        if dim == 2:
            # inradius: distance from the origin to each edge
            for a, b in zip(v, np.roll(v, -1, axis=0)):
                e = b - a
                dist = abs(a[0] * e[1] - a[1] * e[0]) / np.linalg.norm(e)
                assert dist == pytest.approx(L)


def test_area_bound_exceeds_true_sup():
    g = dominating_bound(make_builtin("area"), 1.0, dim=2)
    for t in (0.0, 0.5, 3.0):
        assert g(t) >= np.sqrt(2)


def test_quadratic_bound_in_one_dimension():
    g = dominating_bound(make_builtin("quadratic"), 1.0, dim=1)
    np.testing.assert_allclose(g.vertices.ravel(), [-1.0, 1.0])
    assert g(0.0) == pytest.approx(1.0)


def test_constant_integrand_gives_constant_bound():
    g = dominating_bound(make_builtin("orlicz"), 2.0, dim=2)
    vals = [g(t) for t in np.linspace(0, 5, 11)]
    assert np.ptp(vals) == 0.0


@pytest.mark.parametrize("f", INTEGRANDS, ids=IDS)
@pytest.mark.parametrize("L", [0.5, 1.5])
def test_bound_dominates_on_grid(f, L):
    g = dominating_bound(f, L, dim=2)
    xi = polar_grid(L, 2, n_dirs=10, n_radii=10)
    for t in np.linspace(0, 0.1, 10):
        assert np.all(np.abs(f.value(t, xi)) <= g(t) + 1e-12)


def test_bound_dominates_negative_integrand():
    # an integrand that dips below zero exercises the lower estimate
    f = make_builtin("weighted_sum", {"T": 1.0, "terms": [
        {"weight": "1", "dweight": "0", "integrand": {"family": "quadratic"}}]})
    shifted = type(f)("shifted", lambda t, xi: f.value(t, xi) - 3.0,
                      lambda t, xi: f.grad(t, xi))
    g = dominating_bound(shifted, 1.0, dim=2)
    xi = polar_grid(1.0, 2)
    assert np.max(np.abs(shifted.value(0.0, xi))) <= g(0.0)


@pytest.mark.parametrize("name", RADIAL)
def test_local_lipschitz_estimate(name):
    f = make_builtin(name)
    L = 1.0
    sup = np.max(np.abs(f.value(0.0, polar_grid(L + 1, 2))))
    rng = np.random.default_rng(0)
    a = rng.uniform(-0.7, 0.7, size=(200, 2))
    b = rng.uniform(-0.7, 0.7, size=(200, 2))
    lhs = np.abs(f.value(0.0, a) - f.value(0.0, b))
    assert np.all(lhs <= 2 * sup * np.linalg.norm(a - b, axis=1) + 1e-12)


# Steklov averages

def test_constant_integrand_is_unchanged():
    f = make_builtin("area", {"T": 1.0})
    fe = steklov(f, 0.1)
    xi = polar_grid(1.0, 2, 8, 5)
    np.testing.assert_allclose(fe.value(0.3, xi), f.value(0.3, xi), rtol=1e-13)
    assert steklov_convergence_gap(f, 0.1, 1.0, dim=2) <= 1e-12


def test_switched_average_at_midpoint():
    f = make_builtin("switched", SWITCHED)
    eps = 0.02
    fe = steklov(f, eps)
    xi = polar_grid(1.0, 1)
    f1 = 0.5 * xi[:, 0] ** 2
    f2 = xi[:, 0] ** 2
    np.testing.assert_allclose(fe.value(0.05 - eps / 2, xi), 0.5 * (f1 + f2), rtol=1e-13)


@pytest.mark.parametrize("eps", [0.02, 0.01, 0.005])
def test_switched_gap_closed_form(eps):
    f = make_builtin("switched", SWITCHED)
    L = 1.0
    gap = steklov_convergence_gap(f, eps, L, dim=1)
    closed = eps / 2 * 0.5 * L ** 2
    assert gap == pytest.approx(closed, rel=1e-10)


def test_gap_halves_with_eps():
    f = make_builtin("switched", SWITCHED)
    gaps = [steklov_convergence_gap(f, e, 1.0, dim=1) for e in (0.02, 0.01, 0.005)]
    for a, b in zip(gaps, gaps[1:]):
        assert b / a == pytest.approx(0.5, rel=0.1)


def test_gap_with_tail_includes_zero_extension():
    f = make_builtin("switched", SWITCHED)
    without = steklov_convergence_gap(f, 0.01, 1.0, dim=1)
    with_tail = steklov_convergence_gap(f, 0.01, 1.0, dim=1, include_tail=True)
    # on the last eps the average decays linearly to zero from f2 = L^2
    assert with_tail - without == pytest.approx(0.01 / 2 * 1.0, rel=1e-10)


def test_gap_is_monotone_for_weighted_sum():
    f = make_builtin("weighted_sum", WEIGHTED)
    gaps = [steklov_convergence_gap(f, e, 1.0, dim=2) for e in (0.2, 0.1, 0.05)]
    assert gaps[0] >= gaps[1] >= gaps[2] > 0


def test_quadrature_budget():
    f = make_builtin("switched", SWITCHED)
    with pytest.raises(QuadratureBudgetExceeded):
        steklov_convergence_gap(f, 0.01, 1.0, dim=1, quadrature=64, budget=100)


def test_tail_evaluations_are_flagged():
    fe = steklov(make_builtin("switched", SWITCHED), 0.02)
    fe.value(0.01, np.zeros((1, 1)))
    assert fe.tail_evaluations == 0
    fe.value(0.09, np.zeros((1, 1)))
    assert fe.tail_evaluations == 1


def test_steklov_time_derivative_and_bound():
    base = make_builtin("weighted_sum", WEIGHTED)
    fe = steklov(base, 0.05)
    xi = np.array([[0.4, 0.2]])
    for t in (0.1, 0.4):
        d = 1e-6
        fd = (fe.value(t + d, xi) - fe.value(t - d, xi)) / (2 * d)
        np.testing.assert_allclose(fe.dtime(t, xi), fd, rtol=1e-5)
        assert abs(fe.dtime(t, xi)[0]) <= fe.dtime_bound(t, 1.0)


def test_frozen_slice_matches_evaluation():
    fe = steklov(make_builtin("switched", SWITCHED), 0.01)
    fz = fe.frozen(0.045)
    xi = polar_grid(1.0, 2, 6, 4)
    np.testing.assert_allclose(fz.value(xi), fe.value(0.045, xi), rtol=1e-14)
    r = np.linalg.norm(xi, axis=1)
    np.testing.assert_allclose(fz.phi(r), fe.value(0.045, xi), rtol=1e-14)
