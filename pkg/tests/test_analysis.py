import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from conftest import SWITCHED, sine

from bscflow import (ConvexDomain, InitialDatum, SchemeConfig, make_builtin, run_scheme,
                     triangulate)
from bscflow.analysis import (campanato_ratios, check_comparison, check_gradient_bound,
                              check_initial_attainment, check_max_principle,
                              check_time_regularity, check_variational_inequality,
                              dyadic_taus, holder_seminorm, interior_bump, mollify,
                              variational_residual, weak_residual, weighted_poincare_check)
from bscflow.errors import BoundaryMismatch, MeshMismatch, MissingBscCertificate, MissingGradient
from bscflow.integrand import TimeDependentIntegrand


@pytest.fixture(scope="module")
def affine_run(affine_datum):
    return run_scheme(make_builtin("area"), affine_datum, SchemeConfig(m=8, T=0.1))


@pytest.fixture(scope="module")
def double_run(sine_datum):
    d2 = InitialDatum.from_values(sine_datum.mesh, 2 * sine_datum.values)
    return run_scheme(make_builtin("quadratic"), d2, SchemeConfig(m=64, T=0.1))


def affine_plus_bump(mesh, base, amp=0.02):
    x = mesh.nodes
    bump = np.prod(np.sin(np.pi * x), axis=1)
    return base + amp * bump


# mollification

def test_mollify_constant():
    ms = mollify(np.full((10, 3), 2.5), 2.5, 0.1, dt=0.05)
    np.testing.assert_allclose(ms.values, 2.5, rtol=1e-15)
    np.testing.assert_allclose(ms.at(0.123), 2.5, rtol=1e-15)


@pytest.mark.parametrize("h", [0.01, 0.1, 1.0])
def test_mollify_identity_closed_form(h):
    times = np.linspace(0, 1, 401)
    ms = mollify(times, 0.0, h, times=times, kind="linear")
    expect = times - h * (1 - np.exp(-times / h))
    np.testing.assert_allclose(ms.values, expect, atol=1e-10)
    for t in (0.0013, 0.5, 0.99):
        assert abs(ms.at(t) - (t - h * (1 - np.exp(-t / h)))) <= 1e-10


@pytest.mark.parametrize("kind, extra", [("constant", 0), ("linear", 1)])
@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 31))
def test_mollify_solves_ode(kind, extra, seed):
    rng = np.random.default_rng(seed)
    S = int(rng.integers(3, 30))
    times = np.concatenate([[0.0], np.cumsum(rng.uniform(0.01, 0.1, S))])
    series = rng.normal(size=(S + extra, 4))
    ms = mollify(series, rng.normal(size=4), rng.uniform(0.02, 0.5), times=times, kind=kind)
    assert ms.ode_residual() <= 1e-8


def test_mollify_converges_to_series():
    rng = np.random.default_rng(0)
    series = rng.normal(size=50)
    dt = 0.02
    fine = np.linspace(0, 1, 4001)[1:]

    def dist(h):
        ms = mollify(series, series[0], h, dt=dt)
        return np.sqrt(np.mean([(ms.at(t) - ms.base(t)) ** 2 for t in fine]))
    d = [dist(h) for h in (0.02, 0.01, 0.005, 0.0025)]
    assert all(b < a for a, b in zip(d, d[1:]))


def test_mollify_is_linear():
    rng = np.random.default_rng(2)
    a, b = rng.normal(size=(2, 12))
    ma = mollify(a, 1.0, 0.1, dt=0.1)
    mb = mollify(b, -2.0, 0.1, dt=0.1)
    mab = mollify(a + 3 * b, 1.0 - 6.0, 0.1, dt=0.1)
    np.testing.assert_allclose(mab.values, ma.values + 3 * mb.values, atol=1e-13)


@pytest.mark.parametrize("kwargs", [dict(h_moll=0.0, dt=0.1), dict(h_moll=0.1),
                                    dict(h_moll=0.1, dt=0.1, kind="spline")])
def test_mollify_bad_arguments(kwargs):
    with pytest.raises(ValueError):
        mollify(np.ones(4), 0.0, **kwargs)


# variational inequality

def test_dyadic_taus(heat_runs):
    sol = heat_runs[16]
    np.testing.assert_allclose(dyadic_taus(sol), sol.h * np.array([1, 2, 4, 8, 16]))


def test_vi_initial_datum(heat_runs, sine_datum):
    sol = heat_runs[64]
    f = sol.integrand
    for tau in dyadic_taus(sol):
        res = variational_residual(sol, sine_datum.values, tau=tau)
        assert res >= -10 * sol.tol
    # the left side is bounded by the energy of the datum
    k = sol.m
    g0 = sol.mesh.element_gradients(sine_datum.values)
    gu = sol.element_gradients()
    meas = sol.mesh.element_measures
    lhs = sum(sol.h * np.sum(meas * f.frozen(sol.slice_time(i)).value(gu[i]))
              for i in range(1, k + 1))
    rhs = sum(sol.h * np.sum(meas * f.frozen(sol.slice_time(i)).value(g0))
              for i in range(1, k + 1))
    assert lhs <= rhs


@pytest.mark.parametrize("which", ["heat", "switched"])
def test_vi_own_interpolant(heat_runs, switched_run, which):
    sol = heat_runs[64] if which == "heat" else switched_run
    for tau in dyadic_taus(sol):
        assert variational_residual(sol, sol.slices, tau=tau) >= -10 * sol.tol


def test_vi_affine_plus_bump(affine_run, affine_datum):
    v = affine_plus_bump(affine_run.mesh, affine_datum.values)
    rep = check_variational_inequality(affine_run, {"bump": v, "datum": affine_datum.values})
    assert rep.passed
    assert rep.details["variational[bump]"]["details"]["admissible"]


def test_vi_time_dependent_comparison(heat_runs, sine_datum):
    sol = heat_runs[32]
    rep = check_variational_inequality(
        sol, {"decay": lambda t: np.exp(-5 * t) * sine_datum.values})
    assert rep.passed


def test_vi_detects_a_non_solution(heat_runs, sine_datum):
    sol = heat_runs[64]
    frozen = sol.with_slices(np.broadcast_to(sine_datum.values, sol.slices.shape).copy())
    assert variational_residual(frozen, sol.slices) < -0.1


def test_vi_boundary_mismatch(heat_runs, sine_datum):
    with pytest.raises(BoundaryMismatch):
        variational_residual(heat_runs[16], sine_datum.values + 1.0)


def test_vi_bad_tau(heat_runs):
    with pytest.raises(ValueError):
        variational_residual(heat_runs[16], heat_runs[16].slices, tau=0.0013)


# gradient bound

def test_gradient_bound_affine(affine_run):
    rep = check_gradient_bound(affine_run)
    assert rep.measured == pytest.approx(0.7, abs=1e-9)
    assert rep.bound == pytest.approx(0.7, abs=1e-9)
    assert rep.passed


def test_gradient_bound_heat(heat_runs):
    rep = check_gradient_bound(heat_runs[64])
    assert rep.passed
    assert rep.measured <= 1.05 * np.pi


def test_gradient_bound_detector(heat_runs):
    sol = heat_runs[16]
    U = sol.slices.copy()
    bound = max(sol.u_o.Q, sol.u_o.lipschitz)
    # one steep element at step 3
    U[3, 60] += 2 * bound / 127
    rep = check_gradient_bound(sol.with_slices(U))
    assert not rep.passed
    assert rep.location["step"] == 3
    assert rep.location["element"] in (59, 60)


def test_gradient_bound_needs_certificate(line_mesh, heat_runs):
    d = InitialDatum.from_function(line_mesh, sine, certify=False)
    with pytest.raises(MissingBscCertificate):
        check_gradient_bound(heat_runs[16], u_o=d)


# comparison and maximum principle

def test_translation_comparison(sine_datum):
    f = make_builtin("area")
    cfg = SchemeConfig(m=8, T=0.05)
    a = run_scheme(f, sine_datum, cfg)
    b = run_scheme(f, sine_datum.shifted(1.0), cfg)
    np.testing.assert_allclose(b.slices - a.slices, 1.0, atol=1e-6)
    rep = check_comparison(a, b)
    assert rep.passed and rep.details["order"] == "a<=b"
    assert rep.details["min_gap"] == pytest.approx(1.0, abs=1e-6)


def test_ordered_sines(heat_runs, double_run):
    a = heat_runs[64]
    rep = check_comparison(a, double_run)
    assert rep.passed and rep.details["order"] == "a<=b"
    assert np.all(a.slices <= double_run.slices + 10 * a.tol)
    # reversed roles report the other order
    assert check_comparison(double_run, a).details["order"] == "b<=a"
    assert check_max_principle(a, double_run).passed
    assert check_max_principle(double_run, a).passed


def test_unordered_data_are_vacuous(heat_runs, line_mesh):
    wiggle = np.sin(3 * np.pi * line_mesh.nodes[:, 0])
    rep = check_comparison(heat_runs[16], 0.5 * wiggle)
    assert rep.passed and rep.details["order"] == "none"


def test_comparison_with_affine_supports(square_mesh):
    d = InitialDatum.from_function(square_mesh, lambda p: p[:, 0] * p[:, 1])
    sol = run_scheme(make_builtin("area"), d, SchemeConfig(m=8, T=0.1))
    for w in d.bsc_certificate.witnesses[::8]:
        up = check_comparison(sol, w.upper_at(square_mesh.nodes))
        lo = check_comparison(sol, w.lower_at(square_mesh.nodes))
        assert up.passed and up.details["order"] == "a<=b"
        assert lo.passed and lo.details["order"] == "b<=a"


def test_max_principle_detector(heat_runs, double_run):
    U = heat_runs[16].slices.copy()
    U[5, 64] += 1.0
    rep = check_max_principle(heat_runs[16].with_slices(U), np.zeros(U.shape[1]))
    assert not rep.passed
    assert rep.location == {"step": 5, "node": 64}


def test_mesh_mismatch(heat_runs, affine_run):
    with pytest.raises(MeshMismatch):
        check_comparison(heat_runs[16], affine_run)
    with pytest.raises(MeshMismatch):
        check_max_principle(heat_runs[16], heat_runs[32])
    with pytest.raises(MeshMismatch):
        check_comparison(heat_runs[16], np.zeros(5))


# initial attainment

def test_initial_attainment_affine(affine_run):
    rep = check_initial_attainment(affine_run)
    assert rep.passed
    assert all(r["measured"] <= 1e-20 for r in rep.details.values() if isinstance(r, dict))


def test_initial_attainment_heat(heat_runs):
    rep = check_initial_attainment(heat_runs[64])
    assert rep.passed
    first = rep.details[f"tau={heat_runs[64].h:.6g}"]
    assert first["measured"] < 0.01 * first["bound"]


def test_initial_attainment_switched(switched_run):
    assert check_initial_attainment(switched_run).passed


# weak formulation

def test_weak_residual_affine(affine_run):
    assert weak_residual(affine_run).measured <= 1e-8


def test_weak_residual_heat(heat_runs):
    rep = weak_residual(heat_runs[64])
    assert rep.passed and rep.measured <= 0.05


def test_weak_residual_decreases_under_refinement():
    f = make_builtin("quadratic")
    res = []
    for n, m in [(32, 16), (64, 32), (128, 64)]:
        mesh = triangulate(ConvexDomain.interval(0.0, 1.0), 1 / (n - 1))
        sol = run_scheme(f, InitialDatum.from_function(mesh, sine), SchemeConfig(m=m, T=0.1))
        res.append(weak_residual(sol).measured)
    assert res[0] > res[1] > res[2]


def test_weak_residual_detector(heat_runs):
    sol = heat_runs[64]
    rng = np.random.default_rng(0)
    U = sol.slices.copy()
    U[1:, sol.mesh.interior_nodes] = rng.uniform(0, 1, (sol.m, len(sol.mesh.interior_nodes)))
    fake = weak_residual(sol, slices=U).measured
    assert fake > 10 * weak_residual(sol).measured


def test_weak_residual_switched(switched_run):
    assert weak_residual(switched_run).passed


def test_weak_residual_needs_gradient(heat_runs):
    f = TimeDependentIntegrand("nograd", lambda t, xi: 0.5 * np.sum(xi ** 2, axis=-1))
    with pytest.raises(MissingGradient):
        weak_residual(heat_runs[16], f=f)
    with pytest.raises(MissingGradient):
        check_time_regularity(heat_runs[16], f=f)


# time regularity

def test_affine_regularity(affine_run):
    assert holder_seminorm(affine_run) <= 1e-9
    ratios = campanato_ratios(affine_run)
    assert ratios and max(r for _, r, _ in ratios) <= 1.0
    assert check_time_regularity(affine_run).passed


def test_heat_regularity_is_stable(heat_runs):
    rep = check_time_regularity(heat_runs[64], reference=heat_runs[32])
    assert rep.passed
    stab = rep.details["holder_stability"]
    assert stab["measured"] <= 0.2


def test_holder_seminorm_analytic_scale(heat_runs):
    # near t = 0 the increment over one step is about |u_t| h = pi^2 h
    sol = heat_runs[64]
    semi = holder_seminorm(sol)
    assert semi >= np.pi ** 2 * np.sqrt(sol.h) * 0.5
    assert semi <= np.pi ** 2 * np.sqrt(sol.T)


@pytest.mark.parametrize("center, r", [((0.5, 0.5), 0.5), ((0.0, 0.0), 0.5),
                                       ((0.3, 0.8), 0.25)])
def test_weighted_poincare_linear(center, r):
    rep = weighted_poincare_check(ConvexDomain.unit_square(), lambda p: p[:, 0],
                                  lambda p: np.tile([1.0, 0.0], (len(p), 1)), center, r)
    assert rep.passed and rep.margin > 0


def test_weighted_poincare_disk_needs_weight_factor():
    # on a full disk of radius r the plain r^2/pi^2 constant is too small for x1
    disk = ConvexDomain.polygon([(np.cos(a), np.sin(a))
                                 for a in np.linspace(0, 2 * np.pi, 64, endpoint=False)])
    rep = weighted_poincare_check(disk, lambda p: p[:, 0],
                                  lambda p: np.tile([1.0, 0.0], (len(p), 1)), (0.0, 0.0), 0.5)
    assert rep.passed
    assert rep.measured > rep.details["unweighted_constant_r2_over_pi2"]


def test_interior_bump_support():
    dom = ConvexDomain.unit_square()
    eta, c, rho = interior_bump(dom, (0.0, 0.0), 0.5)
    assert dom.contains(c[None])[0]
    assert rho > 0 and np.linalg.norm(c) + rho <= 0.5 + 1e-12
    assert eta(c[None])[0] > 0
    assert eta(np.array([[0.9, 0.9]]))[0] == 0.0
