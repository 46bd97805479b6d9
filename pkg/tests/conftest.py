import numpy as np
import pytest

from bscflow import (ConvexDomain, InitialDatum, SchemeConfig, make_builtin, run_scheme,
                     triangulate)


def sine(p):
    return np.sin(np.pi * p[:, 0])


def heat_exact(x, t):
    return np.exp(-np.pi ** 2 * t) * np.sin(np.pi * x)


def switched_exact(x, t, t_o=0.05):
    return np.sin(np.pi * x) * np.exp(-np.pi ** 2 * min(t, t_o) - 2 * np.pi ** 2 * max(t - t_o, 0.0))


SWITCHED = {"t_o": 0.05, "T": 0.1, "f1": {"family": "quadratic"},
            "f2": {"family": "quadratic", "c": 2}}


@pytest.fixture(scope="session")
def line_mesh():
    return triangulate(ConvexDomain.interval(0.0, 1.0), 1 / 127)


@pytest.fixture(scope="session")
def square_mesh():
    return triangulate(ConvexDomain.unit_square(), 0.125)


@pytest.fixture(scope="session")
def sine_datum(line_mesh):
    return InitialDatum.from_function(line_mesh, sine)


@pytest.fixture(scope="session")
def heat_runs(sine_datum):
    f = make_builtin("quadratic")
    return {m: run_scheme(f, sine_datum, SchemeConfig(m=m, T=0.1)) for m in (16, 32, 64)}


@pytest.fixture(scope="session")
def switched_run(sine_datum):
    f = make_builtin("switched", SWITCHED)
    return run_scheme(f, sine_datum, SchemeConfig(m=64, T=0.1, mode="steklov"))


@pytest.fixture(scope="session")
def affine_datum(square_mesh):
    return InitialDatum.from_function(square_mesh, lambda p: 0.3 + 0.7 * p[:, 0])


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, text = ACCEPTANCE[key]
        terminalreporter.write_line(f"AC{key:>2} {'PASS' if ok else 'FAIL'}  {text}")
