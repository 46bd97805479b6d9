"""Minimizing movements for ``d_t u - div D_xi f(t, Du) = 0``.

Each step minimizes, over P1 functions ``v`` with the Dirichlet datum on
boundary nodes and ``|Dv| <= L`` on every element,

    F_i[v] = sum_e |e| f(t_i, Dv_e) + (1 / 2h) sum_j m_j (v_j - u_{i-1,j})^2

with lumped nodal masses ``m_j``.  The step is solved by ADMM on the
splitting ``w_e = Dv_e``: the ``w`` update is an element-wise proximal map
restricted to the ball ``B_L``, the ``v`` update a sparse SPD solve.
"""
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .bsc import BoundaryTrace, verify_bsc
from .errors import (ConfigError, InfeasibleBC, MissingTimeDerivativeBound,
                     NonConvergence, SchemeError)
from .integrand import (CONSTANT, L1ONLY, FrozenIntegrand, TimeDependentIntegrand,
                        _gauss, _panels, steklov)

__all__ = ["SolverOptions", "SchemeConfig", "InitialDatum", "StepDiagnostics",
           "DiscreteSolution", "EnergyReport", "CauchyTable", "minimize_step",
           "run_scheme", "energy_report", "refine_study", "interpolant_distance",
           "resolve_L", "discrete_functional"]


@dataclass(frozen=True)
class SolverOptions:
    """ADMM parameters; tolerances are relative."""

    rho: float = 1.0
    tol_primal: float = 1e-8
    tol_dual: float = 1e-8
    max_iter: int = 20000
    adaptive_rho: bool = True

    def __post_init__(self):
        if not self.rho > 0:
            raise ConfigError("rho must be positive")
        if not (self.tol_primal > 0 and self.tol_dual > 0):
            raise ConfigError("tolerances must be positive")
        if int(self.max_iter) < 1:
            raise ConfigError("max_iter must be at least 1")


@dataclass(frozen=True)
class SchemeConfig:
    """Time-stepping configuration.

    ``L`` is a positive number or ``"auto"`` (twice the larger of the
    bounded-slope constant and the datum's Lipschitz constant).  ``mode``
    is ``"pointwise"`` (slices ``f(ih, .)``) or ``"steklov"`` (slices of the
    Steklov average with step ``epsilon``, a number or ``"h"``).
    """

    m: int
    T: float
    L: object = "auto"
    mode: str = "pointwise"
    epsilon: object = "h"
    solver: SolverOptions = field(default_factory=SolverOptions)
    quadrature: int = 16

    def __post_init__(self):
        if int(self.m) < 1:
            raise ConfigError("m must be a positive integer")
        if not float(self.T) > 0:
            raise ConfigError("T must be positive")
        if self.mode not in ("pointwise", "steklov"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.L != "auto" and not float(self.L) > 0:
            raise ConfigError("L must be positive or 'auto'")
        if self.epsilon != "h" and not float(self.epsilon) > 0:
            raise ConfigError("epsilon must be positive or 'h'")

    @property
    def h(self):
        return float(self.T) / int(self.m)

    @property
    def eps(self):
        return self.h if self.epsilon == "h" else float(self.epsilon)

    def to_dict(self):
        return {"m": int(self.m), "T": float(self.T), "L": self.L, "mode": self.mode,
                "epsilon": self.epsilon, "quadrature": self.quadrature,
                "solver": {"rho": self.solver.rho, "tol_primal": self.solver.tol_primal,
                           "tol_dual": self.solver.tol_dual,
                           "max_iter": self.solver.max_iter,
                           "adaptive_rho": self.solver.adaptive_rho}}


@dataclass(frozen=True, eq=False)
class InitialDatum:
    """Nodal values of ``u_o`` with its Lipschitz constant and optional BSC report."""

    mesh: object
    values: np.ndarray
    lipschitz: float
    bsc_certificate: object = None
    source: object = field(default=None, repr=False)

    @classmethod
    def from_values(cls, mesh, values, bsc_certificate=None, source=None):
        v = np.asarray(values, dtype=float).copy()
        if v.shape != (mesh.n_nodes,):
            raise ValueError(f"expected {mesh.n_nodes} nodal values, got {v.shape}")
        v.setflags(write=False)
        grads = mesh.element_gradients(v)
        lip = float(np.linalg.norm(grads, axis=-1).max())
        return cls(mesh, v, lip, bsc_certificate, source)

    @classmethod
    def from_function(cls, mesh, func, samples_per_edge=64, certify=True):
        """Sample ``func`` (``(K, d)`` points to ``(K,)`` values) at the nodes.

        With ``certify`` the bounded slope condition of the boundary trace is
        checked and attached.
        """
        values = np.asarray(func(mesh.nodes), dtype=float)
        report = None
        if certify and mesh.domain is not None:
            trace = BoundaryTrace.from_function(mesh.domain, func, samples_per_edge)
            report = verify_bsc(trace)
        return cls.from_values(mesh, values, report, func)

    @property
    def boundary_values(self):
        return self.values[self.mesh.boundary_nodes]

    @property
    def Q(self):
        """Bounded-slope constant if certified, else ``None``."""
        if self.bsc_certificate is None or not self.bsc_certificate.holds:
            return None
        return self.bsc_certificate.q_min

    def shifted(self, c):
        return InitialDatum.from_values(self.mesh, self.values + c, self.bsc_certificate,
                                        None)


@dataclass(frozen=True)
class StepDiagnostics:
    step: int
    iterations: int
    primal: float
    dual: float
    functional: float
    rho: float
    converged: bool = True

    def to_dict(self):
        return {k: getattr(self, k) for k in
                ("step", "iterations", "primal", "dual", "functional", "rho", "converged")}


def _as_frozen(f, t=0.0):
    if isinstance(f, FrozenIntegrand):
        return f
    if isinstance(f, TimeDependentIntegrand):
        return f.frozen(t)
    raise TypeError("expected a FrozenIntegrand or TimeDependentIntegrand")


def _radial_prox(fz, z, rho, L):
    """Minimize ``phi(|w|) + rho/2 |w - z|^2`` over ``|w| <= L`` element-wise."""
    a = np.linalg.norm(z, axis=-1)
    rmax = np.minimum(a, L)

    def g(r):
        return fz.dphi(r) + rho * (r - a)

    r = rmax.copy()
    g_hi = g(rmax)
    todo = g_hi > 0
    g0 = g(np.zeros_like(a))
    r[todo & (g0 >= 0)] = 0.0
    todo &= g0 < 0
    if np.any(todo):
        idx = np.flatnonzero(todo)
        aa = a[idx]
        lo = np.zeros_like(aa)
        hi = rmax[idx].copy()
        x = hi * rho / (rho + np.maximum(fz.d2phi(hi), 0.0))
        scale = rho * (aa + 1.0)
        for _ in range(200):
            gx = fz.dphi(x) + rho * (x - aa)
            pos = gx > 0
            hi = np.where(pos, x, hi)
            lo = np.where(pos, lo, x)
            dg = fz.d2phi(x) + rho
            xn = x - gx / dg
            bad = ~((xn > lo) & (xn < hi))
            xn = np.where(bad, 0.5 * (lo + hi), xn)
            done = (np.abs(gx) <= 1e-15 * scale) | (hi - lo <= 1e-15 * (1 + hi))
            x = np.where(done, x, xn)
            if np.all(done):
                break
        r[idx] = x
    safe = np.where(a > 0, a, 1.0)
    return (np.where(a > 0, r / safe, 0.0))[:, None] * z


def _generic_prox(fz, z, rho, L, w0, iters=500):
    """Projected gradient with backtracking for non-radial slices."""
    def project(w):
        n = np.linalg.norm(w, axis=-1)
        fac = np.where(n > L, L / np.where(n > 0, n, 1.0), 1.0)
        return w * fac[:, None]

    def obj(w):
        return fz.value(w) + 0.5 * rho * np.sum((w - z) ** 2, axis=-1)

    w = project(w0)
    step = np.full(len(w), 1.0 / rho)
    for _ in range(iters):
        gr = fz.grad(w) + rho * (w - z)
        cur = obj(w)
        for _ in range(40):
            cand = project(w - step[:, None] * gr)
            ok = obj(cand) <= cur + np.sum(gr * (cand - w), axis=-1) \
                + 0.5 / step * np.sum((cand - w) ** 2, axis=-1) + 1e-15
            if np.all(ok):
                break
            step = np.where(ok, step, 0.5 * step)
        moved = np.max(np.abs(cand - w)) if len(w) else 0.0
        w = cand
        step = step * 1.5
        if moved <= 1e-15 * (1 + np.max(np.abs(w), initial=0.0)):
            break
    return w


def discrete_functional(fz, mesh, v, u_prev, h, fidelity=True):
    grads = mesh.element_gradients(v)
    val = float(np.sum(mesh.element_measures * fz.value(grads)))
    if fidelity:
        val += float(np.sum(mesh.lumped_mass * (v - u_prev) ** 2)) / (2 * h)
    return val


class _StepOperator:
    """Factorization cache for the ``v`` update at fixed ``(h, rho)``."""

    def __init__(self, mesh):
        self.mesh = mesh
        d = mesh.dim
        self.weights = np.repeat(mesh.element_measures, d)
        I = mesh.interior_nodes
        B = mesh.boundary_nodes
        G = mesh.gradient_matrix.tocsc()
        self.GI = G[:, I].tocsr()
        self.GB = G[:, B].tocsr()
        self.GIt_W = (self.GI.T @ sp.diags(self.weights)).tocsr()
        self.KI = (self.GIt_W @ self.GI).tocsc()
        self.MI = mesh.lumped_mass[I]
        self.I, self.B = I, B
        self._cache = {}

    def solver(self, h, rho, fidelity):
        key = (h if fidelity else None, rho)
        if key not in self._cache:
            A = rho * self.KI
            if fidelity:
                A = A + sp.diags(self.MI / h)
            self._cache = {key: splu(sp.csc_matrix(A))}
        return self._cache[key]


_OPERATORS = {}


def _operator(mesh):
    op = _OPERATORS.get(id(mesh))
    if op is None or op.mesh is not mesh:
        op = _StepOperator(mesh)
        _OPERATORS.clear()
        _OPERATORS[id(mesh)] = op
    return op


def minimize_step(f_i, u_prev, L, bc, solver=None, h=1.0, fidelity=True, step=0):
    """One minimizing-movement step.

    Parameters
    ----------
    f_i : FrozenIntegrand or TimeDependentIntegrand
        The slice ``xi -> f(t_i, xi)``; a time-dependent integrand is frozen
        at ``t = 0``.
    u_prev : (N,) array
        Previous slice.
    L : float
        Gradient cap.
    bc : InitialDatum
        Provides the mesh and the Dirichlet values on boundary nodes.
    solver : SolverOptions, optional
    h : float
        Step size in the fidelity term.
    fidelity : bool
        ``False`` drops the fidelity term (the ``h -> inf`` surrogate).

    Returns
    -------
    values : (N,) array
    diagnostics : StepDiagnostics

    Raises
    ------
    InfeasibleBC
        If the datum's gradient exceeds ``L``.
    NonConvergence
        With the last iterate attached.
    """
    opts = solver or SolverOptions()
    fz = _as_frozen(f_i)
    mesh = bc.mesh
    L = float(L)
    if bc.lipschitz > L * (1 + 1e-12):
        raise InfeasibleBC(f"datum gradient {bc.lipschitz:.6g} exceeds the cap L={L:.6g}")
    u_prev = np.asarray(u_prev, dtype=float)
    if not np.all(np.isfinite(u_prev)):
        raise ValueError("previous slice has non-finite values")
    op = _operator(mesh)
    d = mesh.dim
    E = mesh.n_elements
    Wd = op.weights
    g = bc.boundary_values
    GBg = op.GB @ g

    v = u_prev.copy()
    v[op.B] = g
    rho = float(opts.rho)

    def prox(z, w_guess):
        if fz.is_radial:
            return _radial_prox(fz, z.reshape(E, d), rho, L).ravel()
        return _generic_prox(fz, z.reshape(E, d), rho, L, w_guess.reshape(E, d)).ravel()

    def wnorm(a):
        return float(np.sqrt(np.sum(Wd * a * a)))

    Gv = op.GI @ v[op.I] + GBg
    w = Gv.copy().reshape(E, d)
    nw = np.linalg.norm(w, axis=-1)
    w = np.where((nw > L)[:, None], w * (L / np.where(nw > 0, nw, 1.0))[:, None], w).ravel()
    if fz.grad is not None:
        y = -fz.grad(w.reshape(E, d)).ravel() / rho
    else:
        y = np.zeros_like(w)

    floor = 1e-3 * np.sqrt(mesh.total_measure)
    rhs_fid = op.MI * u_prev[op.I] / h if fidelity else 0.0
    pri = dua = np.inf
    it = 0
    converged = False
    for it in range(1, int(opts.max_iter) + 1):
        lu = op.solver(h, rho, fidelity)
        b = rhs_fid + rho * (op.GIt_W @ (w + y - GBg))
        v[op.I] = lu.solve(b)
        Gv = op.GI @ v[op.I] + GBg
        w_old = w
        w = prox(Gv - y, w)
        y = y + w - Gv
        pri = wnorm(w - Gv)
        dua = rho * wnorm(w - w_old)
        scale_p = max(wnorm(w), wnorm(Gv), floor * opts.tol_primal)
        scale_d = max(rho * wnorm(y), floor * opts.tol_dual)
        if pri <= opts.tol_primal * scale_p and dua <= opts.tol_dual * scale_d:
            converged = True
            break
        if opts.adaptive_rho and it % 10 == 0:
            rp, rd = pri / scale_p, dua / scale_d
            if rp > 10 * rd and rho < 1e6:
                rho *= 2.0
                y /= 2.0
            elif rd > 10 * rp and rho > 1e-6:
                rho /= 2.0
                y *= 2.0

    F = discrete_functional(fz, mesh, v, u_prev, h, fidelity)
    diag = StepDiagnostics(step, it, pri, dua, F, rho, converged)
    if not converged:
        err = NonConvergence(opts.max_iter, iterate=v.copy(), diagnostics=diag)
        err.step = step
        raise err
    return v, diag


def resolve_L(config, u_o):
    """The gradient cap: numeric ``config.L``, or twice ``max{Q, ||Du_o||}``."""
    if config.L != "auto":
        return float(config.L)
    Q = u_o.Q or 0.0
    base = max(Q, u_o.lipschitz)
    return 2.0 * base if base > 0 else 1.0


@dataclass(frozen=True, eq=False)
class DiscreteSolution:
    """Time slices ``u_0 .. u_m`` with their interpolants and diagnostics."""

    mesh: object
    slices: np.ndarray
    h: float
    u_o: InitialDatum
    integrand: TimeDependentIntegrand
    base_integrand: TimeDependentIntegrand
    config: SchemeConfig
    L: float
    diagnostics: tuple = ()

    @property
    def m(self):
        return len(self.slices) - 1

    @property
    def T(self):
        return self.h * self.m

    @property
    def times(self):
        return self.h * np.arange(self.m + 1)

    @property
    def tol(self):
        return self.config.solver.tol_primal

    def slice_time(self, i):
        """Time at which step ``i`` evaluates the integrand."""
        return i * self.h

    def piecewise_constant(self, t):
        """``u^{(m)}(t) = u_i`` for ``t`` in ``((i-1)h, ih]``; ``u_0`` at ``t = 0``."""
        i = int(np.clip(np.ceil(t / self.h - 1e-12), 0, self.m))
        return self.slices[i]

    def piecewise_linear(self, t):
        s = np.clip(t / self.h, 0, self.m)
        i = int(min(np.floor(s), self.m - 1))
        lam = s - i
        return (1 - lam) * self.slices[i] + lam * self.slices[i + 1]

    def time_derivative(self, i):
        """``d_t`` of the linear interpolant on ``((i-1)h, ih)``."""
        return (self.slices[i] - self.slices[i - 1]) / self.h

    def element_gradients(self):
        return self.mesh.element_gradients(self.slices)

    def with_slices(self, slices):
        return replace(self, slices=np.asarray(slices, dtype=float))


def _scheme_integrand(f, config):
    if config.mode == "pointwise":
        if f.regularity == L1ONLY:
            raise ConfigError("pointwise mode needs a Constant or W11 integrand; "
                              "use steklov mode for L1Only integrands")
        return f
    return steklov(f, config.eps, config.quadrature, horizon=float(config.T))


def run_scheme(f, u_o, config, fidelity=True):
    """Run ``m`` minimizing-movement steps from ``u_o``.

    Errors from a step are re-raised with ``.step`` set to the failing index.
    """
    fs = _scheme_integrand(f, config)
    L = resolve_L(config, u_o)
    h = config.h
    slices = [np.array(u_o.values, dtype=float)]
    diags = []
    for i in range(1, int(config.m) + 1):
        try:
            v, dg = minimize_step(fs.frozen(i * h), slices[-1], L, u_o, config.solver, h,
                                  fidelity, step=i)
        except SchemeError as exc:
            exc.step = i
            raise
        slices.append(v)
        diags.append(dg)
    arr = np.array(slices)
    arr.setflags(write=False)
    return DiscreteSolution(u_o.mesh, arr, h, u_o, fs, f, config, L, tuple(diags))


@dataclass(frozen=True)
class EnergyReport:
    lhs_increments: float
    rhs_increments: float
    lhs_time_derivative: float
    rhs_time_derivative: float
    telescoped_bound: float
    sup_f0: float
    g_tilde_l1: float
    tolerance: float

    @property
    def margins(self):
        return (self.rhs_increments - self.lhs_increments,
                self.rhs_time_derivative - self.lhs_time_derivative)

    @property
    def passed(self):
        return min(self.margins) >= -self.tolerance

    def to_dict(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["margins"] = list(self.margins)
        d["pass"] = self.passed
        return d


def _g_tilde_l1(f, L, T, dim, quadrature=16):
    if f.regularity == CONSTANT:
        return 0.0
    x, w = _gauss(quadrature)
    total = 0.0
    for lo, hi in _panels(0.0, T, f.breakpoints):
        half = 0.5 * (hi - lo)
        total += half * sum(wj * f.dtime_bound(lo + half * (xj + 1), L, dim=dim)
                            for xj, wj in zip(x, w))
    return total


def energy_report(sol, f=None, L=None):
    """Energy estimates on a discrete solution.

    Left sides: ``(1/2h) sum_i int |u_i - u_{i-1}|^2`` and its twice
    ``iint |d_t u~|^2``.  Right sides: ``2|Omega| (sup_{B_L} |f(0,.)| +
    ||g~_L||_1)`` and twice that.  Also reports the telescoped per-step
    bound, which holds step by step for exact minimizers.
    """
    f = sol.integrand if f is None else f
    L = sol.L if L is None else float(L)
    if f.regularity == L1ONLY:
        raise MissingTimeDerivativeBound(
            "the energy estimate needs a W11 or Steklov integrand")
    mesh = sol.mesh
    dim = mesh.dim
    M = mesh.lumped_mass
    du = np.diff(sol.slices, axis=0)
    h = sol.h
    lhs1 = float(np.sum(M * du ** 2)) / (2 * h)
    lhs2 = 2 * lhs1
    sup0 = f.sup_abs_on_ball(0.0, L, dim=dim)
    gt = _g_tilde_l1(f, L, sol.T, dim)
    omega = mesh.total_measure
    rhs1 = 2 * omega * (sup0 + gt)
    rhs2 = 4 * omega * (sup0 + gt)
    grads = sol.element_gradients()
    meas = mesh.element_measures
    tele = 0.0
    for i in range(1, sol.m + 1):
        fz = f.frozen(sol.slice_time(i))
        tele += float(np.sum(meas * (fz.value(grads[i - 1]) - fz.value(grads[i]))))
    return EnergyReport(lhs1, rhs1, lhs2, rhs2, tele, sup0, gt, 10 * sol.tol)


def interpolant_distance(a, b):
    """``L^2(Omega_T)`` distance between the linear-in-time interpolants of two runs."""
    if a.mesh is not b.mesh and a.mesh.n_nodes != b.mesh.n_nodes:
        raise ValueError("runs must share a mesh")
    T = a.T
    grid = np.union1d(a.times, b.times)
    grid = grid[grid <= T * (1 + 1e-12)]
    x, w = _gauss(2)
    M = a.mesh.lumped_mass
    total = 0.0
    for lo, hi in zip(grid[:-1], grid[1:]):
        half = 0.5 * (hi - lo)
        for xj, wj in zip(x, w):
            t = lo + half * (xj + 1)
            dlt = a.piecewise_linear(t) - b.piecewise_linear(t)
            total += half * wj * float(np.sum(M * dlt ** 2))
    return float(np.sqrt(total))


@dataclass(frozen=True)
class CauchyTable:
    m_list: tuple
    distances: tuple
    runs: tuple = field(default=(), repr=False, compare=False)

    @property
    def decreasing(self):
        d = self.distances
        return all(d[k + 1] <= d[k] for k in range(len(d) - 1))

    def rows(self):
        return [(self.m_list[k], self.m_list[k + 1], self.distances[k])
                for k in range(len(self.distances))]


def refine_study(f, u_o, config, m_list):
    """Distances between interpolants at successive ``m`` (``epsilon`` follows ``h`` when tied)."""
    m_list = [int(m) for m in m_list]
    if any(b <= a for a, b in zip(m_list[:-1], m_list[1:])):
        raise ValueError("m_list must be strictly increasing")
    runs = [run_scheme(f, u_o, replace(config, m=m)) for m in m_list]
    dist = tuple(interpolant_distance(a, b) for a, b in zip(runs[:-1], runs[1:]))
    return CauchyTable(tuple(m_list), dist, tuple(runs))
