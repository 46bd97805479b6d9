"""Property checks on discrete solutions, plus exponential time mollification.

Every checker returns a :class:`PropertyReport` whose ``passed`` flag is
``measured <= bound + tolerance``; slack is always explicit.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundaryMismatch, MeshMismatch, MissingBscCertificate, MissingGradient
from .integrand import _gauss, dominating_bound, polar_grid

__all__ = [
    "PropertyReport", "MollifiedSeries", "mollify", "dyadic_taus",
    "variational_residual", "check_variational_inequality", "check_gradient_bound",
    "check_comparison", "check_max_principle", "check_initial_attainment",
    "weak_residual", "holder_seminorm", "campanato_ratios", "check_time_regularity",
    "weighted_poincare_check", "interior_bump",
]


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if np.isfinite(x) else repr(x)
    return x


@dataclass(frozen=True)
class PropertyReport:
    """Outcome of one check: ``passed`` iff ``measured <= bound + tolerance``."""

    name: str
    measured: float
    bound: float
    tolerance: float = 0.0
    policy: str = ""
    location: object = None
    details: dict = field(default_factory=dict)

    @property
    def passed(self):
        return bool(self.measured <= self.bound + self.tolerance)

    @property
    def margin(self):
        return float(self.bound + self.tolerance - self.measured)

    def to_dict(self):
        return _jsonable({
            "name": self.name, "pass": self.passed, "measured": self.measured,
            "bound": self.bound, "tolerance": self.tolerance, "margin": self.margin,
            "policy": self.policy, "location": self.location, "details": self.details,
        })


def _report_all(name, reports, policy):
    """Combine sub-reports: pass iff all pass; measured is the worst negative margin."""
    worst = min(reports, key=lambda r: r.margin)
    return PropertyReport(name, -worst.margin, 0.0, 0.0, policy, worst.name,
                          {r.name: r.to_dict() for r in reports})


# time mollification

@dataclass(frozen=True, eq=False)
class MollifiedSeries:
    """``[v]_h`` on a time grid, with exact evaluation anywhere in ``[0, T]``."""

    times: np.ndarray
    series: np.ndarray
    v_o: np.ndarray
    h_moll: float
    kind: str
    values: np.ndarray

    def base(self, t):
        """The underlying series ``v(t)``."""
        i = self._index(t)
        if self.kind == "constant":
            return self.series[i - 1] if i > 0 else self.series[0]
        if i == 0:
            return self.series[0]
        lam = (t - self.times[i - 1]) / (self.times[i] - self.times[i - 1])
        return (1 - lam) * self.series[i - 1] + lam * self.series[i]

    def _index(self, t):
        """Index ``i`` with ``t`` in ``(t_{i-1}, t_i]``; 0 at ``t = 0``."""
        i = int(np.searchsorted(self.times, t, side="left"))
        return min(max(i, 0), len(self.times) - 1)

    def at(self, t):
        i = self._index(t)
        if i == 0:
            return self.values[0].copy()
        s = t - self.times[i - 1]
        return _moll_step(self.values[i - 1], s, self.h_moll, *self._piece(i))

    def _piece(self, i):
        if self.kind == "constant":
            return self.series[i - 1], 0.0
        dt = self.times[i] - self.times[i - 1]
        return self.series[i - 1], (self.series[i] - self.series[i - 1]) / dt

    def derivative(self, t):
        """``d_t [v]_h = (v - [v]_h) / h``."""
        return (self.base(t) - self.at(t)) / self.h_moll

    def ode_residual(self, rel_step=1e-3):
        """Max of ``|D [v]_h - (v - [v]_h)/h|`` at step midpoints.

        ``D`` is the fourth-order five-point centred difference.
        """
        dlt = rel_step * self.h_moll
        worst = 0.0
        for i in range(1, len(self.times)):
            a, b = self.times[i - 1], self.times[i]
            t = 0.5 * (a + b)
            d = min(dlt, 0.2 * (b - a))
            fd = (8 * (self.at(t + d) - self.at(t - d))
                  - (self.at(t + 2 * d) - self.at(t - 2 * d))) / (12 * d)
            worst = max(worst, float(np.max(np.abs(fd - self.derivative(t)))))
        return worst


def _moll_step(y0, s, h, a, b):
    e = np.exp(-s / h)
    one_minus = -np.expm1(-s / h)
    x = s / h
    ramp = h * (x + np.expm1(-x))
    return e * y0 + a * one_minus + b * ramp


def mollify(series, v_o, h_moll, dt=None, times=None, kind="constant"):
    """Exponential time mollification ``[v]_h``.

    ``[v]_h(t) = e^{-t/h} v_o + (1/h) int_0^t e^{(s-t)/h} v(s) ds``, computed
    by exact integration step by step.

    Parameters
    ----------
    series : array, shape (S, ...) or (S+1, ...)
        ``kind="constant"``: value ``series[i-1]`` on ``(t_{i-1}, t_i]``
        (``S`` entries).  ``kind="linear"``: nodal values at ``t_0..t_S``
        joined linearly.
    v_o : array
        Initial value ``[v]_h(0)``.
    h_moll : float
    dt, times :
        Uniform step or explicit grid ``0 = t_0 < ... < t_S``.
    """
    if not h_moll > 0:
        raise ValueError("h_moll must be positive")
    series = np.asarray(series, dtype=float)
    if len(series) == 0:
        raise ValueError("series must be non-empty")
    if kind not in ("constant", "linear"):
        raise ValueError("kind must be 'constant' or 'linear'")
    S = len(series) if kind == "constant" else len(series) - 1
    if times is None:
        if dt is None:
            raise ValueError("give dt or times")
        times = dt * np.arange(S + 1)
    times = np.asarray(times, dtype=float)
    if len(times) != S + 1:
        raise ValueError("times must have one more entry than the number of steps")
    v_o = np.broadcast_to(np.asarray(v_o, dtype=float), series.shape[1:]).astype(float)
    out = np.empty((S + 1,) + series.shape[1:])
    out[0] = v_o
    for i in range(1, S + 1):
        s = times[i] - times[i - 1]
        if kind == "constant":
            a, b = series[i - 1], 0.0
        else:
            a, b = series[i - 1], (series[i] - series[i - 1]) / s
        out[i] = _moll_step(out[i - 1], s, h_moll, a, b)
    return MollifiedSeries(times, series, v_o, float(h_moll), kind, out)


# variational inequality

def dyadic_taus(sol):
    """``h, 2h, 4h, ...`` up to ``T``, plus ``T`` itself."""
    ks = []
    k = 1
    while k <= sol.m:
        ks.append(k)
        k *= 2
    if ks[-1] != sol.m:
        ks.append(sol.m)
    return [k * sol.h for k in ks]


def _as_series(v, sol):
    if callable(v):
        return np.array([np.asarray(v(t), dtype=float) for t in sol.times])
    arr = np.asarray(v, dtype=float)
    if arr.ndim == 1:
        return np.broadcast_to(arr, (sol.m + 1, arr.size)).copy()
    if arr.shape != sol.slices.shape:
        raise ValueError(f"comparison series has shape {arr.shape}, expected {sol.slices.shape}")
    return arr


def variational_residual(sol, v, f=None, tau=None):
    """``RHS(v) - LHS(u)`` of the discrete variational inequality on ``(0, tau)``.

    With ``k = tau / h`` and lumped inner products:

        LHS = h sum_{i<=k} int f_i(Du_i)
        RHS = h sum_{i<=k} int f_i(Dv_i) + sum_{i<=k} int (v_i - v_{i-1})(v_i - u_i)
              + 1/2 int |v_0 - u_o|^2 - 1/2 int |v_k - u_k|^2

    The time derivative of ``v`` is the backward difference, matching the
    implicit steps.  For exact step minimizers and admissible ``v``
    (datum on the boundary, ``|Dv| <= L``) the residual is non-negative.

    Parameters
    ----------
    v : array ``(m+1, N)``, ``(N,)`` (constant in time) or callable ``t -> (N,)``
    f : integrand, default the one used by the scheme
    tau : float, default ``T``
    """
    f = sol.integrand if f is None else f
    vs = _as_series(v, sol)
    mesh = sol.mesh
    B = mesh.boundary_nodes
    dev = np.abs(vs[:, B] - sol.u_o.boundary_values[None, :])
    scale = max(1.0, float(np.abs(sol.u_o.values).max()))
    if dev.size and dev.max() > 1e-12 * scale:
        raise BoundaryMismatch(
            f"comparison map leaves the boundary datum by {dev.max():.3e}")
    tau = sol.T if tau is None else float(tau)
    k = int(round(tau / sol.h))
    if not 1 <= k <= sol.m or abs(k * sol.h - tau) > 1e-9 * sol.h:
        raise ValueError(f"tau must be a positive multiple of h up to T, got {tau}")
    M = mesh.lumped_mass
    meas = mesh.element_measures
    gu = mesh.element_gradients(sol.slices[:k + 1])
    gv = mesh.element_gradients(vs[:k + 1])
    u = sol.slices
    lhs = rhs = 0.0
    for i in range(1, k + 1):
        fz = f.frozen(sol.slice_time(i))
        lhs += sol.h * float(np.sum(meas * fz.value(gu[i])))
        rhs += sol.h * float(np.sum(meas * fz.value(gv[i])))
        rhs += float(np.sum(M * (vs[i] - vs[i - 1]) * (vs[i] - u[i])))
    rhs += 0.5 * float(np.sum(M * (vs[0] - u[0]) ** 2))
    rhs -= 0.5 * float(np.sum(M * (vs[k] - u[k]) ** 2))
    return rhs - lhs


def check_variational_inequality(sol, comparisons, f=None, taus=None):
    """Residuals for named comparison maps at every ``tau``; pass iff all ``>= -10 tol``."""
    taus = dyadic_taus(sol) if taus is None else list(taus)
    tol = 10 * sol.tol
    reports = []
    for name, v in comparisons.items():
        vs = _as_series(v, sol)
        lip = float(np.linalg.norm(sol.mesh.element_gradients(vs), axis=-1).max())
        res = [variational_residual(sol, vs, f, tau) for tau in taus]
        worst = int(np.argmin(res))
        reports.append(PropertyReport(
            f"variational[{name}]", -min(res), 0.0, tol, "residual >= -10 tol_primal",
            {"tau": taus[worst]},
            {"residuals": res, "taus": taus, "comparison_lipschitz": lip,
             "admissible": lip <= sol.L * (1 + 1e-9)}))
    return _report_all("variational_inequality", reports, "all comparison maps pass")


# gradient bound and principles

def check_gradient_bound(sol, Q=None, u_o=None, rel_slack=0.05):
    """``max |Du| <= max{Q, ||Du_o||}`` up to a relative discretization slack."""
    u_o = sol.u_o if u_o is None else u_o
    if Q is None:
        Q = u_o.Q
    if Q is None:
        raise MissingBscCertificate("the gradient bound needs a bounded-slope constant")
    norms = np.linalg.norm(sol.element_gradients(), axis=-1)
    step, elem = np.unravel_index(int(np.argmax(norms)), norms.shape)
    bound = max(float(Q), u_o.lipschitz)
    return PropertyReport("gradient_bound", float(norms.max()), bound, rel_slack * bound,
                          f"{rel_slack:.0%} relative", {"step": int(step), "element": int(elem)},
                          {"Q": float(Q), "datum_lipschitz": u_o.lipschitz})


def _pair(sol_a, b):
    if hasattr(b, "slices"):
        if b.mesh is not sol_a.mesh and (b.mesh.n_nodes != sol_a.mesh.n_nodes or not np.allclose(
                b.mesh.nodes, sol_a.mesh.nodes)):
            raise MeshMismatch("solutions live on different meshes")
        if b.slices.shape != sol_a.slices.shape:
            raise MeshMismatch("solutions have different numbers of slices")
        return b.slices, max(sol_a.tol, b.tol)
    arr = np.asarray(b, dtype=float)
    if arr.shape[-1] != sol_a.mesh.n_nodes:
        raise MeshMismatch("comparison values do not match the mesh")
    return np.broadcast_to(arr, sol_a.slices.shape), sol_a.tol


def _parabolic_boundary(diff, mesh):
    return np.concatenate([diff[0], diff[:, mesh.boundary_nodes].ravel()])


def check_comparison(sol_a, sol_b):
    """If ``a <= b`` on the parabolic boundary then ``a <= b`` everywhere.

    ``sol_b`` may be a solution, or nodal values of a stationary comparison
    (for instance an affine support).  Unordered data pass vacuously.
    """
    b, tol = _pair(sol_a, sol_b)
    diff = sol_a.slices - b
    pb = _parabolic_boundary(diff, sol_a.mesh)
    slack = 10 * tol
    if pb.max() <= slack:
        sign, order = 1.0, "a<=b"
    elif pb.min() >= -slack:
        sign, order = -1.0, "b<=a"
    else:
        return PropertyReport("comparison", 0.0, 0.0, slack, "vacuous: data not ordered",
                              None, {"order": "none"})
    d = sign * diff
    step, node = np.unravel_index(int(np.argmax(d)), d.shape)
    return PropertyReport("comparison", float(max(d.max(), 0.0)), 0.0, slack,
                          "ordering within 10 tol_primal", {"step": int(step), "node": int(node)},
                          {"order": order, "min_gap": float(-d.max())})


def check_max_principle(sol_a, sol_b):
    """``sup (u_a - u_b)`` over the cylinder equals its sup on the parabolic boundary."""
    b, tol = _pair(sol_a, sol_b)
    diff = sol_a.slices - b
    pb = float(_parabolic_boundary(diff, sol_a.mesh).max())
    step, node = np.unravel_index(int(np.argmax(diff)), diff.shape)
    return PropertyReport("max_principle", float(diff.max()), pb, 10 * tol,
                          "interior sup <= boundary sup + 10 tol_primal",
                          {"step": int(step), "node": int(node)})


def check_initial_attainment(sol, f=None, u_o=None):
    """``1/2 ||u(tau) - u_o||^2 <= 2|Omega| int_0^tau g_M`` at dyadic ``tau``.

    ``M = max{||Du||, ||Du_o||}``; the squared norm is used on the left.
    """
    f = sol.integrand if f is None else f
    u_o = sol.u_o if u_o is None else u_o
    mesh = sol.mesh
    M_lvl = max(float(np.linalg.norm(sol.element_gradients(), axis=-1).max()), u_o.lipschitz)
    g = dominating_bound(f, max(M_lvl, 1e-12), dim=mesh.dim)
    reports = []
    for tau in dyadic_taus(sol):
        k = int(round(tau / sol.h))
        lhs = 0.5 * float(np.sum(mesh.lumped_mass * (sol.slices[k] - u_o.values) ** 2))
        rhs = 2 * mesh.total_measure * g.l1_norm(0.0, tau)
        reports.append(PropertyReport(f"tau={tau:.6g}", lhs, rhs, 10 * sol.tol,
                                      "squared L2 norm"))
    out = _report_all("initial_attainment", reports, "every dyadic tau")
    out.details["level_M"] = M_lvl
    return out


# weak formulation

def _time_bumps(T, count=2):
    """``sin^2(k pi t / T)`` and derivatives, vanishing to first order at ``0`` and ``T``."""
    out = []
    for k in range(1, count + 1):
        w = k * np.pi / T
        out.append((lambda t, w=w: np.sin(w * t) ** 2,
                    lambda t, w=w: 2 * w * np.sin(w * t) * np.cos(w * t)))
    return out


def _default_test_nodes(mesh, count=12):
    interior = mesh.interior_nodes
    if len(interior) <= count:
        return interior
    pick = np.linspace(0, len(interior) - 1, count).round().astype(int)
    return interior[pick]


def weak_residual(sol, f=None, test_nodes=None, time_bumps=None, slices=None, C=1.0,
                  quad=4):
    """Weak-form residual against ``phi = psi_j(x) chi(t)``.

    ``psi_j`` are interior nodal hats and ``chi`` smooth bumps vanishing at
    ``0`` and ``T``.  The residual is ``|iint u~ d_t phi - iint D_xi f(t, Du) . D phi|``
    (consistent mass in space, Gauss quadrature in time, ``f`` the true
    integrand at the quadrature times), normalized by
    ``||d_t phi||_1 + ||D phi||_1``.  The bound is ``C (h + mesh_h + tol)``.
    """
    f = sol.base_integrand if f is None else f
    if not f.has_grad:
        raise MissingGradient("the weak residual needs D_xi f")
    mesh = sol.mesh
    U = sol.slices if slices is None else np.asarray(slices, dtype=float)
    nodes = _default_test_nodes(mesh) if test_nodes is None else np.asarray(test_nodes)
    bumps = _time_bumps(sol.T) if time_bumps is None else time_bumps
    h = sol.h
    Mc = mesh.consistent_mass
    MU = (Mc @ U.T).T[:, nodes]                      # (m+1, J)
    grads = mesh.element_gradients(U)                # (m+1, E, d)
    meas = mesh.element_measures
    x, w = _gauss(quad)
    # per-node hat gradients: (E, d) restricted to the patch
    G = mesh.gradient_matrix
    E, d = mesh.n_elements, mesh.dim
    hat = np.asarray(G[:, nodes].todense()).reshape(E, d, len(nodes))
    hat_l1 = np.einsum("e,ej->j", meas, np.linalg.norm(hat, axis=1))
    hat_mass = np.asarray(Mc[nodes].sum(axis=1)).ravel()
    worst = 0.0
    loc = None
    for bi, (chi, dchi) in enumerate(bumps):
        A = np.zeros(len(nodes))
        Bf = np.zeros(len(nodes))
        n_dchi = n_chi = 0.0
        for i in range(1, sol.m + 1):
            lo = (i - 1) * h
            for xj, wj in zip(x, w):
                t = lo + 0.5 * h * (xj + 1)
                wt = 0.5 * h * wj
                lam = (t - lo) / h
                A += wt * dchi(t) * ((1 - lam) * MU[i - 1] + lam * MU[i])
                flux = f.grad(t, grads[i])           # (E, d)
                Bf += wt * chi(t) * np.einsum("e,ed,edj->j", meas, flux, hat)
                n_dchi += wt * abs(dchi(t))
                n_chi += wt * abs(chi(t))
        norm = n_dchi * hat_mass + n_chi * hat_l1
        res = np.abs(A - Bf) / norm
        j = int(np.argmax(res))
        if res[j] > worst:
            worst, loc = float(res[j]), {"node": int(nodes[j]), "bump": bi}
    scale = h + mesh.max_element_diameter + sol.tol
    return PropertyReport("weak_residual", worst, C * scale, 0.0,
                          "C (h + mesh_h + tol_primal)", loc,
                          {"fitted_C": worst / scale, "C": C})


# time regularity

def holder_seminorm(sol, slices=None):
    """``sup_x |u(x,t1) - u(x,t2)| / |t1 - t2|^{1/2}`` over slice pairs."""
    U = sol.slices if slices is None else slices
    t = sol.times
    best = 0.0
    for i in range(len(t) - 1):
        num = np.abs(U[i + 1:] - U[i]).max(axis=1)
        best = max(best, float(np.max(num / np.sqrt(t[i + 1:] - t[i]))))
    return best


def campanato_ratios(sol, radii=None, centers_per_axis=5, time_centers=4):
    """``mean_{Q_r} |u - (u)_{Q_r}|^2 / r^2`` on parabolic cylinders.

    ``Q_r = (B_r(x_o) ∩ Omega) x ((t_o - r^2, t_o] ∩ (0, T])``; spatial
    averages use lumped nodal weights, time averages the piecewise-constant
    interpolant.  Returns a list of ``(r, ratio, mean |Du|^2)``.
    """
    mesh = sol.mesh
    diam = mesh.domain.diameter if mesh.domain is not None else float(
        np.ptp(mesh.nodes, axis=0).max())
    radii = [diam * 2.0 ** -k for k in range(1, 5)] if radii is None else radii
    lo, hi = mesh.nodes.min(axis=0), mesh.nodes.max(axis=0)
    axes = [np.linspace(a, b, centers_per_axis) for a, b in zip(lo, hi)]
    centers = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, mesh.dim)
    Mw = mesh.lumped_mass
    grad2 = np.sum(mesh.element_gradients(sol.slices) ** 2, axis=-1)   # (m+1, E)
    emeas = mesh.element_measures
    ecent = mesh.nodes[mesh.elements].mean(axis=1)
    h = sol.h
    out = []
    for r in radii:
        t_centers = np.linspace(min(r * r, sol.T), sol.T, time_centers)
        for c in centers:
            inb = np.linalg.norm(mesh.nodes - c, axis=1) <= r
            einb = np.linalg.norm(ecent - c, axis=1) <= r
            if inb.sum() < 2 or not einb.any():
                continue
            for t0 in t_centers:
                a, b = max(t0 - r * r, 0.0), t0
                # overlap of each step ((i-1)h, ih] with (a, b]
                lo_i = np.arange(sol.m) * h
                ov = np.clip(np.minimum(lo_i + h, b) - np.maximum(lo_i, a), 0.0, None)
                if ov.sum() <= 0:
                    continue
                wt = ov[:, None] * Mw[None, inb]
                vals = sol.slices[1:, inb]
                mean = np.sum(wt * vals) / wt.sum()
                osc = np.sum(wt * (vals - mean) ** 2) / wt.sum()
                we = ov[:, None] * emeas[None, einb]
                mdu = np.sum(we * grad2[1:, einb]) / we.sum()
                out.append((float(r), float(osc / r ** 2), float(mdu)))
    return out


def check_time_regularity(sol, f=None, reference=None, stability=0.2, campanato_cap=None):
    """Campanato ratios and the Hölder-1/2 time seminorm.

    (a) ``ratio <= C (mean |Du|^2 + sup_{B_M} |D_xi f|^2)``; the smallest
    admissible ``C`` is fitted and must not exceed ``campanato_cap``
    (default ``4/pi^2 + 1``: the convex-domain Poincaré constant plus one
    unit for the time oscillation).
    (b) the seminorm must agree with that of ``reference`` (a run at a
    different ``m``) within ``stability``.
    """
    f = sol.base_integrand if f is None else f
    if not f.has_grad:
        raise MissingGradient("time regularity needs D_xi f")
    cap = 4 / np.pi ** 2 + 1.0 if campanato_cap is None else campanato_cap
    M_lvl = float(np.linalg.norm(sol.element_gradients(), axis=-1).max())
    grid = polar_grid(M_lvl, sol.mesh.dim)
    sup_df2 = 0.0
    for t in np.linspace(0.0, sol.T, 9):
        sup_df2 = max(sup_df2, float(np.max(np.sum(f.grad(t, grid) ** 2, axis=-1))))
    ratios = campanato_ratios(sol)
    fitted = max((r / (g + sup_df2) for _, r, g in ratios if g + sup_df2 > 0), default=0.0)
    camp = PropertyReport("campanato", fitted, cap, 0.0, "fitted constant <= cap", None,
                          {"n_cylinders": len(ratios), "sup_Dxi_f_sq": sup_df2,
                           "max_ratio_by_radius": _max_by_radius(ratios)})
    semi = holder_seminorm(sol)
    reports = [camp]
    details = {"seminorm": semi}
    if reference is not None:
        ref = holder_seminorm(reference)
        rel = abs(semi - ref) / max(ref, 1e-300)
        reports.append(PropertyReport("holder_stability", rel, stability, 0.0,
                                      "relative change under refinement", None,
                                      {"seminorm": semi, "reference_seminorm": ref,
                                       "m": sol.m, "reference_m": reference.m}))
    out = _report_all("time_regularity", reports, "campanato and Hölder stability")
    out.details.update(details)
    return out


def _max_by_radius(ratios):
    by = {}
    for r, val, _ in ratios:
        by[r] = max(by.get(r, 0.0), val)
    return {f"{r:.6g}": v for r, v in sorted(by.items())}


def _bump1(s):
    out = np.zeros_like(s)
    m = np.abs(s) < 1
    out[m] = np.exp(-1.0 / (1.0 - s[m] ** 2))
    return out


def interior_bump(domain, center, r, samples=65):
    """A tensor bump supported in a ball inside ``B_r(center) ∩ Omega``.

    Returns ``(eta, inner_center, inner_radius)``; ``eta`` is unnormalized.
    """
    center = np.asarray(center, dtype=float)
    d = domain.dimension
    axes = [np.linspace(c - r, c + r, samples) for c in center]
    cand = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    inside = domain.contains(cand) & (np.linalg.norm(cand - center, axis=1) <= r)
    cand = cand[inside]
    depth = np.minimum(r - np.linalg.norm(cand - center, axis=1),
                       domain.distance_to_boundary(cand))
    k = int(np.argmax(depth))
    c, rho = cand[k], float(depth[k])
    half = rho / np.sqrt(d)

    def eta(x):
        x = np.atleast_2d(x)
        return np.prod(_bump1((x - c) / half), axis=1)
    return eta, c, rho


def weighted_poincare_check(domain, v, grad_v, center, r, n=401):
    """Weighted Poincaré inequality on ``B_r(center) ∩ Omega`` by quadrature.

    Checks ``mean |v - (v)_eta|^2 <= c r^2 mean |Dv|^2`` with
    ``c = 4 (1 + ||eta||_inf^2) / pi^2`` and ``eta`` normalized to unit mean;
    this follows from the Payne-Weinberger constant ``diam^2 / pi^2`` on the
    convex set ``B_r ∩ Omega`` of diameter at most ``2r``.
    """
    center = np.asarray(center, dtype=float)
    d = domain.dimension
    axes = [np.linspace(c - r, c + r, n) for c in center]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    mask = domain.contains(pts) & (np.linalg.norm(pts - center, axis=1) <= r)
    pts = pts[mask]
    eta, ic, rho = interior_bump(domain, center, r)
    e = eta(pts)
    e = e / e.mean()
    vals = np.asarray(v(pts), dtype=float)
    v_eta = float(np.mean(vals * e))
    lhs = float(np.mean((vals - v_eta) ** 2))
    dv2 = float(np.mean(np.sum(np.atleast_2d(grad_v(pts)) ** 2, axis=-1)))
    c = 4 * (1 + float(e.max()) ** 2) / np.pi ** 2
    rhs = c * r * r * dv2
    return PropertyReport("weighted_poincare", lhs, rhs, 0.0,
                          "c = 4 (1 + |eta|_inf^2) / pi^2", None,
                          {"v_eta": v_eta, "inner_center": ic.tolist(), "inner_radius": rho,
                           "eta_sup": float(e.max()), "samples": int(len(pts)),
                           "unweighted_constant_r2_over_pi2": r * r / np.pi ** 2 * dv2})
