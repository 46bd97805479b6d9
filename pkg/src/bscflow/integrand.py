"""Time-dependent convex integrands ``f(t, xi)``.

All builtin families are radial, ``f(t, xi) = phi(t, |xi|)`` with ``phi``
convex and non-decreasing in ``r``; the per-element proximal step of the
solver exploits this.  Generic (non-radial) integrands can be built directly
from ``value``/``grad`` callables.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import BadParams, QuadratureBudgetExceeded, UnknownFamily
from .expr import Expression, ExpressionError

__all__ = [
    "CONSTANT", "W11", "L1ONLY",
    "RadialProfile", "FrozenIntegrand", "TimeDependentIntegrand",
    "SteklovIntegrand", "DominatingBound",
    "make_builtin", "from_descriptor", "steklov", "steklov_convergence_gap",
    "dominating_bound", "simplex_vertices", "polar_grid", "BUILTIN_FAMILIES",
]

CONSTANT = "Constant"
W11 = "W11"
L1ONLY = "L1Only"
_REGULARITIES = (CONSTANT, W11, L1ONLY)


def _norm(xi):
    return np.linalg.norm(np.asarray(xi, dtype=float), axis=-1)


@dataclass(frozen=True)
class RadialProfile:
    """``phi(t, r)`` with its first two ``r``-derivatives."""

    phi: object
    dphi: object
    d2phi: object


@dataclass(frozen=True)
class FrozenIntegrand:
    """The slice ``xi -> f(t, xi)`` at a fixed time."""

    t: float
    value: object
    grad: object = None
    phi: object = None
    dphi: object = None
    d2phi: object = None

    @property
    def is_radial(self):
        return self.phi is not None


class TimeDependentIntegrand:
    """A convex-in-``xi`` integrand with a declared time regularity.

    Parameters
    ----------
    name : str
    value : callable ``(t, xi) -> array``
        ``xi`` has shape ``(..., n)``; the result has shape ``(...)``.
    grad : callable ``(t, xi) -> array``, optional
        ``xi``-gradient with the shape of ``xi``.
    dtime : callable ``(t, xi) -> array``, optional
        Time derivative; required for ``W11``.
    regularity : {"Constant", "W11", "L1Only"}
    horizon : float
        ``T``; ``np.inf`` when unbounded.
    radial : RadialProfile, optional
    breakpoints : sequence of float
        Declared time discontinuities.
    dtime_bound : callable ``(t, L) -> float``, optional
        Dominant of ``|dtime|`` on ``B_L``.
    """

    def __init__(self, name, value, grad=None, dtime=None, regularity=CONSTANT,
                 horizon=np.inf, radial=None, breakpoints=(), dim=None,
                 dtime_bound=None, descriptor=None):
        if regularity not in _REGULARITIES:
            raise BadParams(f"unknown time regularity {regularity!r}")
        if regularity == W11 and dtime is None:
            raise BadParams("W11 integrands need a time derivative")
        self.name = name
        self._value = value
        self._grad = grad
        self._dtime = dtime
        self.regularity = regularity
        self.horizon = float(horizon)
        self.radial = radial
        self.breakpoints = tuple(float(b) for b in breakpoints)
        self.dim = dim
        self._dtime_bound = dtime_bound
        self.descriptor = descriptor

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r}, regularity={self.regularity})"

    @property
    def has_grad(self):
        return self._grad is not None

    @property
    def is_radial(self):
        return self.radial is not None

    def value(self, t, xi):
        return np.asarray(self._value(float(t), np.asarray(xi, dtype=float)), dtype=float)

    def grad(self, t, xi):
        if self._grad is None:
            raise NotImplementedError(f"{self.name} has no xi-gradient")
        return np.asarray(self._grad(float(t), np.asarray(xi, dtype=float)), dtype=float)

    def dtime(self, t, xi):
        if self.regularity == CONSTANT:
            return np.zeros(np.shape(xi)[:-1])
        if self._dtime is None:
            raise NotImplementedError(f"{self.name} has no time derivative")
        return np.asarray(self._dtime(float(t), np.asarray(xi, dtype=float)), dtype=float)

    __call__ = value

    def frozen(self, t):
        t = float(t)
        grad = (lambda xi: self.grad(t, xi)) if self.has_grad else None
        if self.is_radial:
            rp = self.radial
            return FrozenIntegrand(t, lambda xi: self.value(t, xi), grad,
                                   lambda r: rp.phi(t, r), lambda r: rp.dphi(t, r),
                                   lambda r: rp.d2phi(t, r))
        return FrozenIntegrand(t, lambda xi: self.value(t, xi), grad)

    def sup_abs_on_ball(self, t, L, dim=None):
        """``sup_{|xi| <= L} |f(t, xi)|``; exact for radial integrands."""
        if self.is_radial:
            r = np.array([0.0, float(L)])
            return float(np.max(np.abs(self.radial.phi(float(t), r))))
        n = dim or self.dim or 2
        return float(np.max(np.abs(self.value(t, polar_grid(L, n)))))

    def dtime_bound(self, t, L, dim=None):
        """Dominant of ``|d_t f(t, .)|`` on ``B_L``.

        Exact for families that declare one; otherwise a polar-grid sup.
        """
        if self.regularity == CONSTANT:
            return 0.0
        if self.regularity == L1ONLY:
            raise NotImplementedError("L1Only integrands have no time-derivative bound")
        if self._dtime_bound is not None:
            return float(self._dtime_bound(float(t), float(L)))
        n = dim or self.dim or 2
        return float(np.max(np.abs(self.dtime(t, polar_grid(L, n)))))


def polar_grid(L, dim, n_dirs=64, n_radii=32):
    """Points of ``B_L`` on a polar grid including the origin and the sphere."""
    radii = np.linspace(0.0, float(L), n_radii)
    if dim == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        th = 2 * np.pi * np.arange(n_dirs) / n_dirs
        dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
    return (radii[:, None, None] * dirs[None, :, :]).reshape(-1, dim)


# radial builtins

def _radial_integrand(name, phi, dphi, d2phi, scale, descriptor, horizon=np.inf):
    c = float(scale)

    def value(t, xi):
        return c * phi(_norm(xi))

    def grad(t, xi):
        r = _norm(xi)
        safe = np.where(r > 0, r, 1.0)
        fac = np.where(r > 0, c * dphi(r) / safe, 0.0)
        return fac[..., None] * xi

    prof = RadialProfile(lambda t, r: c * phi(np.asarray(r, dtype=float)),
                         lambda t, r: c * dphi(np.asarray(r, dtype=float)),
                         lambda t, r: c * d2phi(np.asarray(r, dtype=float)))
    return TimeDependentIntegrand(name, value, grad, None, CONSTANT, horizon, prof,
                                  descriptor=descriptor)


_RADIAL = {
    "area": (lambda r: np.sqrt(1 + r * r),
             lambda r: r / np.sqrt(1 + r * r),
             lambda r: (1 + r * r) ** -1.5),
    "exp": (lambda r: np.exp(r * r),
            lambda r: 2 * r * np.exp(r * r),
            lambda r: (2 + 4 * r * r) * np.exp(r * r)),
    "orlicz": (lambda r: r * np.log1p(r),
               lambda r: np.log1p(r) + r / (1 + r),
               lambda r: 1 / (1 + r) + 1 / (1 + r) ** 2),
    "quadratic": (lambda r: 0.5 * r * r,
                  lambda r: r,
                  lambda r: np.ones_like(r)),
}

BUILTIN_FAMILIES = tuple(_RADIAL) + ("switched", "weighted_sum")


def _positive(params, key, default):
    v = params.get(key, default)
    try:
        v = float(v)
    except (TypeError, ValueError):
        raise BadParams(f"{key} must be a number") from None
    if not np.isfinite(v) or v <= 0:
        raise BadParams(f"{key} must be positive, got {v}")
    return v


def _time_function(spec, what):
    if callable(spec):
        return spec
    if isinstance(spec, (int, float)):
        c = float(spec)
        return lambda t: np.full(np.shape(t), c)
    try:
        e = Expression(str(spec), variables=("t",))
    except ExpressionError as exc:
        raise BadParams(f"{what}: {exc}") from None
    return lambda t: np.broadcast_to(e.of_time(t), np.shape(t)).astype(float)


def make_builtin(name, params=None):
    """Construct one of the builtin integrand families.

    Parameters
    ----------
    name : {"area", "exp", "orlicz", "quadratic", "switched", "weighted_sum"}
    params : dict
        Radial families accept ``scale`` (positive multiplier; for
        ``quadratic`` also ``c``), giving ``scale * phi(|xi|)``.
        ``switched`` needs ``t_o``, ``T``, ``f1`` and ``f2`` (descriptors or
        integrands) and equals ``f1`` on ``[0, t_o]`` and ``f2`` after.
        ``weighted_sum`` needs ``terms``: a list of ``{"weight": w,
        "integrand": g}`` with optional ``"dweight"``; weights are numbers,
        callables of ``t`` or expressions in ``t``.

    Examples
    --------
    >>> f = make_builtin("area")
    >>> float(f.value(0.0, [0.0, 0.0]))
    1.0
    """
    params = dict(params or {})
    descriptor = {"family": name, **{k: v for k, v in params.items() if not callable(v)}}
    if name in _RADIAL:
        scale = _positive(params, "scale", 1.0)
        if name == "quadratic":
            scale *= _positive(params, "c", 1.0)
        horizon = params.get("T", np.inf)
        f = _radial_integrand(name, *_RADIAL[name], scale, descriptor, horizon)
        return f
    if name == "switched":
        return _switched(params, descriptor)
    if name == "weighted_sum":
        return _weighted_sum(params, descriptor)
    raise UnknownFamily(name)


def from_descriptor(desc):
    """Build an integrand from a JSON-style descriptor ``{"family": ..., ...}``."""
    if isinstance(desc, TimeDependentIntegrand):
        return desc
    if not isinstance(desc, dict) or "family" not in desc:
        raise BadParams("integrand descriptor needs a 'family' field")
    params = {k: v for k, v in desc.items() if k != "family"}
    return make_builtin(desc["family"], params)


def _switched(params, descriptor):
    for key in ("t_o", "T", "f1", "f2"):
        if key not in params:
            raise BadParams(f"switched integrand needs {key!r}")
    t_o = float(params["t_o"])
    T = float(params["T"])
    if not 0 < t_o < T:
        raise BadParams(f"need 0 < t_o < T, got t_o={t_o}, T={T}")
    f1 = from_descriptor(params["f1"])
    f2 = from_descriptor(params["f2"])
    for g in (f1, f2):
        if g.regularity != CONSTANT:
            raise BadParams("switched components must be constant in time")

    def pick(t):
        return f1 if t <= t_o else f2

    def value(t, xi):
        return pick(t).value(t, xi)

    grad = None
    if f1.has_grad and f2.has_grad:
        def grad(t, xi):
            return pick(t).grad(t, xi)

    radial = None
    if f1.is_radial and f2.is_radial:
        radial = RadialProfile(lambda t, r: pick(t).radial.phi(t, r),
                               lambda t, r: pick(t).radial.dphi(t, r),
                               lambda t, r: pick(t).radial.d2phi(t, r))
    f = TimeDependentIntegrand("switched", value, grad, None, L1ONLY, T, radial,
                               breakpoints=(t_o,), descriptor=descriptor)
    f.components = (f1, f2)
    f.t_o = t_o
    return f


def _weighted_sum(params, descriptor):
    terms = params.get("terms")
    if not terms:
        raise BadParams("weighted_sum needs a non-empty 'terms' list")
    weights, dweights, comps = [], [], []
    for i, term in enumerate(terms):
        if "weight" not in term or "integrand" not in term:
            raise BadParams(f"term {i} needs 'weight' and 'integrand'")
        comps.append(from_descriptor(term["integrand"]))
        weights.append(_time_function(term["weight"], f"weight {i}"))
        dweights.append(_time_function(term["dweight"], f"dweight {i}")
                        if "dweight" in term else None)
    T = float(params.get("T", np.inf))
    probe = np.linspace(0.0, T if np.isfinite(T) else 1.0, 257)
    for i, w in enumerate(weights):
        vals = np.asarray(w(probe), dtype=float)
        if np.any(vals < 0) or not np.all(np.isfinite(vals)):
            raise BadParams(f"weight {i} must be finite and non-negative on [0, T]")
    if any(c.regularity != CONSTANT for c in comps):
        raise BadParams("weighted_sum components must be constant in time")
    regularity = W11 if all(d is not None for d in dweights) else L1ONLY

    def value(t, xi):
        return sum(float(w(t)) * c.value(t, xi) for w, c in zip(weights, comps))

    grad = None
    if all(c.has_grad for c in comps):
        def grad(t, xi):
            return sum(float(w(t)) * c.grad(t, xi) for w, c in zip(weights, comps))

    dtime = dtime_bound = None
    if regularity == W11:
        def dtime(t, xi):
            return sum(float(d(t)) * c.value(t, xi) for d, c in zip(dweights, comps))

        def dtime_bound(t, L):
            return sum(abs(float(d(t))) * c.sup_abs_on_ball(t, L)
                       for d, c in zip(dweights, comps))

    radial = None
    if all(c.is_radial for c in comps):
        def mk(attr):
            return lambda t, r: sum(float(w(t)) * getattr(c.radial, attr)(t, r)
                                    for w, c in zip(weights, comps))
        radial = RadialProfile(mk("phi"), mk("dphi"), mk("d2phi"))
    f = TimeDependentIntegrand("weighted_sum", value, grad, dtime, regularity, T, radial,
                               dim=None, dtime_bound=dtime_bound, descriptor=descriptor)
    f.components = tuple(comps)
    return f


# Steklov averages

def _gauss(q):
    x, w = np.polynomial.legendre.leggauss(q)
    return x, w


def _panels(a, b, cuts):
    pts = [a] + sorted(c for c in cuts if a < c < b) + [b]
    return [(lo, hi) for lo, hi in zip(pts[:-1], pts[1:]) if hi > lo]


class SteklovIntegrand(TimeDependentIntegrand):
    """Forward interval average ``(1/eps) int_t^{t+eps} f(s, xi) ds``.

    The base integrand is extended by zero beyond its horizon ``T``.
    Quadrature is composite Gauss-Legendre split at the base's declared
    breakpoints and at ``T``, so jumps are integrated exactly.
    Evaluations at ``t > T - eps`` see the zero extension; they are counted
    in ``tail_evaluations``.
    """

    def __init__(self, base, epsilon, quadrature=16, horizon=None):
        eps = float(epsilon)
        if not eps > 0:
            raise BadParams("epsilon must be positive")
        self.base = base
        self.epsilon = eps
        self.quadrature = int(quadrature)
        if self.quadrature < 1:
            raise BadParams("quadrature must be at least 1")
        T = base.horizon if horizon is None else float(horizon)
        self.tail_evaluations = 0
        self._x, self._w = _gauss(self.quadrature)
        radial = None
        if base.is_radial:
            radial = RadialProfile(self._avg_radial("phi"), self._avg_radial("dphi"),
                                   self._avg_radial("d2phi"))
        grad = self._grad_avg if base.has_grad else None
        breaks = sorted({b for b in base.breakpoints} | {b - eps for b in base.breakpoints}
                        | ({T - eps} if np.isfinite(T) else set()))
        super().__init__(f"steklov({base.name})", self._value_avg, grad, self._dt,
                         W11, T, radial, breakpoints=[b for b in breaks if b > 0],
                         dim=base.dim, dtime_bound=self._dt_bound,
                         descriptor={"steklov": base.descriptor, "epsilon": eps})

    def nodes(self, t):
        """Quadrature nodes and weights (already divided by ``eps``) on ``[t, t+eps] ∩ [0, T]``."""
        a, b = float(t), float(t) + self.epsilon
        if b > self.horizon:
            self.tail_evaluations += 1
            b = self.horizon
        s, w = [], []
        for lo, hi in _panels(a, b, self.base.breakpoints):
            half = 0.5 * (hi - lo)
            s.append(lo + half * (self._x + 1))
            w.append(half * self._w / self.epsilon)
        if not s:
            return np.zeros(0), np.zeros(0)
        return np.concatenate(s), np.concatenate(w)

    def _value_avg(self, t, xi):
        s, w = self.nodes(t)
        out = np.zeros(np.shape(xi)[:-1])
        for sj, wj in zip(s, w):
            out = out + wj * self.base.value(sj, xi)
        return out

    def _grad_avg(self, t, xi):
        s, w = self.nodes(t)
        out = np.zeros(np.shape(xi))
        for sj, wj in zip(s, w):
            out = out + wj * self.base.grad(sj, xi)
        return out

    def _avg_radial(self, attr):
        def f(t, r):
            s, w = self.nodes(t)
            fn = getattr(self.base.radial, attr)
            out = np.zeros(np.shape(r))
            for sj, wj in zip(s, w):
                out = out + wj * fn(sj, r)
            return out
        return f

    def _base_or_zero(self, t, xi):
        if t > self.horizon:
            return np.zeros(np.shape(xi)[:-1])
        return self.base.value(t, xi)

    def _dt(self, t, xi):
        return (self._base_or_zero(t + self.epsilon, xi) - self._base_or_zero(t, xi)) / self.epsilon

    def _base_bound(self, t, L):
        if t > self.horizon:
            return 0.0
        return dominating_bound(self.base, L, dim=self.dim).g(t)

    def _dt_bound(self, t, L):
        return (self._base_bound(t + self.epsilon, L) + self._base_bound(t, L)) / self.epsilon

    def frozen(self, t):
        # freeze the quadrature nodes once per slice
        t = float(t)
        s, w = self.nodes(t)
        base = self.base

        def value(xi):
            out = np.zeros(np.shape(xi)[:-1])
            for sj, wj in zip(s, w):
                out = out + wj * base.value(sj, xi)
            return out

        grad = None
        if base.has_grad:
            def grad(xi):
                out = np.zeros(np.shape(xi))
                for sj, wj in zip(s, w):
                    out = out + wj * base.grad(sj, xi)
                return out

        if not base.is_radial:
            return FrozenIntegrand(t, value, grad)

        def mk(attr):
            fn = getattr(base.radial, attr)

            def g(r):
                out = np.zeros(np.shape(r))
                for sj, wj in zip(s, w):
                    out = out + wj * fn(sj, r)
                return out
            return g
        return FrozenIntegrand(t, value, grad, mk("phi"), mk("dphi"), mk("d2phi"))


def steklov(f, epsilon, quadrature=16, horizon=None):
    """Steklov average of ``f`` with step ``epsilon`` (zero extension past ``T``)."""
    return SteklovIntegrand(f, epsilon, quadrature, horizon)


def steklov_convergence_gap(f, epsilon, L, quadrature=16, include_tail=False,
                            dim=None, horizon=None, budget=200_000):
    """``int sup_{|xi|<=L} |f_eps(t, xi) - f(t, xi)| dt``.

    The sup is taken on a polar grid (64 directions by 32 radii), a lower
    bound for the true sup.  By default the integral runs over
    ``[0, T - eps]``; the tail ``(T - eps, T]`` where the zero extension
    enters is included only with ``include_tail=True``.

    Raises
    ------
    QuadratureBudgetExceeded
        If the number of outer panels times quadrature nodes exceeds ``budget``.
    """
    fe = steklov(f, epsilon, quadrature, horizon)
    T = fe.horizon
    if not np.isfinite(T):
        raise BadParams("the convergence gap needs a finite horizon")
    n = dim or f.dim or 1
    grid = polar_grid(L, n)
    end = T if include_tail else T - fe.epsilon
    if end <= 0:
        return 0.0
    cuts = set(f.breakpoints) | {b - fe.epsilon for b in f.breakpoints} | {T - fe.epsilon}
    panels = _panels(0.0, end, cuts)
    if len(panels) * quadrature > budget:
        raise QuadratureBudgetExceeded(
            f"{len(panels)} panels x {quadrature} nodes exceeds budget {budget}")
    x, w = _gauss(quadrature)
    total = 0.0
    for lo, hi in panels:
        half = 0.5 * (hi - lo)
        for xj, wj in zip(x, w):
            t = lo + half * (xj + 1)
            total += half * wj * float(np.max(np.abs(fe.value(t, grid) - f.value(t, grid))))
    return total


# dominating bounds

def simplex_vertices(L, dim):
    """Vertices of a regular simplex with inradius ``L`` centred at the origin."""
    L = float(L)
    if dim == 1:
        return np.array([[-L], [L]])
    if dim == 2:
        ang = np.pi / 2 + 2 * np.pi * np.arange(3) / 3
        return 2 * L * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    raise BadParams(f"unsupported dimension {dim}")


@dataclass(frozen=True)
class DominatingBound:
    """``g_L(t) >= sup_{|xi| <= L} |f(t, xi)|`` from a simplex-vertex certificate."""

    level: float
    vertices: np.ndarray
    integrand: TimeDependentIntegrand = field(repr=False)
    dim: int = 2

    def upper(self, t, level=None):
        v = self.vertices if level is None else simplex_vertices(level, self.dim)
        return float(np.sum(np.abs(self.integrand.value(t, v))))

    def lower(self, t):
        """A lower bound for ``min_{|xi| <= L} f(t, xi)``."""
        L = self.level
        f = self.integrand
        zero = np.zeros((1, self.dim))
        f0 = float(f.value(t, zero)[0])
        bound = (2 * L + 1) * f0 - 2 * L * self.upper(t, L + 1)
        if f.has_grad:
            g0 = float(np.linalg.norm(f.grad(t, zero)[0]))
            bound = max(bound, f0 - L * g0)
        return bound

    def g(self, t):
        return max(self.upper(t), -self.lower(t), 0.0)

    __call__ = g

    def l1_norm(self, a, b, quadrature=16):
        """``int_a^b g_L(t) dt`` with panels split at the integrand's breakpoints."""
        if b <= a:
            return 0.0
        x, w = _gauss(quadrature)
        total = 0.0
        for lo, hi in _panels(a, b, self.integrand.breakpoints):
            half = 0.5 * (hi - lo)
            total += half * sum(wj * self.g(lo + half * (xj + 1)) for xj, wj in zip(x, w))
        return total


def dominating_bound(f, L, dim=None):
    """Certified dominant ``g_L`` of ``|f(t, .)|`` on the ball ``B_L``.

    The upper part sums ``|f|`` over the vertices of a simplex containing
    ``B_L``; by convexity the max over the simplex is attained at a vertex.
    The lower part is the larger of a convexity estimate against the ball
    ``B_{L+1}`` and, when a gradient is available, the supporting plane at
    the origin.
    """
    L = float(L)
    if not L > 0:
        raise BadParams("L must be positive")
    n = dim or f.dim or 2
    return DominatingBound(L, simplex_vertices(L, n), f, n)
