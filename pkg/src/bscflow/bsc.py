"""Bounded slope condition: verification, minimal constant and affine supports.

For a touch point ``x_o`` on the boundary the lower support ``w(x) = a + xi.x``
must satisfy ``w <= U`` at every boundary sample and ``w(x_o) = U(x_o)``.
Eliminating ``a`` leaves the polyhedron

    { xi : xi . (x_k - x_o) <= U(x_k) - U(x_o)  for all samples k }

(with the inequality reversed for the upper support), and the smallest
admissible slope is the Euclidean distance from the origin to that
polyhedron.  It is computed exactly as a least-distance program by an
incremental method that is robust to the equality constraints produced
when the datum is affine along an edge.
"""
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import CertificationFailed, EmptyTrace

__all__ = ["BoundaryTrace", "AffineSupportPair", "BscReport", "verify_bsc",
           "extend_supports", "least_distance"]


def _workers(workers):
    if workers is not None:
        return max(1, int(workers))
    try:
        return max(1, int(os.environ.get("SOLVE_THREADS", "1")))
    except ValueError:
        return 1


def _line_min(a, beta, A, b, tol):
    """Min-norm point on ``a.x = beta`` subject to ``A x <= b`` (``d <= 2``).

    Returns ``(x, None)`` or ``(None, (rows, weights))`` where the rows index
    ``A`` and, together with weight ``1`` on the line itself, combine to a
    Farkas certificate.
    """
    na = a @ a
    p = beta * a / na
    if len(a) == 1:
        viol = A @ p - b
        bad = np.flatnonzero(viol > tol)
        if len(bad):
            j = bad[np.argmax(viol[bad])]
            return None, ([j], [abs(a[0]) / max(abs(A[j, 0]), 1e-300)])
        return p, None
    d = np.array([-a[1], a[0]]) / np.sqrt(na)
    Ad = A @ d
    slack = b - A @ p
    par = np.abs(Ad) <= 1e-12 * np.linalg.norm(A, axis=1)
    bad = np.flatnonzero(par & (slack < -tol))
    if len(bad):
        j = bad[np.argmin(slack[bad])]
        return None, ([j], [np.linalg.norm(a) / max(np.linalg.norm(A[j]), 1e-300)])
    with np.errstate(divide="ignore", invalid="ignore"):
        bound = slack / Ad
    up = ~par & (Ad > 0)
    dn = ~par & (Ad < 0)
    hi = bound[up].min() if up.any() else np.inf
    lo = bound[dn].max() if dn.any() else -np.inf
    if lo > hi:
        mid = 0.5 * (lo + hi)
        if np.all(A @ (p + mid * d) - b <= tol):
            return p + mid * d, None
        j1 = np.flatnonzero(dn)[np.argmax(bound[dn])]
        j2 = np.flatnonzero(up)[np.argmin(bound[up])]
        # weights with lam1 A_j1 + lam2 A_j2 + a = 0
        M = np.stack([A[j1], A[j2]], axis=1)
        try:
            lam = np.linalg.solve(M, -a)
        except np.linalg.LinAlgError:
            lam = np.abs(np.linalg.lstsq(M, -a, rcond=None)[0])
        return None, ([j1, j2], list(np.abs(lam)))
    s = min(max(0.0, lo), hi)
    return p + s * d, None


def least_distance(A, b, seed=0):
    """Minimum-norm ``x`` with ``A @ x <= b`` for ``x`` of dimension 1 or 2.

    Seidel's randomized incremental method for this LP-type problem: the
    optimum is kept while it stays feasible, and recomputed on the violated
    constraint's boundary line otherwise.  The order is a seeded
    permutation, so results are deterministic.

    Returns ``(x, None)`` when feasible, else ``(None, lam)`` where
    ``lam >= 0`` is a Farkas certificate (``A.T @ lam ~ 0``, ``b @ lam < 0``).
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    K, n = A.shape
    if n not in (1, 2):
        raise ValueError("least_distance supports dimensions 1 and 2")
    an = np.linalg.norm(A, axis=1)
    scale = max(float(np.abs(b).max(initial=0.0)), 1e-300)
    tol = 1e-12 * scale
    lam = np.zeros(K)
    tiny = an <= 1e-14 * max(float(an.max(initial=0.0)), 1e-300)
    neg = np.flatnonzero(tiny & (b < -tol))
    if len(neg):
        lam[neg[0]] = 1.0
        return None, lam
    live = np.flatnonzero(~tiny)
    order = live[np.random.default_rng(seed).permutation(len(live))]
    x = np.zeros(n)
    for i, k in enumerate(order):
        if A[k] @ x <= b[k] + tol * (1 + an[k]):
            continue
        prev = order[:i]
        x, cert = _line_min(A[k], b[k], A[prev], b[prev], tol * (1 + an[prev]))
        if x is None:
            rows, weights = cert
            lam[k] = 1.0
            for r, w in zip(rows, weights):
                lam[prev[r]] += w
            return None, lam
    return x, None


@dataclass(frozen=True, eq=False)
class BoundaryTrace:
    """Samples ``(x_k, U(x_k))`` of a boundary datum."""

    points: np.ndarray
    values: np.ndarray
    source: object = field(default=None, repr=False)

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        vals = np.asarray(self.values, dtype=float).reshape(-1)
        if len(pts) != len(vals):
            raise ValueError("points and values differ in length")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, domain, func, per_edge=64):
        """Sample ``func`` (mapping an ``(K, d)`` point array to ``(K,)``) on the boundary."""
        pts = domain.boundary_samples(per_edge)
        return cls(pts, np.asarray(func(pts), dtype=float), func)

    @classmethod
    def from_mesh(cls, mesh, values, source=None):
        idx = mesh.boundary_nodes
        return cls(mesh.nodes[idx], np.asarray(values, dtype=float)[idx], source)

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def oscillation(self):
        return float(np.ptp(self.values)) if len(self.values) else 0.0

    def snap(self, point):
        d = np.linalg.norm(self.points - np.asarray(point, dtype=float), axis=1)
        return int(np.argmin(d))


@dataclass(frozen=True, eq=False)
class AffineSupportPair:
    """Affine minorant ``a_lo + xi_lo.x`` and majorant ``a_up + xi_up.x`` touching at ``touch_point``."""

    touch_point: np.ndarray
    lower: tuple
    upper: tuple

    @property
    def slope_bound(self):
        return max(float(np.linalg.norm(self.lower[1])),
                   float(np.linalg.norm(self.upper[1])))

    def lower_at(self, x):
        a, xi = self.lower
        return a + np.atleast_2d(x) @ xi

    def upper_at(self, x):
        a, xi = self.upper
        return a + np.atleast_2d(x) @ xi

    def to_dict(self):
        return {
            "touch_point": self.touch_point.tolist(),
            "lower": {"a": float(self.lower[0]), "xi": self.lower[1].tolist()},
            "upper": {"a": float(self.upper[0]), "xi": self.upper[1].tolist()},
            "slope_bound": self.slope_bound,
        }


@dataclass(frozen=True, eq=False)
class BscReport:
    holds: bool
    q_min: float
    witnesses: list
    violation: dict = None
    q_cap: float = np.inf
    trace: BoundaryTrace = field(default=None, repr=False)

    def to_dict(self):
        return {
            "holds": self.holds,
            "q_min": self.q_min if np.isfinite(self.q_min) else "inf",
            "q_cap": self.q_cap if np.isfinite(self.q_cap) else "inf",
            "witnesses": [w.to_dict() for w in self.witnesses],
            "violation": self.violation,
        }


def _one_sided(points, values, k, sign):
    """Min-norm slope of a support through sample ``k``; ``sign=+1`` lower, ``-1`` upper."""
    A = sign * (points - points[k])
    b = sign * (values - values[k])
    return least_distance(A, b)


def _solve_touch(points, values, k):
    lo, cert_lo = _one_sided(points, values, k, +1.0)
    up, cert_up = _one_sided(points, values, k, -1.0)
    return lo, up, cert_lo, cert_up


def verify_bsc(trace, touch_points=None, q_cap=np.inf, workers=None):
    """Check the bounded slope condition on a sampled boundary datum.

    Parameters
    ----------
    trace : BoundaryTrace
    touch_points : array-like, optional
        Boundary points at which supports are sought; each is snapped to
        the nearest sample.  Defaults to every sample.
    q_cap : float
        The condition holds when the minimal constant does not exceed this.
    workers : int, optional
        Thread count for the per-point problems (default ``SOLVE_THREADS``).

    Returns
    -------
    BscReport
        ``q_min`` is the largest, over touch points, of the smallest
        Euclidean slope achievable by both supports; ``inf`` if some point
        admits no support, in which case ``violation`` holds a Farkas
        certificate (sample indices and non-negative weights).
    """
    if len(trace.values) == 0:
        raise EmptyTrace("boundary trace has no samples")
    if touch_points is None:
        idx = list(range(len(trace.values)))
    else:
        idx = [trace.snap(p) for p in np.atleast_2d(np.asarray(touch_points, dtype=float))]

    pts, vals = trace.points, trace.values
    nw = _workers(workers)
    if nw > 1 and len(idx) > 1:
        with ThreadPoolExecutor(max_workers=nw) as ex:
            results = list(ex.map(lambda k: _solve_touch(pts, vals, k), idx))
    else:
        results = [_solve_touch(pts, vals, k) for k in idx]

    witnesses = []
    q = 0.0
    violation = None
    for k, (lo, up, cert_lo, cert_up) in zip(idx, results):
        if lo is None or up is None:
            cert = cert_lo if lo is None else cert_up
            support = np.flatnonzero(cert > 1e-12 * cert.max())
            violation = {
                "touch_point": pts[k].tolist(),
                "side": "lower" if lo is None else "upper",
                "certificate": {"samples": support.tolist(),
                                "weights": cert[support].tolist()},
            }
            q = np.inf
            break
        xo, uo = pts[k], vals[k]
        pair = AffineSupportPair(xo.copy(), (uo - lo @ xo, lo), (uo - up @ xo, up))
        witnesses.append(pair)
        q = max(q, pair.slope_bound)

    holds = bool(np.isfinite(q) and q <= q_cap * (1 + 1e-12))
    return BscReport(holds, float(q), witnesses, violation, float(q_cap), trace)


def extend_supports(lipschitz, report, mesh, values=None):
    """Supports certified on the whole closed domain.

    Each boundary witness of ``report`` is replaced by the minimum-norm
    affine function that stays below (above) the datum at every mesh node
    and at every boundary sample, still touching at the same point.  By the
    extension lemma for bounded-slope data its slope cannot exceed
    ``max(lipschitz, report.q_min)``; a larger slope or a nodal violation
    means the supplied Lipschitz constant is inconsistent with the data.

    ``values`` are the nodal values of the datum; when omitted the trace's
    source function is evaluated at the nodes.
    """
    if not report.holds:
        raise ValueError("bounded slope condition does not hold for this report")
    trace = report.trace
    if values is None:
        if trace is None or trace.source is None:
            raise ValueError("nodal values are required when the trace has no source")
        values = trace.source(mesh.nodes)
    values = np.asarray(values, dtype=float)
    cap = max(float(lipschitz), report.q_min)
    pts = np.vstack([trace.points, mesh.nodes])
    vals = np.concatenate([trace.values, values])
    scale = max(trace.oscillation, float(np.ptp(values)), 1e-300)
    tol = 1e-9 * scale

    out = []
    for w in report.witnesses:
        k = trace.snap(w.touch_point)
        lo, _ = _one_sided(pts, vals, k, +1.0)
        up, _ = _one_sided(pts, vals, k, -1.0)
        xo, uo = trace.points[k], trace.values[k]
        for xi, old, sign in ((lo, w.lower, +1.0), (up, w.upper, -1.0)):
            if xi is None or np.linalg.norm(xi) > cap * (1 + 1e-9) + 1e-12:
                gap = sign * (old[0] + mesh.nodes @ old[1] - values)
                node = int(np.argmax(gap))
                raise CertificationFailed(node, float(gap[node]))
        pair = AffineSupportPair(xo.copy(), (uo - lo @ xo, lo), (uo - up @ xo, up))
        below = pair.lower_at(mesh.nodes) - values
        above = values - pair.upper_at(mesh.nodes)
        worst = np.maximum(below, above)
        if worst.max() > tol:
            node = int(np.argmax(worst))
            raise CertificationFailed(node, float(worst[node]))
        out.append(pair)
    return out
