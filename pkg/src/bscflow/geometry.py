"""Convex domains and their piecewise-linear simplicial meshes.

A domain is either an interval ``(a, b)`` or a convex polygon given by its
vertices.  :func:`triangulate` turns it into a conforming P1 mesh whose
element gradients are constant, so a spatial Lipschitz cap becomes one
Euclidean-ball constraint per element.
"""
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import (DegenerateArea, DuplicateVertex, GeometryError, NonConvex,
                     TargetTooCoarse)

__all__ = ["ConvexDomain", "Mesh", "validate_convex", "triangulate"]


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


@dataclass(frozen=True, eq=False)
class ConvexDomain:
    """A bounded convex region of dimension 1 or 2.

    For ``dimension == 1`` the vertices array has shape ``(2, 1)`` and holds
    the endpoints ``a < b``; for ``dimension == 2`` it has shape ``(k, 2)``
    and lists the polygon counter-clockwise.  Build instances with
    :func:`validate_convex` rather than directly.
    """

    dimension: int
    vertices: np.ndarray

    @classmethod
    def interval(cls, a, b):
        return validate_convex([a, b])

    @classmethod
    def polygon(cls, vertices):
        return validate_convex(vertices)

    @classmethod
    def unit_square(cls):
        return validate_convex([(0, 0), (1, 0), (1, 1), (0, 1)])

    @cached_property
    def measure(self):
        if self.dimension == 1:
            return float(self.vertices[1, 0] - self.vertices[0, 0])
        v = self.vertices
        return 0.5 * float(np.sum(_cross(v, np.roll(v, -1, axis=0))))

    @cached_property
    def diameter(self):
        v = self.vertices
        d = np.linalg.norm(v[:, None, :] - v[None, :, :], axis=-1)
        return float(d.max())

    @cached_property
    def centroid(self):
        v = self.vertices
        if self.dimension == 1:
            return v.mean(axis=0)
        w = np.roll(v, -1, axis=0)
        c = _cross(v, w)
        return ((v + w) * c[:, None]).sum(axis=0) / (6.0 * self.measure)

    @property
    def edges(self):
        """Pairs ``(start, end)`` of boundary segments (dimension 2 only)."""
        v = self.vertices
        return list(zip(v, np.roll(v, -1, axis=0)))

    @cached_property
    def outward_normals(self):
        v = self.vertices
        if self.dimension == 1:
            return np.array([[-1.0], [1.0]])
        t = np.roll(v, -1, axis=0) - v
        n = np.stack([t[:, 1], -t[:, 0]], axis=1)
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    def distance_to_boundary(self, points):
        """Unsigned Euclidean distance from each point to the boundary."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        if self.dimension == 1:
            x = p[:, 0]
            return np.minimum(np.abs(x - self.vertices[0, 0]),
                              np.abs(x - self.vertices[1, 0]))
        best = np.full(len(p), np.inf)
        for a, b in self.edges:
            ab = b - a
            s = np.clip(((p - a) @ ab) / (ab @ ab), 0.0, 1.0)
            d = np.linalg.norm(p - (a + s[:, None] * ab), axis=1)
            best = np.minimum(best, d)
        return best

    def contains(self, points, tol=0.0):
        p = np.atleast_2d(np.asarray(points, dtype=float))
        if self.dimension == 1:
            x = p[:, 0]
            return (x >= self.vertices[0, 0] - tol) & (x <= self.vertices[1, 0] + tol)
        inside = np.ones(len(p), dtype=bool)
        for (a, _), n in zip(self.edges, self.outward_normals):
            inside &= (p - a) @ n <= tol
        return inside

    def boundary_samples(self, per_edge=64):
        """Points on the boundary: both endpoints in 1-D, ``per_edge`` per edge in 2-D."""
        if self.dimension == 1:
            return self.vertices.copy()
        s = np.arange(per_edge) / per_edge
        pts = [a + s[:, None] * (b - a) for a, b in self.edges]
        return np.concatenate(pts, axis=0)

    def to_dict(self):
        if self.dimension == 1:
            return {"interval": [float(self.vertices[0, 0]), float(self.vertices[1, 0])]}
        return {"polygon": self.vertices.tolist()}


def validate_convex(vertices):
    """Validate a vertex list and return a :class:`ConvexDomain`.

    Two scalars (or two 1-tuples) give an interval.  Three or more planar
    points give a polygon; clockwise input is accepted and reoriented.

    Raises
    ------
    NonConvex
        Carrying the index of the first reflex vertex in the input order.
    DuplicateVertex
        When a vertex repeats its predecessor.
    DegenerateArea
        When the polygon (or interval) has zero measure.
    """
    arr = np.asarray(vertices, dtype=float)
    if arr.ndim == 1 or (arr.ndim == 2 and arr.shape[1] == 1):
        arr = arr.reshape(-1)
        if arr.size != 2:
            raise GeometryError("a 1-D domain needs exactly two endpoints")
        a, b = arr
        if not np.all(np.isfinite(arr)):
            raise GeometryError("endpoints must be finite")
        if a == b:
            raise DegenerateArea("interval has zero length")
        if a > b:
            raise GeometryError("interval endpoints must satisfy a < b")
        return ConvexDomain(1, arr.reshape(2, 1))

    if arr.ndim != 2 or arr.shape[1] != 2:
        raise GeometryError("polygon vertices must be an (k, 2) array")
    if len(arr) < 3:
        raise GeometryError("a polygon needs at least 3 vertices")
    if not np.all(np.isfinite(arr)):
        raise GeometryError("vertices must be finite")

    diam = float(np.max(np.linalg.norm(arr[:, None] - arr[None], axis=-1)))
    nxt = np.roll(arr, -1, axis=0)
    for i in range(len(arr)):
        if np.allclose(arr[i], arr[i - 1], rtol=0, atol=1e-12 * max(diam, 1e-300)):
            raise DuplicateVertex(i)
    area2 = float(np.sum(_cross(arr, nxt)))
    tol = 1e-12 * diam ** 2
    if abs(area2) <= tol:
        raise DegenerateArea("polygon has zero area")
    orient = 1.0 if area2 > 0 else -1.0
    prev = np.roll(arr, 1, axis=0)
    turns = orient * _cross(arr - prev, nxt - arr)
    bad = np.flatnonzero(turns < -tol)
    if bad.size:
        raise NonConvex(int(bad[0]))
    # a star-shaped but self-overlapping walk turns more than once around
    angles = np.arctan2(_cross(arr - prev, nxt - arr),
                        np.einsum("ij,ij->i", arr - prev, nxt - arr))
    if abs(abs(angles.sum()) - 2 * np.pi) > 1e-6:
        raise NonConvex(0)
    if orient < 0:
        arr = arr[::-1].copy()
    return ConvexDomain(2, arr)


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming simplicial P1 mesh.

    Attributes
    ----------
    nodes : (N, d) array
    elements : (E, d+1) int array
    boundary_nodes : sorted int array of nodes lying on the domain boundary
    element_measures : (E,) array of lengths or areas
    gradient_maps : (E, d, d+1) array; ``gradient_maps[e] @ u[elements[e]]``
        is the constant gradient of the P1 function ``u`` on element ``e``.
    """

    nodes: np.ndarray
    elements: np.ndarray
    boundary_nodes: np.ndarray
    element_measures: np.ndarray
    gradient_maps: np.ndarray
    domain: ConvexDomain = field(default=None, repr=False)

    @classmethod
    def from_simplices(cls, nodes, elements, boundary_nodes, domain=None):
        nodes = np.asarray(nodes, dtype=float)
        if nodes.ndim == 1:
            nodes = nodes[:, None]
        elements = np.asarray(elements, dtype=np.int64)
        d = nodes.shape[1]
        p = nodes[elements]                     # (E, d+1, d)
        B = np.transpose(p[:, 1:, :] - p[:, :1, :], (0, 2, 1))  # columns = edges
        det = np.linalg.det(B)
        if np.any(det <= 0):
            # enforce positive orientation
            flip = det < 0
            elements = elements.copy()
            elements[flip, :2] = elements[flip, 1::-1]
            p = nodes[elements]
            B = np.transpose(p[:, 1:, :] - p[:, :1, :], (0, 2, 1))
            det = np.linalg.det(B)
        if np.any(det <= 0):
            raise GeometryError("mesh contains degenerate elements")
        measures = np.abs(det) / (1.0 if d == 1 else 2.0)
        Binv = np.linalg.inv(B)                 # rows = grads of lambda_1..d
        G = np.empty((len(elements), d, d + 1))
        G[:, :, 1:] = np.transpose(Binv, (0, 2, 1))
        G[:, :, 0] = -G[:, :, 1:].sum(axis=2)
        return cls(nodes, elements, np.unique(np.asarray(boundary_nodes, dtype=np.int64)),
                   measures, G, domain)

    @property
    def dim(self):
        return self.nodes.shape[1]

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_elements(self):
        return len(self.elements)

    @cached_property
    def interior_nodes(self):
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[self.boundary_nodes] = False
        return np.flatnonzero(mask)

    @cached_property
    def total_measure(self):
        return float(self.element_measures.sum())

    @cached_property
    def element_diameters(self):
        p = self.nodes[self.elements]
        d = np.linalg.norm(p[:, :, None, :] - p[:, None, :, :], axis=-1)
        return d.max(axis=(1, 2))

    @property
    def max_element_diameter(self):
        return float(self.element_diameters.max())

    @cached_property
    def lumped_mass(self):
        """Nodal weights: each element gives an equal share of its measure to its vertices."""
        k = self.dim + 1
        return np.bincount(self.elements.ravel(),
                           weights=np.repeat(self.element_measures / k, k),
                           minlength=self.n_nodes)

    @cached_property
    def gradient_matrix(self):
        """Sparse ``(E*d, N)`` operator; row ``e*d + k`` is component ``k`` on element ``e``."""
        E, d, k = self.gradient_maps.shape
        rows = np.repeat(np.arange(E * d), k)
        cols = np.repeat(self.elements, d, axis=0).ravel()
        return sp.csr_matrix((self.gradient_maps.ravel(), (rows, cols)),
                             shape=(E * d, self.n_nodes))

    @cached_property
    def stiffness(self):
        G = self.gradient_matrix
        W = sp.diags(np.repeat(self.element_measures, self.dim))
        return (G.T @ W @ G).tocsr()

    @cached_property
    def consistent_mass(self):
        d = self.dim
        k = d + 1
        local = (np.ones((k, k)) + np.eye(k)) / ((d + 1) * (d + 2))
        vals = self.element_measures[:, None, None] * local[None]
        rows = np.repeat(self.elements, k, axis=1).ravel()
        cols = np.tile(self.elements, (1, k)).ravel()
        return sp.csr_matrix((vals.ravel(), (rows, cols)),
                             shape=(self.n_nodes, self.n_nodes))

    def element_gradients(self, values):
        """Constant element gradients; ``values`` is ``(N,)`` or ``(S, N)``."""
        u = np.asarray(values, dtype=float)
        return np.einsum("edk,...ek->...ed", self.gradient_maps, u[..., self.elements])

    def l2_norm(self, values):
        u = np.asarray(values, dtype=float)
        return np.sqrt(np.sum(self.lumped_mass * u ** 2, axis=-1))

    def to_text(self):
        """Plain-text block export: ``NODES``, ``ELEMENTS`` and ``BOUNDARY`` sections."""
        lines = [f"NODES {self.n_nodes}"]
        lines += [" ".join(f"{c:.17g}" for c in x) for x in self.nodes]
        lines.append(f"ELEMENTS {self.n_elements}")
        lines += [" ".join(str(int(i)) for i in e) for e in self.elements]
        lines.append(f"BOUNDARY {len(self.boundary_nodes)}")
        lines += [str(int(i)) for i in self.boundary_nodes]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text, domain=None):
        it = iter(text.split("\n"))

        def block(tag):
            head = next(it).split()
            if head[0] != tag:
                raise GeometryError(f"expected {tag} block, found {head[0]}")
            return [next(it) for _ in range(int(head[1]))]

        nodes = [[float(c) for c in ln.split()] for ln in block("NODES")]
        elements = [[int(c) for c in ln.split()] for ln in block("ELEMENTS")]
        boundary = [int(ln) for ln in block("BOUNDARY")]
        return cls.from_simplices(nodes, elements, boundary, domain)


def _red_refine(nodes, tris, bedges):
    nodes = list(map(tuple, nodes))
    mids = {}

    def mid(i, j):
        key = (i, j) if i < j else (j, i)
        if key not in mids:
            a, b = nodes[i], nodes[j]
            nodes.append(((a[0] + b[0]) / 2, (a[1] + b[1]) / 2))
            mids[key] = len(nodes) - 1
        return mids[key]

    out = []
    for a, b, c in tris:
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        out += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
    new_bedges = []
    for i, j in bedges:
        m = mid(i, j)
        new_bedges += [(i, m), (m, j)]
    return np.array(nodes), out, new_bedges


def triangulate(domain, target_h):
    """Mesh ``domain`` so that no element is wider than ``target_h``.

    Intervals get a uniform grid.  Polygons get a fan around the centroid,
    then uniform red refinement until the diameter bound holds; a
    ``target_h`` at or above the domain diameter returns the bare fan.
    """
    if not (target_h > 0 and np.isfinite(target_h)):
        raise GeometryError("target_h must be a positive finite number")
    if domain.dimension == 1:
        a, b = domain.vertices[:, 0]
        n = int(np.ceil((b - a) / target_h - 1e-9))
        if n < 2:
            raise TargetTooCoarse(
                f"target_h={target_h} leaves no interior node on ({a}, {b})")
        x = np.linspace(a, b, n + 1)
        elements = np.stack([np.arange(n), np.arange(1, n + 1)], axis=1)
        return Mesh.from_simplices(x[:, None], elements, [0, n], domain)

    v = domain.vertices
    k = len(v)
    nodes = np.vstack([v, domain.centroid])
    c = k
    tris = [(c, i, (i + 1) % k) for i in range(k)]
    bedges = [(i, (i + 1) % k) for i in range(k)]

    def diameter(nodes, tris):
        p = nodes[np.array(tris)]
        return np.linalg.norm(p[:, :, None] - p[:, None], axis=-1).max()

    while diameter(nodes, tris) > target_h * (1 + 1e-12):
        nodes, tris, bedges = _red_refine(nodes, tris, bedges)
    boundary = np.unique(np.array(bedges).ravel())
    return Mesh.from_simplices(nodes, tris, boundary, domain)
