"""CAT(0) target spaces: Euclidean spaces, metric trees, the hyperbolic plane
and l2 products of these.

Every space works on a fixed-width float encoding of its points ("raw" arrays
with the coordinates on the last axis) so that distances, geodesics and
barycenters can be evaluated for whole batches at once.  The user facing API
wraps single points in :class:`Point`, which remembers its space and rejects
use with any other one.

Encodings
---------
Euclidean(dim)      ``[x_1, ..., x_dim]``
MetricTree          ``[edge_id, offset]`` with ``0 <= offset <= length``
HyperbolicPlane     ``[x0, x1, x2]`` on the sheet ``x0^2 - x1^2 - x2^2 = 1``
Product             factor encodings concatenated
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    BarycenterConvergenceError,
    InvalidParameterError,
    PointMismatchError,
)

__all__ = [
    "Point",
    "TargetSpace",
    "Euclidean",
    "MetricTree",
    "HyperbolicPlane",
    "Product",
    "tripod",
    "random_tree",
    "distance",
    "geodesic_point",
    "weighted_barycenter",
    "project_to_ball",
    "comparison_residuals",
    "inductive_mean",
]

HYPERBOLOID_TOL = 1e-12


class Point:
    """A point of a target space, in canonical encoding."""

    __slots__ = ("space", "coords")

    def __init__(self, space: "TargetSpace", coords):
        self.space = space
        self.coords = np.asarray(coords, dtype=float)

    def __eq__(self, other):
        if not isinstance(other, Point):
            return NotImplemented
        return self.space == other.space and np.array_equal(self.coords, other.coords)

    def __hash__(self):
        return hash((self.space, self.coords.tobytes()))

    def __repr__(self):
        return f"Point({self.space.kind}, {self.space.encode(self.coords)!r})"

    def __str__(self):
        return self.space.encode(self.coords)


class TargetSpace:
    """Common machinery for all target spaces.

    Subclasses implement the raw (array level) primitives; this base class
    turns them into the checked single-point API and supplies the generic
    inductive-mean barycenter.
    """

    kind = "abstract"
    ncoord = 0

    # -- raw primitives, overridden by subclasses --------------------------
    def dist_raw(self, a, b):
        raise NotImplementedError

    def geodesic_raw(self, a, b, t):
        raise NotImplementedError

    def canonical_raw(self, a):
        return np.asarray(a, dtype=float)

    def validate_raw(self, a):
        """Return the canonical form of ``a`` or raise PointMismatchError."""
        a = np.asarray(a, dtype=float)
        if a.shape[-1:] != (self.ncoord,):
            raise PointMismatchError(
                f"{self.kind} points need {self.ncoord} coordinates, got shape {a.shape}"
            )
        if not np.all(np.isfinite(a)):
            raise PointMismatchError("point coordinates must be finite")
        return self.canonical_raw(a)

    def random_raw(self, rng, size, scale=1.0):
        raise NotImplementedError

    def barycenter_raw(self, pts, weights, tol=1e-12, init=None, max_iter=200):
        return inductive_mean_raw(self, pts, weights, tol=tol)

    def encode(self, a) -> str:
        return ";".join(format(float(x), ".17g") for x in np.asarray(a).ravel())

    def decode(self, text: str):
        try:
            vals = [float(x) for x in text.split(";")]
        except ValueError as exc:
            raise PointMismatchError(f"cannot parse {self.kind} point {text!r}") from exc
        return self.validate_raw(np.array(vals))

    # -- checked single-point API ------------------------------------------
    def point(self, *coords) -> Point:
        if len(coords) == 1:
            coords = coords[0]
        return Point(self, self.validate_raw(np.atleast_1d(np.asarray(coords, dtype=float))))

    def check(self, p: Point) -> np.ndarray:
        if not isinstance(p, Point):
            raise PointMismatchError(f"expected a Point, got {type(p).__name__}")
        if p.space is not self and p.space != self:
            raise PointMismatchError(
                f"point of {p.space.kind} space used with {self.kind} space"
            )
        return p.coords

    def distance(self, p: Point, q: Point) -> float:
        return float(self.dist_raw(self.check(p), self.check(q)))

    def geodesic_point(self, p: Point, q: Point, t: float) -> Point:
        if not 0.0 <= t <= 1.0:
            raise InvalidParameterError(f"geodesic parameter t={t} outside [0, 1]")
        a, b = self.check(p), self.check(q)
        return Point(self, self.geodesic_raw(a, b, float(t)))

    def weighted_barycenter(self, points: Sequence[Point], weights, tol=1e-12, method=None) -> Point:
        points = list(points)
        weights = np.asarray(weights, dtype=float)
        if not points or len(points) != len(weights):
            raise InvalidParameterError("need equally long, nonempty point and weight lists")
        if np.any(weights <= 0) or not np.all(np.isfinite(weights)):
            raise InvalidParameterError("barycenter weights must be positive")
        pts = np.stack([self.check(p) for p in points])[None]
        if method == "inductive":
            b = inductive_mean_raw(self, pts, weights[None], tol=tol)
        elif method is None:
            b = self.barycenter_raw(pts, weights[None], tol=tol)
        else:
            raise InvalidParameterError(f"unknown barycenter method {method!r}")
        return Point(self, b[0])

    def project_to_ball(self, p: Point, center: Point, radius: float) -> Point:
        if radius < 0:
            raise InvalidParameterError("radius must be nonnegative")
        a, c = self.check(p), self.check(center)
        return Point(self, self.project_raw(a, c, radius))

    def project_raw(self, a, c, radius):
        """Nearest-point projection onto the closed ball B(c, radius), batched."""
        a = np.asarray(a, dtype=float)
        c = np.broadcast_to(np.asarray(c, dtype=float), a.shape)
        d = np.asarray(self.dist_raw(a, c))
        outside = d > radius
        if not np.any(outside):
            return a.copy()
        frac = np.where(outside, radius / np.where(outside, d, 1.0), 1.0)
        moved = self.geodesic_raw(c, a, frac)
        return np.where(outside[..., None], moved, a)

    def variance_raw(self, q, pts, weights):
        """F(q) = sum_i w_i d^2(q, x_i) for batches q (k, nc), pts (k, m, nc)."""
        d = self.dist_raw(q[:, None, :], pts)
        return np.sum(weights * d**2, axis=-1)


# ---------------------------------------------------------------------------
# Euclidean
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class Euclidean(TargetSpace):
    dim: int = 1

    kind = "euclidean"

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise InvalidParameterError("Euclidean dimension must be a positive integer")

    @property
    def ncoord(self):
        return self.dim

    def dist_raw(self, a, b):
        return np.sqrt(np.sum((np.asarray(a) - np.asarray(b)) ** 2, axis=-1))

    def geodesic_raw(self, a, b, t):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        t = np.asarray(t, dtype=float)[..., None]
        return a + t * (b - a)

    def barycenter_raw(self, pts, weights, tol=1e-12, init=None, max_iter=200):
        w = np.asarray(weights, dtype=float)
        return np.einsum("km,kmc->kc", w, pts) / w.sum(axis=1)[:, None]

    def random_raw(self, rng, size, scale=1.0):
        return scale * rng.normal(size=(size, self.dim))


# ---------------------------------------------------------------------------
# Hyperbolic plane, hyperboloid model
# ---------------------------------------------------------------------------
def _mdot(x, y):
    return -x[..., 0] * y[..., 0] + x[..., 1] * y[..., 1] + x[..., 2] * y[..., 2]


@dataclass(frozen=True)
class HyperbolicPlane(TargetSpace):
    """Hyperbolic plane of curvature -1 on the upper hyperboloid sheet."""

    kind = "hyperbolic"
    ncoord = 3

    @staticmethod
    def renormalize(x):
        x = np.array(x, dtype=float, copy=True)
        x[..., 0] = np.sqrt(1.0 + x[..., 1] ** 2 + x[..., 2] ** 2)
        return x

    def canonical_raw(self, a):
        return self.renormalize(a)

    def validate_raw(self, a):
        a = np.asarray(a, dtype=float)
        if a.shape[-1:] != (3,):
            raise PointMismatchError(f"hyperboloid points need 3 coordinates, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise PointMismatchError("point coordinates must be finite")
        defect = np.abs(-_mdot(a, a) - 1.0)
        if np.any(a[..., 0] <= 0) or np.any(defect > 1e-9 * np.maximum(1.0, a[..., 0] ** 2)):
            raise PointMismatchError("point is not on the upper hyperboloid sheet")
        return self.renormalize(a)

    def from_polar(self, r, theta):
        return Point(self, self.exp_raw(np.array([1.0, 0.0, 0.0]),
                                        np.array([0.0, r * np.cos(theta), r * np.sin(theta)])))

    def dist_raw(self, a, b):
        diff = np.asarray(a) - np.asarray(b)
        q = np.maximum(_mdot(diff, diff), 0.0)
        return 2.0 * np.arcsinh(0.5 * np.sqrt(q))

    def log_raw(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        d = self.dist_raw(x, y)
        u = y + _mdot(x, y)[..., None] * x
        n = np.sqrt(np.maximum(_mdot(u, u), 0.0))
        scale = np.where(n > 0, d / np.where(n > 0, n, 1.0), 0.0)
        return scale[..., None] * u

    def exp_raw(self, x, v):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        n = np.sqrt(np.maximum(_mdot(v, v), 0.0))[..., None]
        sinhc = np.where(n > 1e-8, np.sinh(n) / np.where(n > 1e-8, n, 1.0), 1.0 + n**2 / 6.0)
        return self.renormalize(np.cosh(n) * x + sinhc * v)

    def geodesic_raw(self, a, b, t):
        t = np.asarray(t, dtype=float)[..., None]
        return self.exp_raw(a, t * self.log_raw(a, b))

    def barycenter_raw(self, pts, weights, tol=1e-12, init=None, max_iter=500):
        pts = np.asarray(pts, dtype=float)
        w = np.asarray(weights, dtype=float)
        w = w / w.sum(axis=1, keepdims=True)
        if init is None:
            m = np.einsum("km,kmc->kc", w, pts)
            mu = m / np.sqrt(np.maximum(-_mdot(m, m), 1e-300))[:, None]
            mu = self.renormalize(mu)
        else:
            mu = np.array(init, dtype=float)
        tol = max(tol, 1e-15)
        step = np.full(len(mu), np.inf)
        for _ in range(max_iter):
            logs = self.log_raw(mu[:, None, :], pts)
            grad = np.einsum("km,kmc->kc", w, logs)
            # Hessian of F/2 is bounded by sum_i w_i d_i coth(d_i); damp accordingly.
            d = np.sqrt(np.maximum(_mdot(logs, logs), 0.0))
            dcoth = np.where(d > 1e-8, d / np.tanh(np.where(d > 1e-8, d, 1.0)), 1.0)
            alpha = 1.0 / np.maximum(np.sum(w * dcoth, axis=1), 1.0)
            v = alpha[:, None] * grad
            step = np.sqrt(np.maximum(_mdot(v, v), 0.0))
            mu = self.exp_raw(mu, v)
            if np.all(step < tol):
                return mu
        raise BarycenterConvergenceError(
            "Karcher iteration did not converge", last_iterate=mu, residual=float(step.max())
        )

    def random_raw(self, rng, size, scale=1.0):
        r = scale * np.sqrt(rng.uniform(size=size)) * 2.0
        th = rng.uniform(0, 2 * np.pi, size=size)
        v = np.stack([np.zeros(size), r * np.cos(th), r * np.sin(th)], axis=-1)
        return self.exp_raw(np.array([1.0, 0.0, 0.0]), v)


# ---------------------------------------------------------------------------
# Metric trees
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class MetricTree(TargetSpace):
    """Finite metric tree.

    Parameters
    ----------
    vertices : sequence
        Vertex ids (any hashable values).
    edges : sequence of (u, v, length)
        Edge ``k`` runs from ``u`` (offset 0) to ``v`` (offset ``length``).
    """

    vertices: tuple
    edges: tuple

    kind = "tree"
    ncoord = 2

    _index: dict = field(init=False, repr=False, compare=False)
    _a: np.ndarray = field(init=False, repr=False, compare=False)
    _b: np.ndarray = field(init=False, repr=False, compare=False)
    _len: np.ndarray = field(init=False, repr=False, compare=False)
    _D: np.ndarray = field(init=False, repr=False, compare=False)
    _edge_side_a: np.ndarray = field(init=False, repr=False, compare=False)
    _vertex_point: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        verts = tuple(self.vertices)
        edges = tuple((u, v, float(length)) for u, v, length in self.edges)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "edges", edges)
        index = {v: i for i, v in enumerate(verts)}
        if len(index) != len(verts):
            raise InvalidParameterError("target tree has duplicate vertex ids")
        nv = len(verts)
        parent = list(range(nv))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        a = np.empty(len(edges), dtype=int)
        b = np.empty(len(edges), dtype=int)
        lengths = np.empty(len(edges))
        for k, (u, v, length) in enumerate(edges):
            if u not in index or v not in index:
                raise InvalidParameterError(f"tree edge {k} references an unknown vertex")
            if not length > 0 or not np.isfinite(length):
                raise InvalidParameterError(f"tree edge {k} must have positive length")
            iu, iv = index[u], index[v]
            ru, rv = find(iu), find(iv)
            if ru == rv:
                raise InvalidParameterError("target tree is not acyclic")
            parent[ru] = rv
            a[k], b[k], lengths[k] = iu, iv, length
        if nv == 0 or len({find(i) for i in range(nv)}) != 1:
            raise InvalidParameterError("target tree is not connected")
        if not edges:
            raise InvalidParameterError("target tree needs at least one edge")

        adj = [[] for _ in range(nv)]
        for k in range(len(edges)):
            adj[a[k]].append((b[k], k))
            adj[b[k]].append((a[k], k))
        D = np.zeros((nv, nv))
        for s in range(nv):
            seen = {s}
            stack = [s]
            while stack:
                x = stack.pop()
                for y, k in adj[x]:
                    if y not in seen:
                        seen.add(y)
                        D[s, y] = D[s, x] + lengths[k]
                        stack.append(y)
        # side[e, v]: vertex v lies in the component of a_e once edge e is cut
        nedge = len(edges)
        vside = np.zeros((nedge, nv), dtype=bool)
        for e in range(nedge):
            vside[e] = D[a[e]] < D[b[e]]
        edge_side_a = vside[:, a]  # edge f is on the a-side of e iff its tail is
        vertex_point = np.empty((nv, 2))
        for v in range(nv):
            inc = [k for k in range(nedge) if a[k] == v or b[k] == v]
            k = min(inc)
            vertex_point[v] = (k, 0.0 if a[k] == v else lengths[k])
        for name, val in [("_index", index), ("_a", a), ("_b", b), ("_len", lengths),
                          ("_D", D), ("_edge_side_a", edge_side_a),
                          ("_vertex_point", vertex_point)]:
            object.__setattr__(self, name, val)

    def __hash__(self):
        return hash((self.vertices, self.edges))

    @property
    def num_edges(self):
        return len(self.edges)

    def vertex_point(self, v) -> Point:
        return Point(self, self._vertex_point[self._index[v]].copy())

    def edge_point(self, edge: int, offset: float) -> Point:
        return self.point(edge, offset)

    def canonical_raw(self, a):
        a = np.array(a, dtype=float, copy=True)
        e = a[..., 0].astype(int)
        L = self._len[e]
        s = np.clip(a[..., 1], 0.0, L)
        eps = 1e-12 * (1.0 + L)
        at_a = s <= eps
        at_b = s >= L - eps
        out = np.stack([e.astype(float), s], axis=-1)
        if np.any(at_a):
            out[at_a] = self._vertex_point[self._a[e[at_a]]]
        if np.any(at_b & ~at_a):
            m = at_b & ~at_a
            out[m] = self._vertex_point[self._b[e[m]]]
        return out

    def validate_raw(self, a):
        a = np.asarray(a, dtype=float)
        if a.shape[-1:] != (2,):
            raise PointMismatchError(f"tree points need (edge, offset), got shape {a.shape}")
        e = a[..., 0]
        if np.any(e != np.round(e)) or np.any(e < 0) or np.any(e >= len(self.edges)):
            raise PointMismatchError("tree point references an unknown edge")
        L = self._len[e.astype(int)]
        tol = 1e-12 * (1.0 + L)
        if np.any(a[..., 1] < -tol) or np.any(a[..., 1] > L + tol):
            raise PointMismatchError("tree point offset outside its edge")
        return self.canonical_raw(a)

    def encode(self, a):
        a = np.asarray(a)
        return f"{int(a[0])}:{float(a[1]):.17g}"

    def decode(self, text):
        try:
            e, s = text.split(":")
            raw = np.array([float(int(e)), float(s)])
        except ValueError as exc:
            raise PointMismatchError(f"cannot parse tree point {text!r}") from exc
        return self.validate_raw(raw)

    def dist_raw(self, p, q):
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        p, q = np.broadcast_arrays(p, q)
        ep, sp = p[..., 0].astype(int), p[..., 1]
        eq, sq = q[..., 0].astype(int), q[..., 1]
        Lp, Lq = self._len[ep], self._len[eq]
        ap, bp, aq, bq = self._a[ep], self._b[ep], self._a[eq], self._b[eq]
        D = self._D
        d = np.minimum(
            np.minimum(sp + D[ap, aq] + sq, sp + D[ap, bq] + (Lq - sq)),
            np.minimum((Lp - sp) + D[bp, aq] + sq, (Lp - sp) + D[bp, bq] + (Lq - sq)),
        )
        return np.where(ep == eq, np.abs(sp - sq), d)

    def _line_coords(self, x):
        """Coordinates of points x on the lines extending every edge.

        For edge ``e`` (``a_e`` at 0, ``b_e`` at ``L_e``) a point on ``e`` keeps
        its offset, a point on the ``a_e`` side maps to minus its distance to
        ``a_e`` and a point on the ``b_e`` side to ``L_e`` plus its distance to
        ``b_e``.  Returns ``(c, on, side_a)`` with the edge axis last.
        """
        ex, sx = x[..., 0].astype(int), x[..., 1]
        s_ = sx[..., None]
        Lx = self._len[ex][..., None]
        Da, Db = self._D[self._a[ex]], self._D[self._b[ex]]  # (..., V)
        to_a = np.minimum(s_ + Da[..., self._a], Lx - s_ + Db[..., self._a])
        to_b = np.minimum(s_ + Da[..., self._b], Lx - s_ + Db[..., self._b])
        on = ex[..., None] == np.arange(len(self.edges))
        side_a = self._edge_side_a[:, ex]
        side_a = np.moveaxis(side_a, 0, -1)
        c = np.where(on, s_, np.where(side_a, -to_a, self._len + to_b))
        return c, on, side_a

    def geodesic_raw(self, p, q, t):
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        t = np.asarray(t, dtype=float)
        shape = np.broadcast_shapes(p.shape[:-1], q.shape[:-1], t.shape)
        p = np.broadcast_to(p, shape + (2,))
        q = np.broadcast_to(q, shape + (2,))
        t = np.broadcast_to(t, shape)
        cp, onp, sap = self._line_coords(p)
        cq, onq, saq = self._line_coords(q)
        # the geodesic runs along edge e exactly when e separates p and q
        crosses = onp | onq | (sap != saq)
        c = cp + t[..., None] * (cq - cp)
        viol = np.where(crosses, np.maximum(np.maximum(-c, c - self._len), 0.0), np.inf)
        e = np.argmin(viol, axis=-1)
        off = np.take_along_axis(c, e[..., None], axis=-1)[..., 0]
        best = np.stack([e.astype(float), np.clip(off, 0.0, self._len[e])], axis=-1)
        same = self.dist_raw(p, q) == 0.0
        best[same] = p[same]
        return self.canonical_raw(best)

    def barycenter_raw(self, pts, weights, tol=1e-12, init=None, max_iter=200):
        # F restricted to each edge is a single quadratic in the offset
        pts = np.asarray(pts, dtype=float)
        w = np.asarray(weights, dtype=float)[..., None]
        c, _, _ = self._line_coords(pts)  # (k, m, E)
        s = np.clip(np.sum(w * c, axis=1) / np.sum(w, axis=1), 0.0, self._len)
        F = np.sum(w * (s[:, None, :] - c) ** 2, axis=1)
        e = np.argmin(F, axis=-1)
        off = np.take_along_axis(s, e[:, None], axis=-1)[:, 0]
        return self.canonical_raw(np.stack([e.astype(float), off], axis=-1))

    def random_raw(self, rng, size, scale=1.0):
        p = self._len / self._len.sum()
        e = rng.choice(len(self.edges), size=size, p=p)
        s = rng.uniform(size=size) * self._len[e]
        return self.canonical_raw(np.stack([e.astype(float), s], axis=-1))


def tripod(leg_length: float = 2.0) -> MetricTree:
    """Tripod with center ``"o"`` and legs ``"A"``, ``"B"``, ``"C"``.

    Edge ``k`` runs from the center, so offsets measure distance from ``o``.
    """
    return MetricTree(("o", "A", "B", "C"),
                      (("o", "A", leg_length), ("o", "B", leg_length), ("o", "C", leg_length)))


def random_tree(num_edges: int, rng, min_length=0.5, max_length=2.0) -> MetricTree:
    """Random recursive tree with ``num_edges`` edges and uniform lengths."""
    verts = list(range(num_edges + 1))
    edges = []
    for v in range(1, num_edges + 1):
        u = int(rng.integers(0, v))
        edges.append((u, v, float(rng.uniform(min_length, max_length))))
    return MetricTree(tuple(verts), tuple(edges))


# ---------------------------------------------------------------------------
# l2 products
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class Product(TargetSpace):
    factors: tuple

    kind = "product"

    _slices: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        factors = tuple(self.factors)
        if not factors:
            raise InvalidParameterError("product space needs at least one factor")
        for f in factors:
            if not isinstance(f, TargetSpace):
                raise InvalidParameterError("product factors must be target spaces")
        object.__setattr__(self, "factors", factors)
        slices, start = [], 0
        for f in factors:
            slices.append(slice(start, start + f.ncoord))
            start += f.ncoord
        object.__setattr__(self, "_slices", tuple(slices))

    @property
    def ncoord(self):
        return sum(f.ncoord for f in self.factors)

    def _split(self, a):
        a = np.asarray(a, dtype=float)
        return [a[..., s] for s in self._slices]

    def _join(self, parts):
        return np.concatenate(parts, axis=-1)

    def point_from(self, *components: Point) -> Point:
        if len(components) != len(self.factors):
            raise PointMismatchError("wrong number of product components")
        return Point(self, self._join([f.check(c) for f, c in zip(self.factors, components)]))

    def components(self, p: Point):
        return [Point(f, part) for f, part in zip(self.factors, self._split(self.check(p)))]

    def canonical_raw(self, a):
        return self._join([f.canonical_raw(x) for f, x in zip(self.factors, self._split(a))])

    def validate_raw(self, a):
        a = np.asarray(a, dtype=float)
        if a.shape[-1:] != (self.ncoord,):
            raise PointMismatchError(f"product points need {self.ncoord} coordinates")
        return self._join([f.validate_raw(x) for f, x in zip(self.factors, self._split(a))])

    def dist_raw(self, a, b):
        sq = sum(f.dist_raw(x, y) ** 2
                 for f, x, y in zip(self.factors, self._split(a), self._split(b)))
        return np.sqrt(sq)

    def geodesic_raw(self, a, b, t):
        return self._join([f.geodesic_raw(x, y, t)
                           for f, x, y in zip(self.factors, self._split(a), self._split(b))])

    def barycenter_raw(self, pts, weights, tol=1e-12, init=None, max_iter=200):
        inits = self._split(init) if init is not None else [None] * len(self.factors)
        return self._join([f.barycenter_raw(x, weights, tol=tol, init=i, max_iter=max_iter)
                           for f, x, i in zip(self.factors, self._split(pts), inits)])

    def random_raw(self, rng, size, scale=1.0):
        return self._join([f.random_raw(rng, size, scale) for f in self.factors])

    def encode(self, a):
        return "|".join(f.encode(x) for f, x in zip(self.factors, self._split(a)))

    def decode(self, text):
        parts = text.split("|")
        if len(parts) != len(self.factors):
            raise PointMismatchError(f"cannot parse product point {text!r}")
        return self._join([f.decode(x) for f, x in zip(self.factors, parts)])


# ---------------------------------------------------------------------------
# generic fallback barycenter
# ---------------------------------------------------------------------------
def inductive_mean_raw(space, pts, weights, tol=1e-10, max_passes=20000, seed=0):
    """Sturm's inductive mean, run in shuffled cycles over the samples.

    ``b <- geodesic(b, x_i, w_i / W)`` with ``W`` the accumulated weight.
    Stops once a whole pass moves the iterate by less than ``tol``.
    """
    pts = np.asarray(pts, dtype=float)
    w = np.asarray(weights, dtype=float)
    k, m = w.shape
    rng = np.random.default_rng(seed)
    rows = np.arange(k)
    b = pts[:, 0].copy()
    acc = w[:, 0].copy()
    order = np.arange(1, m)
    move = np.full(k, np.inf)
    for n_pass in range(max_passes):
        start = b.copy()
        for i in order:
            acc = acc + w[:, i]
            b = space.geodesic_raw(b, pts[rows, i], w[:, i] / acc)
        move = space.dist_raw(start, b)
        if n_pass > 0 and np.all(move < tol):
            return b
        order = rng.permutation(m)
    raise BarycenterConvergenceError(
        "inductive mean did not converge", last_iterate=b, residual=float(np.max(move))
    )


def inductive_mean(space: TargetSpace, points: Sequence[Point], weights, tol=1e-10,
                   max_passes=20000) -> Point:
    pts = np.stack([space.check(p) for p in points])[None]
    w = np.asarray(weights, dtype=float)[None]
    return Point(space, inductive_mean_raw(space, pts, w, tol=tol, max_passes=max_passes)[0])


# ---------------------------------------------------------------------------
# module-level operations
# ---------------------------------------------------------------------------
def distance(space: TargetSpace, p: Point, q: Point) -> float:
    return space.distance(p, q)


def geodesic_point(space: TargetSpace, p: Point, q: Point, t: float) -> Point:
    return space.geodesic_point(p, q, t)


def weighted_barycenter(space: TargetSpace, points, weights, tol=1e-12) -> Point:
    return space.weighted_barycenter(points, weights, tol=tol)


def project_to_ball(space: TargetSpace, p: Point, center: Point, radius: float) -> Point:
    return space.project_to_ball(p, center, radius)


def comparison_residuals_raw(space, P, Q, R, S, lam, mu, t):
    """Batched residuals (RHS - LHS) of the CN and four Reshetnyak inequalities.

    Returns an array of shape (..., 5); every entry is >= 0 in a CAT(0) space.
    """
    d = space.dist_raw
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu, dtype=float)
    t = np.asarray(t, dtype=float)

    # CN: apex P, geodesic from Q to S
    g = space.geodesic_raw(Q, S, t)
    r0 = ((1 - t) * d(P, Q) ** 2 + t * d(P, S) ** 2 - t * (1 - t) * d(Q, S) ** 2) - d(P, g) ** 2

    dPQ, dQR, dRS, dSP = d(P, Q), d(Q, R), d(R, S), d(S, P)
    dPR, dQS = d(P, R), d(Q, S)
    r1 = (dPQ**2 + dQR**2 + dRS**2 + dSP**2 - (dRS - dPQ) ** 2) - (dPR**2 + dQS**2)

    Qm = space.geodesic_raw(Q, R, 0.5)
    rhs2 = (d(P, Qm) ** 2 - dPQ**2 - d(Qm, Q) ** 2) + (d(S, Qm) ** 2 - dRS**2 - d(Qm, R) ** 2)
    r2 = (dSP - dQR) * dQR - rhs2

    Pl = space.geodesic_raw(P, S, lam)
    r3 = (d(P, Pl) ** 2 + dPQ**2 - d(Pl, Q) ** 2) - lam * (dSP**2 + dPQ**2 - dQS**2)

    Qmu = space.geodesic_raw(Q, R, mu)
    lhs4 = d(Pl, Qmu) ** 2
    rhs4a = (mu * (1 - lam) * dPR**2 + (1 - mu) * lam * dQS**2 + mu * lam * dRS**2
             + (1 - lam) * (1 - mu) * dPQ**2 - lam * (1 - lam) * dSP**2 - mu * (1 - mu) * dQR**2)
    rhs4b = 2 * (1 - lam) * dPQ**2 + 2 * lam * dRS**2 + 2 * (lam - mu) ** 2 * dQR**2
    r4 = np.minimum(rhs4a - lhs4, rhs4b - lhs4)
    return np.stack(np.broadcast_arrays(r0, r1, r2, r3, r4), axis=-1)


def comparison_residuals(space: TargetSpace, P: Point, Q: Point, R: Point, S: Point,
                         lam: float, mu: float, t: float):
    """Residuals (RHS - LHS) of the CN inequality and Reshetnyak parts (1)-(4).

    Returns a tuple ``(cn, quad, midpoint, interpolation, two_geodesics)``;
    for the last one both four-point bounds are evaluated and the smaller
    residual is reported.
    """
    if not (0 < lam < 1 and 0 < mu < 1):
        raise InvalidParameterError("lambda and mu must lie in (0, 1)")
    if not 0 <= t <= 1:
        raise InvalidParameterError("t must lie in [0, 1]")
    raw = [space.check(x) for x in (P, Q, R, S)]
    return tuple(float(x) for x in comparison_residuals_raw(space, *raw, lam, mu, t))
