"""Weighted-graph discretizations of the domain and discrete Sobolev calculus.

A :class:`MeshDomain` carries a lumped vertex measure ``mu`` and symmetric
edge weights ``w``.  With these the discrete Dirichlet energy of a map is
``E[u] = sum_edges w_e d^2(u_i, u_j)``, the graph Laplacian is
``(Lap f)_i = (1/mu_i) sum_j w_ij (f_j - f_i)`` and the L2 distance between
maps is ``sqrt(sum_i mu_i d^2(u_i, v_i))``.

Built-in lattices use ``mu = delta**dim`` and ``w = delta**(dim - 2)`` so that
``Lap x^2 = 2`` at interior vertices and the energy of a linear Euclidean map
equals the integral of its squared gradient.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import pi

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, dijkstra
from scipy.sparse.linalg import splu

from .errors import (
    DomainMismatchError,
    InvalidParameterError,
    SingularSolveError,
)
from .target import Euclidean, Point, TargetSpace

__all__ = [
    "MeshDomain",
    "MapState",
    "build_domain",
    "energy",
    "l2_distance",
    "laplacian",
    "heat_evolve",
    "poincare_constant",
    "ks_energy_profile",
    "KSProfile",
    "DOMAIN_KINDS",
]

DOMAIN_KINDS = ("interval-dirichlet", "grid2d-dirichlet", "cycle", "torus2d")


def _greedy_coloring(n, nbr_lists):
    colors = np.full(n, -1, dtype=int)
    for i in range(n):
        used = {colors[j] for j in nbr_lists[i]}
        c = 0
        while c in used:
            c += 1
        colors[i] = c
    return colors


@dataclass(frozen=True, eq=False)
class MeshDomain:
    """Weighted graph standing in for the domain.

    Parameters
    ----------
    coords : ndarray, shape (n, dim)
        Geometric vertex positions.
    mu : ndarray, shape (n,)
        Lumped vertex measures, all positive.
    edges : ndarray, shape (m, 2)
        Undirected edges ``i < j``.
    weights : ndarray, shape (m,)
        Positive edge weights.
    lengths : ndarray, shape (m,)
        Edge lengths used for the intrinsic graph metric.
    boundary : ndarray of bool, shape (n,)
        Dirichlet boundary vertices.
    """

    coords: np.ndarray
    mu: np.ndarray
    edges: np.ndarray
    weights: np.ndarray
    lengths: np.ndarray
    boundary: np.ndarray
    K: float = 0.0
    spacing: float = 1.0
    kind: str = "custom"
    n: int = 0
    length: float = 0.0

    stiffness: sp.csr_matrix = field(init=False, repr=False)
    nbr: np.ndarray = field(init=False, repr=False)
    nbr_w: np.ndarray = field(init=False, repr=False)
    colors: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        edges = np.asarray(self.edges, dtype=int).reshape(-1, 2)
        w = np.asarray(self.weights, dtype=float)
        nv = len(mu)
        if np.any(mu <= 0):
            raise InvalidParameterError("vertex measures must be positive")
        if np.any(w <= 0):
            raise InvalidParameterError("edge weights must be positive")
        if self.K > 0:
            raise InvalidParameterError("curvature tag K must be <= 0")
        adj = sp.coo_matrix((w, (edges[:, 0], edges[:, 1])), shape=(nv, nv))
        adj = (adj + adj.T).tocsr()
        if connected_components(adj, directed=False)[0] != 1:
            raise InvalidParameterError("domain graph is not connected")
        bnd = np.asarray(self.boundary, dtype=bool)
        nbr_lists = [adj.indices[adj.indptr[i]:adj.indptr[i + 1]] for i in range(nv)]
        # grid corners touch only boundary vertices, so only ask for some interior
        if bnd.all():
            raise InvalidParameterError("domain has no interior vertex")
        stiff = (sp.diags(np.asarray(adj.sum(axis=1)).ravel()) - adj).tocsr()
        maxdeg = max(len(x) for x in nbr_lists)
        nbr = np.tile(np.arange(nv)[:, None], (1, maxdeg))
        nbr_w = np.zeros((nv, maxdeg))
        for i, js in enumerate(nbr_lists):
            nbr[i, :len(js)] = js
            nbr_w[i, :len(js)] = adj.data[adj.indptr[i]:adj.indptr[i + 1]]
        for name, val in [("mu", mu), ("edges", edges), ("weights", w),
                          ("lengths", np.asarray(self.lengths, dtype=float)),
                          ("coords", np.asarray(self.coords, dtype=float).reshape(nv, -1)),
                          ("boundary", bnd), ("stiffness", stiff), ("nbr", nbr),
                          ("nbr_w", nbr_w), ("colors", _greedy_coloring(nv, nbr_lists))]:
            object.__setattr__(self, name, val)
        for arr in (mu, edges, w, bnd, nbr, nbr_w):
            arr.setflags(write=False)

    @property
    def num_vertices(self) -> int:
        return len(self.mu)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    @property
    def interior(self) -> np.ndarray:
        return ~self.boundary

    @property
    def total_measure(self) -> float:
        return float(self.mu.sum())

    @property
    def closed(self) -> bool:
        return not self.boundary.any()

    def matches(self, other: "MeshDomain") -> bool:
        """Structural equality: same graph, weights, measures and boundary."""
        if other is self:
            return True
        if not isinstance(other, MeshDomain) or other.K != self.K:
            return False
        return all(np.array_equal(getattr(self, f), getattr(other, f))
                   for f in ("coords", "mu", "edges", "weights", "lengths", "boundary"))

    def graph_distances(self) -> np.ndarray:
        """All-pairs intrinsic graph distances (cached)."""
        cached = self.__dict__.get("_gd_cache")
        if cached is None:
            g = sp.coo_matrix((self.lengths, (self.edges[:, 0], self.edges[:, 1])),
                              shape=(self.num_vertices,) * 2).tocsr()
            cached = dijkstra(g, directed=False)
            cached.setflags(write=False)
            object.__setattr__(self, "_gd_cache", cached)
        return cached

    def hops(self) -> np.ndarray:
        """All-pairs hop counts."""
        cached = self.__dict__.get("_hop_cache")
        if cached is None:
            g = sp.coo_matrix((np.ones(self.num_edges), (self.edges[:, 0], self.edges[:, 1])),
                              shape=(self.num_vertices,) * 2).tocsr()
            cached = dijkstra(g, directed=False, unweighted=True)
            object.__setattr__(self, "_hop_cache", cached)
        return cached

    def field(self, values) -> np.ndarray:
        """Check a per-vertex scalar field and return it as a float array."""
        f = np.asarray(values, dtype=float)
        if f.shape != (self.num_vertices,):
            raise DomainMismatchError(
                f"scalar field needs {self.num_vertices} values, got shape {f.shape}"
            )
        if not np.all(np.isfinite(f)):
            raise InvalidParameterError("scalar field values must be finite")
        return f


def build_domain(kind: str, n: int, length: float = 1.0, K: float = 0.0) -> MeshDomain:
    """Build one of the lattice domains.

    Parameters
    ----------
    kind : {"interval-dirichlet", "grid2d-dirichlet", "cycle", "torus2d"}
    n : int
        Vertices per dimension, at least 3.
    length : float
        Side length; spacing is ``length/n`` on periodic kinds and
        ``length/(n-1)`` on Dirichlet kinds.
    K : float
        Curvature tag (<= 0) threaded into the Hamilton-Jacobi and
        Bochner formulas.

    Examples
    --------
    >>> d = build_domain("interval-dirichlet", 3, 2.0)
    >>> d.num_vertices, d.num_edges, d.spacing
    (3, 2, 1.0)
    """
    if kind not in DOMAIN_KINDS:
        raise InvalidParameterError(f"unknown domain kind {kind!r}; expected one of {DOMAIN_KINDS}")
    if int(n) != n or n < 3:
        raise InvalidParameterError("n must be an integer >= 3")
    if not length > 0 or not np.isfinite(length):
        raise InvalidParameterError("length must be positive")
    n = int(n)
    periodic = kind in ("cycle", "torus2d")
    delta = length / n if periodic else length / (n - 1)
    idx = np.arange(n)
    if kind in ("interval-dirichlet", "cycle"):
        dim = 1
        coords = (idx * delta)[:, None]
        edges = [(i, i + 1) for i in range(n - 1)]
        if periodic:
            edges.append((0, n - 1))
        boundary = np.zeros(n, dtype=bool)
        if not periodic:
            boundary[[0, n - 1]] = True
    else:
        dim = 2
        ii, jj = np.meshgrid(idx, idx, indexing="xy")
        vid = jj * n + ii  # row-major: x fastest
        coords = np.stack([ii.ravel() * delta, jj.ravel() * delta], axis=1)
        edges = []
        for j in range(n):
            for i in range(n):
                if i + 1 < n:
                    edges.append((vid[j, i], vid[j, i + 1]))
                elif periodic:
                    edges.append((vid[j, 0], vid[j, i]))
                if j + 1 < n:
                    edges.append((vid[j, i], vid[j + 1, i]))
                elif periodic:
                    edges.append((vid[0, i], vid[j, i]))
        boundary = np.zeros(n * n, dtype=bool)
        if not periodic:
            b = (ii == 0) | (ii == n - 1) | (jj == 0) | (jj == n - 1)
            boundary = b.ravel()
    edges = np.array(sorted(tuple(sorted(e)) for e in edges), dtype=int)
    nv = len(coords)
    return MeshDomain(
        coords=coords,
        mu=np.full(nv, delta**dim),
        edges=edges,
        weights=np.full(len(edges), delta ** (dim - 2)),
        lengths=np.full(len(edges), delta),
        boundary=boundary,
        K=float(K),
        spacing=float(delta),
        kind=kind,
        n=n,
        length=float(length),
    )


class MapState:
    """A map from the vertices of a domain into a target space.

    Parameters
    ----------
    domain : MeshDomain
    space : TargetSpace
    values : array_like, shape (n, ncoord) or sequence of Point
        Raw per-vertex coordinates (canonicalized on construction).
    pin_boundary : bool
        If true (default) the boundary vertices are pinned to their given
        values, which then form the boundary datum ``psi``.
    """

    __slots__ = ("domain", "space", "values", "pinned")

    def __init__(self, domain: MeshDomain, space: TargetSpace, values, pin_boundary=True,
                 _trusted=False):
        self.domain = domain
        self.space = space
        if not _trusted:
            if len(values) and isinstance(values[0], Point):
                values = np.stack([space.check(p) for p in values])
            values = np.asarray(values, dtype=float)
            if values.ndim == 1 and space.ncoord == 1:
                values = values[:, None]
            if values.shape != (domain.num_vertices, space.ncoord):
                raise DomainMismatchError(
                    f"map needs shape {(domain.num_vertices, space.ncoord)}, got {values.shape}"
                )
            values = space.validate_raw(values)
        else:
            values = np.array(values, dtype=float)
        values.setflags(write=False)
        self.values = values
        if isinstance(pin_boundary, np.ndarray):
            self.pinned = pin_boundary
        else:
            self.pinned = domain.boundary if pin_boundary else np.zeros(domain.num_vertices, bool)

    @classmethod
    def from_function(cls, domain, space, fn, pin_boundary=True):
        """Evaluate ``fn(coords) -> raw values`` on the vertex coordinates."""
        vals = np.asarray(fn(domain.coords), dtype=float)
        return cls(domain, space, vals, pin_boundary)

    @classmethod
    def constant(cls, domain, space, point: Point, pin_boundary=True):
        raw = space.check(point)
        return cls(domain, space, np.tile(raw, (domain.num_vertices, 1)), pin_boundary)

    def with_values(self, values) -> "MapState":
        """Same domain, target and pinning; pinned entries are taken from self."""
        values = np.array(values, dtype=float)
        values[self.pinned] = self.values[self.pinned]
        return MapState(self.domain, self.space, values, self.pinned, _trusted=True)

    @property
    def psi(self) -> np.ndarray:
        return self.values[self.pinned]

    def __getitem__(self, i) -> Point:
        return Point(self.space, self.values[i].copy())

    def __len__(self):
        return self.domain.num_vertices

    def points(self):
        return [self[i] for i in range(len(self))]

    def same_setting(self, other: "MapState", check_boundary=False):
        if not self.domain.matches(other.domain):
            raise DomainMismatchError("maps live on different domains")
        if other.space != self.space:
            raise DomainMismatchError("maps take values in different target spaces")
        if check_boundary:
            if not np.array_equal(self.pinned, other.pinned) or not np.array_equal(self.psi, other.psi):
                raise DomainMismatchError("maps carry different boundary data")

    def __eq__(self, other):
        if not isinstance(other, MapState):
            return NotImplemented
        return (self.domain.matches(other.domain) and self.space == other.space
                and np.array_equal(self.values, other.values)
                and np.array_equal(self.pinned, other.pinned))

    __hash__ = None

    def __repr__(self):
        return (f"MapState({self.domain.kind}, n={self.domain.num_vertices}, "
                f"target={self.space.kind})")


def _edge_sq(u: MapState) -> np.ndarray:
    e = u.domain.edges
    return u.space.dist_raw(u.values[e[:, 0]], u.values[e[:, 1]]) ** 2


def edge_density(domain: MeshDomain, edge_vals: np.ndarray) -> np.ndarray:
    """(1/(2 mu_i)) sum over edges at i of w_e * edge_vals_e."""
    e = domain.edges
    we = domain.weights * edge_vals
    s = np.bincount(e[:, 0], we, domain.num_vertices) + np.bincount(e[:, 1], we, domain.num_vertices)
    return s / (2.0 * domain.mu)


def energy(u: MapState):
    """Discrete energy and its density.

    Returns
    -------
    total : float
        ``sum_edges w_e d^2(u_i, u_j)``
    density : ndarray
        ``e_i = (1/(2 mu_i)) sum_j w_ij d^2(u_i, u_j)``
    """
    d2 = _edge_sq(u)
    return float(np.dot(u.domain.weights, d2)), edge_density(u.domain, d2)


def l2_distance(u: MapState, v: MapState) -> float:
    u.same_setting(v)
    d = u.space.dist_raw(u.values, v.values)
    return float(np.sqrt(np.dot(u.domain.mu, d**2)))


def laplacian(domain: MeshDomain, f) -> np.ndarray:
    """Graph Laplacian ``(1/mu_i) sum_j w_ij (f_j - f_i)`` on every vertex."""
    f = domain.field(f)
    return -(domain.stiffness @ f) / domain.mu


def heat_evolve(domain: MeshDomain, f, s: float, substeps: int = 1) -> np.ndarray:
    """Discrete heat semigroup by ``substeps`` implicit Euler steps of size s/substeps.

    Each step solves ``(M + h L) x = M f`` with the lumped mass ``M`` and the
    stiffness matrix ``L``; the factorization is reused across steps.
    """
    f = domain.field(f)
    if not s > 0:
        raise InvalidParameterError("heat time s must be positive")
    if int(substeps) != substeps or substeps < 1:
        raise InvalidParameterError("substeps must be a positive integer")
    h = s / substeps
    A = (sp.diags(domain.mu) + h * domain.stiffness).tocsc()
    try:
        lu = splu(A)
    except RuntimeError as exc:
        raise SingularSolveError(str(exc)) from exc
    x = f
    for _ in range(int(substeps)):
        x = lu.solve(domain.mu * x)
    if not np.all(np.isfinite(x)):
        raise SingularSolveError("heat solve produced non-finite values")
    return x


# ---------------------------------------------------------------------------
# continuum approximating energy on fine lattices
# ---------------------------------------------------------------------------
def poincare_constant(domain: MeshDomain) -> float:
    """Best constant ``c`` in ``sum mu f^2 <= c sum w (f_i - f_j)^2``.

    On domains with boundary ``f`` ranges over functions vanishing there; on
    closed domains over functions of zero mean.  Computed as the inverse of
    the smallest relevant generalized eigenvalue of ``(L, M)``.  Reported as
    a diagnostic only.
    """
    L = domain.stiffness.toarray()
    M = np.diag(domain.mu)
    if domain.closed:
        lam = scipy.linalg.eigh(L, M, eigvals_only=True)
        return float(1.0 / lam[1])
    free = ~domain.boundary
    lam = scipy.linalg.eigh(L[np.ix_(free, free)], M[np.ix_(free, free)], eigvals_only=True)
    return float(1.0 / lam[0])


@dataclass(frozen=True)
class KSProfile:
    """Approximating energy density sampled at the admissible lattice sites."""

    index: np.ndarray  # lattice indices, shape (k,) or (k, 2)
    positions: np.ndarray
    values: np.ndarray


def _half_line_weights(kfull: int, frac: float) -> np.ndarray:
    """Quadrature weights (in units of the spacing) on nodes 0..kfull for [0, kfull+frac].

    Composite Simpson on the whole panels (a 3/8 panel fixes odd counts) and
    a quadratic extrapolation through the last three nodes for the fractional
    tail.  Exact for quadratic integrands.
    """
    w = np.zeros(kfull + 1)
    k = kfull
    if k % 2 == 1:
        w[k - 3:k + 1] += np.array([3, 9, 9, 3]) / 8.0
        k -= 3
    for a in range(0, k, 2):
        w[a:a + 3] += np.array([1, 4, 1]) / 3.0
    if frac > 0:
        nodes = np.array([kfull - 2, kfull - 1, kfull], dtype=float)
        for m in range(3):
            others = np.delete(nodes, m)
            poly = np.poly1d(others, r=True) / np.prod(nodes[m] - others)
            integ = poly.integ()
            w[kfull - 2 + m] += integ(kfull + frac) - integ(kfull)
    return w


def _disk_weights(radius_cells: float, supersample: int = 16):
    """Area of each lattice cell (unit spacing) inside the disk of given radius."""
    r = int(np.ceil(radius_cells + 0.5))
    offs = np.arange(-r, r + 1)
    sub = (np.arange(supersample) + 0.5) / supersample - 0.5
    ox, oy = np.meshgrid(offs, offs, indexing="ij")
    fx = ox[..., None, None] + sub[:, None]
    fy = oy[..., None, None] + sub[None, :]
    inside = (fx**2 + fy**2) <= radius_cells**2
    area = inside.mean(axis=(-1, -2))
    keep = area > 0
    return ox[keep], oy[keep], area[keep]


def ks_energy_profile(samples, spacing: float, eps: float, space: TargetSpace | None = None,
                      dim: int | None = None):
    """Korevaar-Schoen approximating energy density on a 1-D or 2-D lattice.

    ``e_eps(x) = c_{n,2} eps^{-(n+2)} int_{B_eps(x)} d^2(u(x), u(y)) dy`` with
    ``c_{1,2} = 3/2`` and ``c_{2,2} = 4/pi``.  The ball integral is evaluated
    by piecewise-quadratic quadrature in 1-D and by cell-coverage weights in
    2-D, at every site at least ``eps`` away from the lattice boundary.

    Parameters
    ----------
    samples : ndarray
        Shape (n,) or (n, ncoord) for a 1-D lattice, (n1, n2) or
        (n1, n2, ncoord) for a 2-D lattice.
    spacing : float
        Lattice spacing.
    eps : float
        Ball radius, at least ``2*spacing``.
    space : TargetSpace, optional
        Target of the samples; the real line by default.
    dim : int, optional
        Lattice dimension; inferred from the sample shape when omitted.
    """
    samples = np.asarray(samples, dtype=float)
    if not spacing > 0:
        raise InvalidParameterError("lattice spacing must be positive")
    if not eps >= 2 * spacing * (1 - 1e-12):
        raise InvalidParameterError("eps must be at least twice the lattice spacing")
    if space is None:
        space = Euclidean(1)
    ncoord = space.ncoord
    if dim is None:
        dim = samples.ndim - (0 if ncoord == 1 else 1)
    if dim not in (1, 2) or samples.ndim not in (dim, dim + 1):
        raise InvalidParameterError(f"cannot interpret samples of shape {samples.shape}")
    if samples.ndim == dim:
        samples = samples[..., None]
    if samples.shape[-1] != ncoord:
        raise InvalidParameterError("sample coordinates do not match the target space")
    ratio = eps / spacing
    kfull = int(np.floor(ratio + 1e-9))
    frac = max(ratio - kfull, 0.0)
    if frac < 1e-9:
        frac = 0.0
    reach = kfull + (1 if frac > 0 else 0)  # sites need the whole ball inside

    if dim == 1:
        n = samples.shape[0]
        lo, hi = reach, n - 1 - reach
        if hi < lo:
            raise InvalidParameterError("eps too large for the lattice")
        half = _half_line_weights(kfull, frac) * spacing
        idx = np.arange(lo, hi + 1)
        acc = np.zeros(len(idx))
        base = samples[idx]
        for k in range(1, kfull + 1):
            g = space.dist_raw(base, samples[idx + k]) ** 2 + space.dist_raw(base, samples[idx - k]) ** 2
            acc += half[k] * g
        vals = 1.5 * eps**-3 * acc
        return KSProfile(index=idx, positions=idx * spacing, values=vals)

    n1, n2 = samples.shape[:2]
    ox, oy, area = _disk_weights(ratio)
    r = int(max(np.abs(ox).max(), np.abs(oy).max()))
    if n1 - 2 * r < 1 or n2 - 2 * r < 1:
        raise InvalidParameterError("eps too large for the lattice")
    ii, jj = np.meshgrid(np.arange(r, n1 - r), np.arange(r, n2 - r), indexing="ij")
    ii, jj = ii.ravel(), jj.ravel()
    base = samples[ii, jj]
    acc = np.zeros(len(ii))
    for a, b, wgt in zip(ox, oy, area):
        if a == 0 and b == 0:
            continue
        acc += wgt * space.dist_raw(base, samples[ii + a, jj + b]) ** 2
    vals = (4.0 / pi) * eps**-4 * acc * spacing**2
    return KSProfile(index=np.stack([ii, jj], axis=1),
                     positions=np.stack([ii, jj], axis=1) * spacing, values=vals)
