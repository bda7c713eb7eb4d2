"""Residuals of the regularity inequalities along discrete flows.

Every weak-form check pairs a per-vertex integrand ``g_i`` with nonnegative
test fields ``phi`` through ``sum_i mu_i phi_i g_i``; the time derivative is
the backward difference over the recorded step, matching the implicit Euler
construction of the flow.  Results come back as :class:`CheckReport`.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DomainMismatchError, InvalidParameterError, PreconditionError
from .flow import FlowTrace
from .mesh import MapState, MeshDomain, edge_density, energy, heat_evolve, laplacian
from .target import Point

__all__ = [
    "CheckReport",
    "HJField",
    "LipReport",
    "PhiInterpolation",
    "hat_tests",
    "r_density",
    "phi_interpolation_residuals",
    "subsolution_residuals",
    "distance_subsolution_residuals",
    "lip_fields",
    "lip_report",
    "mean_value_residual",
    "hj_flow",
    "hj_constants",
    "hj_checks",
    "bochner_residuals",
    "gradient_sq",
]


@dataclass
class CheckReport:
    """Outcome of one inequality check.

    ``sense`` is ``">="`` when the residual must stay above ``-tolerance``
    and ``"<="`` when it must stay below ``+tolerance``.
    """

    check: str
    paper_anchor: str
    tolerance: float
    min: float
    mean: float
    max: float
    passed: bool
    sense: str = ">="
    scenario: str = ""
    seed: int | None = None
    weak: np.ndarray | None = field(default=None, repr=False)
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_residuals(cls, check, anchor, residuals, tolerance, sense=">=", **kw):
        r = np.asarray(residuals, dtype=float)
        if r.size == 0:
            raise PreconditionError(f"{check}: no residuals to report")
        lo, mean, hi = float(r.min()), float(r.mean()), float(r.max())
        ok = lo >= -tolerance if sense == ">=" else hi <= tolerance
        return cls(check, anchor, float(tolerance), lo, mean, hi, bool(ok), sense,
                   weak=r, **kw)

    @property
    def deficit(self) -> float:
        """How far the worst residual sits on the wrong side of zero (>= 0)."""
        return max(0.0, -self.min) if self.sense == ">=" else max(0.0, self.max)

    def to_json(self) -> dict:
        d = asdict(self)
        d.pop("weak")
        d["pass"] = d.pop("passed")
        extra = d.pop("extra")
        out = {k: d[k] for k in ("check", "paper_anchor", "tolerance", "min", "mean", "max",
                                 "pass", "scenario", "seed")}
        out["sense"] = d["sense"]
        for k in ("tolerance", "min", "mean", "max"):
            if not np.isfinite(out[k]):
                out[k] = None
        if extra:
            out["extra"] = extra
        return out


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------
def hat_tests(domain: MeshDomain, radius: int = 2, centers=None) -> np.ndarray:
    """Graph hat functions ``max(0, 1 - hops(c, j)/radius)``, zeroed on the boundary.

    One row per center; centers default to every interior vertex.
    """
    if radius < 1:
        raise InvalidParameterError("hat radius must be at least one hop")
    hops = domain.hops()
    if centers is None:
        centers = np.flatnonzero(domain.interior)
    phi = np.clip(1.0 - hops[np.asarray(centers)] / radius, 0.0, None)
    phi[:, domain.boundary] = 0.0
    return phi


def _check_tests(domain, tests):
    phi = np.atleast_2d(np.asarray(tests, dtype=float))
    if phi.shape[1] != domain.num_vertices:
        raise DomainMismatchError("test fields do not match the domain")
    if np.any(phi < 0):
        raise InvalidParameterError("test fields must be nonnegative")
    if np.any(phi[:, domain.boundary] != 0):
        raise InvalidParameterError("test fields must vanish on the boundary")
    return phi


def _pair(phi, mu, integrand):
    """Weak pairing: (ntests,) from integrand (N,) or (T, ntests) from (T, N)."""
    return (np.atleast_2d(integrand) * mu) @ phi.T


def gradient_sq(domain: MeshDomain, f) -> np.ndarray:
    """Discrete ``|grad f|^2_i = (1/(2 mu_i)) sum_j w_ij (f_j - f_i)^2``."""
    e = domain.edges
    return edge_density(domain, (f[e[:, 1]] - f[e[:, 0]]) ** 2)


def _edge_dist(u: MapState):
    e = u.domain.edges
    return u.space.dist_raw(u.values[e[:, 0]], u.values[e[:, 1]])


def _same_grid(a: FlowTrace, b: FlowTrace):
    a.states[0].same_setting(b.states[0])
    if len(a.times) != len(b.times) or not np.allclose(a.times, b.times, rtol=0, atol=1e-14):
        raise DomainMismatchError("traces are recorded on different time grids")


# ---------------------------------------------------------------------------
# R-density and the phi-interpolation comparison
# ---------------------------------------------------------------------------
def r_density(u: MapState, v: MapState) -> np.ndarray:
    """``R_i = (1/(2 mu_i)) sum_j w_ij (d(u_i,u_j) - d(v_i,v_j))^2``."""
    u.same_setting(v)
    return edge_density(u.domain, (_edge_dist(u) - _edge_dist(v)) ** 2)


@dataclass
class PhiInterpolation:
    edge_residuals: np.ndarray
    total: float
    lhs: float
    rhs: float


def phi_interpolation_residuals(u: MapState, v: MapState, phi) -> PhiInterpolation:
    """Residual (RHS - LHS) of the energy comparison for fiberwise interpolations.

    ``u_phi(i)`` sits at fraction ``phi_i`` along the geodesic from ``u_i`` to
    ``v_i`` and ``v_phi(i)`` at fraction ``1 - phi_i``.  With
    ``W_i = d^2(u_i, v_i)`` the right-hand side is

        - sum_e w_e (phi_i - phi_j) [(1 - 2 phi_i) W_i - (1 - 2 phi_j) W_j]
        - 2 sum_i mu_i (phi_i - phi_i^2) R_i
        + sum_e w_e |phi_i - phi_j| (d_v,e - d_u,e)^2

    and the left-hand side is ``E[u_phi] + E[v_phi] - E[u] - E[v]``.  The
    returned per-edge residuals split the R term over edges and sum to
    ``total``; each of them is nonnegative in a CAT(0) target.
    """
    u.same_setting(v)
    dom, space = u.domain, u.space
    phi = dom.field(phi)
    if np.any(phi < 0) or np.any(phi > 1):
        raise InvalidParameterError("phi must take values in [0, 1]")
    if np.any(phi[dom.boundary] != 0):
        raise InvalidParameterError("phi must vanish on the boundary")
    uphi = space.geodesic_raw(u.values, v.values, phi)
    vphi = space.geodesic_raw(u.values, v.values, 1.0 - phi)
    e0, e1 = dom.edges[:, 0], dom.edges[:, 1]
    w = dom.weights
    du, dv = _edge_dist(u), _edge_dist(v)
    W = space.dist_raw(u.values, v.values) ** 2
    lhs_e = w * (space.dist_raw(uphi[e0], uphi[e1]) ** 2 + space.dist_raw(vphi[e0], vphi[e1]) ** 2
                 - du**2 - dv**2)
    pi, pj = phi[e0], phi[e1]
    diff2 = (dv - du) ** 2
    rhs_e = (-w * (pi - pj) * ((1 - 2 * pi) * W[e0] - (1 - 2 * pj) * W[e1])
             - w * ((pi - pi**2) + (pj - pj**2)) * diff2
             + w * np.abs(pi - pj) * diff2)
    res = rhs_e - lhs_e
    return PhiInterpolation(edge_residuals=res, total=float(res.sum()),
                            lhs=float(lhs_e.sum()), rhs=float(rhs_e.sum()))


# ---------------------------------------------------------------------------
# subsolution checks
# ---------------------------------------------------------------------------
def subsolution_residuals(u_trace: FlowTrace, v_trace: FlowTrace, tests, C: float = 1.0,
                          scenario: str = "") -> CheckReport:
    """Weak residual of ``(Lap - d/dt) d^2(u, v) >= 2 R_{u,v}`` on twin traces.

    For every recorded time after the first and every test field the value
    ``sum_i mu_i phi_i [Lap w - (w^t - w^{t-s})/s - 2 R]`` is computed with
    ``w = d^2(u^t, v^t)``.  Passes when the minimum is ``>= -C s``.
    """
    _same_grid(u_trace, v_trace)
    dom = u_trace.domain
    phi = _check_tests(dom, tests)
    s = u_trace.uniform_step()
    space = u_trace.space
    W = np.stack([space.dist_raw(a.values, b.values) ** 2
                  for a, b in zip(u_trace.states, v_trace.states)])
    rows = []
    for k in range(1, len(W)):
        R = r_density(u_trace.states[k], v_trace.states[k])
        g = laplacian(dom, W[k]) - (W[k] - W[k - 1]) / s - 2.0 * R
        rows.append(_pair(phi, dom.mu, g)[0])
    return CheckReport.from_residuals("subsolution", "Theorem 3.4 Eq. (3.5)", np.array(rows),
                                      C * s, scenario=scenario, extra={"step": s})


def distance_subsolution_residuals(trace: FlowTrace, P: Point, tests, C: float = 1.0,
                                   scenario: str = ""):
    """Weak residuals for the squared distance and the distance to a fixed point.

    Returns two reports: (a) ``(Lap - d/dt) d^2(P, u) >= 2 e_u`` and
    (b) ``(Lap - d/dt) d(P, u) >= 0``, both passing at ``>= -C s``.
    Report (b) also records the a-priori bound ``s sum mu phi (d_t f)^2/(2 f)``
    on its deficit, which follows from (a) and the triangle inequality.
    """
    dom, space = trace.domain, trace.space
    c = space.check(P)
    phi = _check_tests(dom, tests)
    s = trace.uniform_step()
    F = np.stack([space.dist_raw(st.values, c) for st in trace.states])
    G = F**2
    ra, rb, bound = [], [], []
    for k in range(1, len(F)):
        e_u = energy(trace.states[k])[1]
        ga = laplacian(dom, G[k]) - (G[k] - G[k - 1]) / s - 2.0 * e_u
        gb = laplacian(dom, F[k]) - (F[k] - F[k - 1]) / s
        ra.append(_pair(phi, dom.mu, ga)[0])
        rb.append(_pair(phi, dom.mu, gb)[0])
        dt = (F[k] - F[k - 1]) / s
        slack = np.where(F[k] > 0, s * dt**2 / (2.0 * np.where(F[k] > 0, F[k], 1.0)), 0.0)
        bound.append(_pair(phi, dom.mu, slack)[0])
    rep_a = CheckReport.from_residuals("distance_sq_subsolution", "Corollary 3.5 Eq. (3.7)",
                                       np.array(ra), C * s, scenario=scenario,
                                       extra={"step": s})
    rep_b = CheckReport.from_residuals("distance_subsolution", "Corollary 3.5 Eq. (3.8)",
                                       np.array(rb), C * s, scenario=scenario,
                                       extra={"step": s, "deficit_bound": float(np.max(bound))})
    return rep_a, rep_b


# ---------------------------------------------------------------------------
# Lipschitz quantities
# ---------------------------------------------------------------------------
def _pairs_within(domain: MeshDomain, r: float):
    D = domain.graph_distances()
    i, j = np.nonzero((D > 0) & (D <= r * (1 + 1e-12)))
    return i, j, D[i, j]


def lip_fields(u: MapState, radii) -> np.ndarray:
    """``lip_r u(i) = max_{0 < gd(i,j) <= r} d(u_i, u_j)/gd(i,j)`` for each radius.

    Returns an array of shape (len(radii), n).
    """
    dom = u.domain
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    if np.any(radii < dom.spacing * (1 - 1e-12)):
        raise InvalidParameterError("radii must be at least the graph spacing")
    i, j, gd = _pairs_within(dom, radii.max())
    q = u.space.dist_raw(u.values[i], u.values[j]) / gd
    out = np.zeros((len(radii), dom.num_vertices))
    for k, r in enumerate(radii):
        m = gd <= r * (1 + 1e-12)
        np.maximum.at(out[k], i[m], q[m])
    return out


@dataclass
class LipReport:
    radii: np.ndarray
    times: np.ndarray
    spatial: np.ndarray          # (ntimes, nradii, n)
    temporal: dict               # gap s -> (start times, ratios (k, n))
    spatial_constant: float
    temporal_constant: float


def lip_report(trace: FlowTrace, t_star: float, radii) -> LipReport:
    """Spatial lip_r fields and temporal difference quotients along a trace.

    The temporal part collects ``d(u_i^t, u_i^{t+s})/s`` for every start time
    ``t >= t_star`` and every gap ``s`` that is a power-of-two multiple of the
    smallest recorded step.  The fitted constants are the largest nearest
    neighbour lip value and the largest temporal ratio after ``t_star``.
    """
    times = trace.times
    if not times[0] <= t_star <= times[-1]:
        raise InvalidParameterError("t_star must lie inside the recorded time span")
    radii = np.sort(np.atleast_1d(np.asarray(radii, dtype=float)))
    spatial = np.stack([lip_fields(st, radii) for st in trace.states])
    vals = trace.values()
    space = trace.space
    base = float(np.min(np.diff(times))) if len(times) > 1 else 0.0
    temporal = {}
    start = np.flatnonzero(times >= t_star - 1e-12)
    gap = 1
    while base > 0 and start.size and start[0] + gap < len(times):
        s = times[start[0] + gap] - times[start[0]]
        idx = start[start + gap < len(times)]
        gaps = times[idx + gap] - times[idx]
        ok = np.abs(gaps - s) <= 1e-9 * s
        idx = idx[ok]
        ratios = space.dist_raw(vals[idx], vals[idx + gap]) / s
        temporal[float(s)] = (times[idx], ratios)
        gap *= 2
    after = times >= t_star - 1e-12
    sc = float(spatial[after, 0].max()) if after.any() else float("nan")
    tc = max((float(r.max()) for _, r in temporal.values() if r.size), default=float("nan"))
    return LipReport(radii, times, spatial, temporal, sc, tc)


# ---------------------------------------------------------------------------
# mean-value inequality
# ---------------------------------------------------------------------------
def _interp_series(times, series, t):
    k = np.searchsorted(times, t - 1e-12)
    if k < len(times) and abs(times[k] - t) <= 1e-12 * max(1.0, abs(t)):
        return series[k]
    if k == 0 or k >= len(times):
        raise PreconditionError(f"time {t} outside the recorded series")
    a = (t - times[k - 1]) / (times[k] - times[k - 1])
    return (1 - a) * series[k - 1] + a * series[k]


def mean_value_residual(domain: MeshDomain, times, g_series, f_series, x0: int, t0: float,
                        s: float, substeps: int) -> float:
    """``H_s[g(., t0-s)](x0) - g(x0, t0) - int_0^s H_tau[f(., t0-tau)](x0) dtau``.

    ``H`` is the discrete heat semigroup advanced by implicit Euler steps of
    size ``h = s/substeps``, i.e. ``H_{kh} = (I - h Lap)^{-k}``.  The time
    integral is the matching discrete Duhamel sum
    ``h sum_{k<substeps} H_{(k+1)h}[f(., t0 - k h)]``, so the residual is
    nonpositive (up to solver tolerance) whenever the backward-difference
    inequality ``Lap g^k - (g^k - g^{k-1})/h <= f^k`` holds pointwise on a
    trace with step ``h``.  Series values between recorded times are
    interpolated linearly.
    """
    times = np.asarray(times, dtype=float)
    g_series = np.asarray(g_series, dtype=float)
    f_series = np.asarray(f_series, dtype=float)
    if g_series.shape != f_series.shape or g_series.shape[0] != len(times):
        raise DomainMismatchError("series and time grid do not match")
    if int(substeps) != substeps or substeps < 1 or not s > 0:
        raise InvalidParameterError("need s > 0 and a positive integer substeps")
    if t0 - s < times[0] - 1e-12 or t0 > times[-1] + 1e-12:
        raise PreconditionError("series too short for the requested window")
    h = s / substeps
    g_start = _interp_series(times, g_series, t0 - s)
    hg = heat_evolve(domain, g_start, s, int(substeps))[x0]
    g_end = _interp_series(times, g_series, t0)[x0]
    integral = 0.0
    for k in range(int(substeps)):
        fk = _interp_series(times, f_series, t0 - k * h)
        integral += h * heat_evolve(domain, fk, (k + 1) * h, k + 1)[x0]
    return float(hg - g_end - integral)


# ---------------------------------------------------------------------------
# Hamilton-Jacobi flow
# ---------------------------------------------------------------------------
@dataclass
class HJField:
    """Discrete inf-convolution ``f_{eps,p}`` on a trace.

    ``values[k, i]`` is NaN at vertices whose search ball reaches the
    boundary.  ``argmin_dist`` holds the graph distance of a minimizer.
    """

    eps: float
    p: int
    K: float
    M0: float
    T: float
    R: float
    eps0: float
    C1: float
    radius: float
    times: np.ndarray
    admissible: np.ndarray
    values: np.ndarray
    argmin_dist: np.ndarray

    @property
    def q(self) -> float:
        return self.p / (self.p - 1)


def hj_constants(K: float, M0: float, T: float, R: float = 1.0):
    """``(eps0, C1)`` with ``eps0 = e^{-2|K|T} R^2/(8 M0)``, ``C1 = sqrt(6 M0 e^{2|K|T})``."""
    if not M0 > 0 or T < 0:
        raise InvalidParameterError("need M0 > 0 and T >= 0")
    growth = np.exp(2 * abs(K) * T)
    return R**2 / (8.0 * M0 * growth), float(np.sqrt(6.0 * M0 * growth))


def hj_flow(trace: FlowTrace, eps: float, p: int = 2, K: float = 0.0, M0: float = 1.0,
            T: float | None = None, R: float = 1.0) -> HJField:
    """Evaluate ``f_{eps,p}`` on every recorded state.

    ``f(i, t) = min_j [e^{-pKt} gd(i,j)^p/(p eps^{p-1}) - d(u_i^t, u_j^t)]`` with
    ``j`` ranging over the graph ball of radius ``C1 sqrt(eps)`` around ``i``.
    Only vertices whose ball stays off the boundary are evaluated.
    """
    if int(p) != p or p < 2:
        raise InvalidParameterError("p must be an integer >= 2")
    if K > 0:
        raise InvalidParameterError("K must be <= 0")
    T = float(trace.times[-1]) if T is None else float(T)
    eps0, C1 = hj_constants(K, M0, T, R)
    if not 0 < eps < eps0:
        raise InvalidParameterError(f"eps={eps} must lie in (0, eps0) with eps0={eps0:.6g}")
    dom = trace.domain
    radius = C1 * np.sqrt(eps)
    D = dom.graph_distances()
    ball = D <= radius * (1 + 1e-12)
    admissible = ~np.any(ball & dom.boundary[None, :], axis=1)
    if not admissible.any():
        raise PreconditionError("no vertex has a search ball avoiding the boundary")
    i, j = np.nonzero(ball & admissible[:, None])
    order = np.lexsort((j, i))
    i, j = i[order], j[order]
    gd = D[i, j]
    starts = np.flatnonzero(np.r_[True, i[1:] != i[:-1]])
    rows = i[starts]
    vals = trace.values()
    space = trace.space
    out = np.full((len(vals), dom.num_vertices), np.nan)
    amin = np.full((len(vals), dom.num_vertices), np.nan)
    base = gd**p / (p * eps ** (p - 1))
    for k, t in enumerate(trace.times):
        cand = np.exp(-p * K * t) * base - space.dist_raw(vals[k][i], vals[k][j])
        best = np.minimum.reduceat(cand, starts)
        out[k, rows] = best
        # graph distance of the first minimizer in each block
        is_min = cand == np.repeat(best, np.diff(np.r_[starts, len(cand)]))
        first = np.full(dom.num_vertices, np.inf)
        np.minimum.at(first, i[is_min], gd[is_min])
        amin[k, rows] = first[rows]
    return HJField(eps=float(eps), p=int(p), K=float(K), M0=float(M0), T=T, R=float(R),
                   eps0=eps0, C1=C1, radius=float(radius), times=trace.times.copy(),
                   admissible=admissible, values=out, argmin_dist=amin)


def hj_checks(hj: HJField, trace: FlowTrace, tests, C: float = 10.0, scenario: str = ""):
    """Supersolution, gradient-bound and small-eps limit reports for an HJ field.

    Returns a dict with keys ``"supersolution"`` (weak residual of
    ``(Lap - d/dt) f <= C (s + delta)``), ``"gradient_bound"`` (minimum of
    ``2 e^{2|K|T} lip_{C1 sqrt(eps)}^2 + f/eps``, must be ``>= -1e-9``),
    ``"range"`` (values inside ``[-2 M0, 0]`` and minimizers inside the
    search ball) and ``"limit"`` (``f/eps + (e^{Kt} lip)^q/q`` at the
    nearest-neighbour lip, reported but not asserted).
    """
    dom = trace.domain
    adm = hj.admissible
    f = hj.values
    # gradient bound
    lipR = np.stack([lip_fields(st, [max(hj.radius, dom.spacing)])[0] for st in trace.states])
    gb = 2.0 * np.exp(2 * abs(hj.K) * hj.T) * lipR[:, adm] ** 2 + f[:, adm] / hj.eps
    rep_gb = CheckReport.from_residuals("hj_gradient_bound", "Lemma 7.7 Eq. (7.20)", gb, 1e-9,
                                        scenario=scenario, extra={"eps": hj.eps, "p": hj.p})
    # range and localization
    lo = float(np.nanmin(f[:, adm]))
    hi = float(np.nanmax(f[:, adm]))
    far = float(np.nanmax(hj.argmin_dist[:, adm])) - hj.radius
    rng_res = np.array([lo + 2 * hj.M0, -hi, -far])
    rep_rng = CheckReport.from_residuals("hj_range", "Lemma 7.1", rng_res, 1e-12,
                                         scenario=scenario, extra={"eps": hj.eps})
    # supersolution: tests supported where f and its Laplacian are defined
    phi = _check_tests(dom, tests)
    inner = adm.copy()
    e0, e1 = dom.edges[:, 0], dom.edges[:, 1]
    bad = ~adm
    near_bad = bad.copy()
    near_bad[e0[bad[e1]]] = True
    near_bad[e1[bad[e0]]] = True
    inner &= ~near_bad
    phi = phi[~np.any(phi[:, ~inner] > 0, axis=1)]
    if len(phi) == 0:
        raise PreconditionError("no test field is supported inside the HJ admissible set")
    s = trace.uniform_step()
    fz = np.nan_to_num(f, nan=0.0)
    rows = []
    for k in range(1, len(f)):
        g = laplacian(dom, fz[k]) - (fz[k] - fz[k - 1]) / s
        rows.append(_pair(phi, dom.mu, np.where(inner, g, 0.0))[0])
    rep_sup = CheckReport.from_residuals("hj_supersolution", "Lemma 7.6", np.array(rows),
                                         C * (s + dom.spacing), sense="<=", scenario=scenario,
                                         extra={"eps": hj.eps, "step": s,
                                                "spacing": dom.spacing})
    # small-eps limit at the nearest-neighbour lip
    lip1 = np.stack([lip_fields(st, [dom.spacing])[0] for st in trace.states])
    tK = np.exp(hj.K * hj.times)[:, None]
    lim = f[:, adm] / hj.eps + (tK * lip1[:, adm]) ** hj.q / hj.q
    rep_lim = CheckReport.from_residuals("hj_limit", "Lemma 8.3 Eq. (8.5)", np.abs(lim), np.inf,
                                         sense="<=", scenario=scenario,
                                         extra={"eps": hj.eps, "p": hj.p})
    return {"supersolution": rep_sup, "gradient_bound": rep_gb, "range": rep_rng,
            "limit": rep_lim}


# ---------------------------------------------------------------------------
# Bochner inequality
# ---------------------------------------------------------------------------
def bochner_residuals(trace: FlowTrace, K: float, tests, C: float = 1.0,
                      scenario: str = "") -> CheckReport:
    """Weak residual of ``(Lap - d/dt) l^2 >= 2 |grad l|^2 + 2 K l^2``.

    ``l`` is the nearest-neighbour lip field of each recorded state.
    Passes when the minimum over times and tests is ``>= -C (s + delta)``.
    """
    dom = trace.domain
    phi = _check_tests(dom, tests)
    s = trace.uniform_step()
    ell = np.stack([lip_fields(st, [dom.spacing])[0] for st in trace.states])
    L2 = ell**2
    rows = []
    for k in range(1, len(ell)):
        g = (laplacian(dom, L2[k]) - (L2[k] - L2[k - 1]) / s
             - 2.0 * gradient_sq(dom, ell[k]) - 2.0 * K * L2[k])
        rows.append(_pair(phi, dom.mu, g)[0])
    return CheckReport.from_residuals("bochner", "Theorem 8.1 Eq. (8.1)", np.array(rows),
                                      C * (s + dom.spacing), scenario=scenario,
                                      extra={"step": s, "spacing": dom.spacing, "K": K})
