"""Resolvent, Crandall-Liggett iteration and flow-level checks.

The resolvent ``J_h(u0)`` minimizes ``E[u]/2 + D^2(u, u0)/(2h)`` over maps
that agree with ``u0`` on the pinned vertices.  It is computed by block
Gauss-Seidel: every free vertex is replaced by the weighted barycenter of its
neighbours (weights ``w_ij``) together with ``u0_i`` (weight ``mu_i/h``).
Each such update minimizes the objective in that vertex exactly, so the
objective never increases from one sweep to the next.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BarycenterConvergenceError,
    DomainMismatchError,
    InvalidParameterError,
    PreconditionError,
    SweepLimitError,
)
from .mesh import MapState, energy, l2_distance
from .target import Point

__all__ = [
    "resolvent",
    "resolvent_objective",
    "crandall_liggett",
    "flow_run",
    "FlowTrace",
    "StepInfo",
    "evi_residual",
    "semigroup_residual",
    "confinement_check",
    "harmonic_map",
    "minimality_margin",
    "SWEEP_ORDERS",
]

SWEEP_ORDERS = ("colored", "sequential")


@dataclass
class StepInfo:
    """Diagnostics for one recorded interval of a trace."""

    m: int
    h: float
    sweeps: int
    displacement: float
    objective: float


def resolvent_objective(u: MapState, u0: MapState, h: float) -> float:
    """``E[u]/2 + D^2(u, u0)/(2h)``."""
    return 0.5 * energy(u)[0] + l2_distance(u, u0) ** 2 / (2.0 * h)


def _sweep_classes(domain, free, order):
    if order == "sequential":
        return [np.array([i]) for i in np.flatnonzero(free)]
    if order == "colored":
        cls = []
        for c in np.unique(domain.colors):
            idx = np.flatnonzero((domain.colors == c) & free)
            if len(idx):
                cls.append(idx)
        return cls
    raise InvalidParameterError(f"unknown sweep order {order!r}; expected one of {SWEEP_ORDERS}")


def _gauss_seidel(u0: MapState, h, tol, max_sweeps, order, anchor_weight=True, init=None):
    """Shared sweep loop; returns (values, sweeps, last displacement)."""
    dom, space = u0.domain, u0.space
    free = ~u0.pinned
    vals = np.array(u0.values if init is None else init.values, dtype=float)
    classes = _sweep_classes(dom, free, order)
    if not classes:
        return vals, 0, 0.0
    inner_tol = max(tol * 1e-2, 1e-14)
    disp = np.inf
    for sweep in range(1, max_sweeps + 1):
        disp = 0.0
        for idx in classes:
            pts = vals[dom.nbr[idx]]
            wts = dom.nbr_w[idx]
            if anchor_weight:
                pts = np.concatenate([pts, u0.values[idx][:, None, :]], axis=1)
                wts = np.concatenate([wts, (dom.mu[idx] / h)[:, None]], axis=1)
            old = vals[idx]
            new = space.barycenter_raw(pts, wts, tol=inner_tol, init=old)
            vals[idx] = new
            disp = max(disp, float(np.max(space.dist_raw(old, new))))
        if disp < tol:
            return vals, sweep, disp
    raise SweepLimitError(
        f"no convergence after {max_sweeps} sweeps (last displacement {disp:.3e})",
        last_iterate=u0.with_values(vals),
        displacement=disp,
    )


def resolvent(u0: MapState, h: float, tol: float = 1e-10, max_sweeps: int = 10000,
              order: str = "colored", return_info: bool = False):
    """One implicit Euler step ``J_h(u0)``.

    Parameters
    ----------
    u0 : MapState
        Starting map; its pinned vertices are never moved.
    h : float
        Step size, positive.
    tol : float
        Stop once no vertex moves more than ``tol`` in a sweep.
    max_sweeps : int
        Sweep cap; exceeding it raises :class:`SweepLimitError`.
    order : {"colored", "sequential"}
        ``"sequential"`` visits free vertices in ascending id.  ``"colored"``
        updates one graph color class at a time (vectorized); both converge to
        the same unique minimizer.
    return_info : bool
        Also return ``(sweeps, displacement)``.

    Examples
    --------
    >>> from cat0flow import build_domain, Euclidean, MapState
    >>> u0 = MapState(build_domain("interval-dirichlet", 3, 2.0), Euclidean(1), [0, 1, 0])
    >>> float(resolvent(u0, 1.0).values[1, 0])  # doctest: +ELLIPSIS
    0.33333333...
    """
    if not h > 0:
        raise InvalidParameterError("step size h must be positive")
    vals, sweeps, disp = _gauss_seidel(u0, h, tol, max_sweeps, order)
    out = u0.with_values(vals)
    return (out, sweeps, disp) if return_info else out


def harmonic_map(u0: MapState, tol: float = 1e-10, max_sweeps: int = 200000,
                 order: str = "colored") -> MapState:
    """Discrete harmonic map with the boundary data of ``u0``, by sweeps on E alone."""
    if not u0.pinned.any():
        raise PreconditionError("harmonic map needs pinned boundary vertices")
    vals, _, _ = _gauss_seidel(u0, 1.0, tol, max_sweeps, order, anchor_weight=False)
    return u0.with_values(vals)


def _chain(u0, t, m, tol, max_sweeps, order):
    if not t > 0:
        raise InvalidParameterError("time t must be positive")
    if int(m) != m or m < 1:
        raise InvalidParameterError("m must be a positive integer")
    h = t / m
    u = u0
    sweeps, disp = 0, 0.0
    for k in range(int(m)):
        try:
            u, s_k, d_k = resolvent(u, h, tol, max_sweeps, order, return_info=True)
        except SweepLimitError as exc:
            exc.step_index = k
            raise
        except BarycenterConvergenceError as exc:
            raise BarycenterConvergenceError(
                f"{exc} (implicit step {k})", last_iterate=exc.last_iterate, residual=exc.residual
            ) from exc
        sweeps = max(sweeps, s_k)
        disp = max(disp, d_k)
    return u, StepInfo(m=int(m), h=h, sweeps=sweeps, displacement=disp,
                       objective=float("nan"))


def crandall_liggett(u0: MapState, t: float, m: int, tol: float = 1e-10,
                     max_sweeps: int = 10000, order: str = "colored") -> MapState:
    """``J_{t/m}`` applied ``m`` times to ``u0``.

    Examples
    --------
    >>> from cat0flow import build_domain, Euclidean, MapState
    >>> u0 = MapState(build_domain("interval-dirichlet", 3, 2.0), Euclidean(1), [0, 1, 0])
    >>> round(float(crandall_liggett(u0, 1.0, 2).values[1, 0]), 12)
    0.25
    """
    return _chain(u0, t, m, tol, max_sweeps, order)[0]


@dataclass
class FlowTrace:
    """Recorded orbit ``t -> F_t(u0)`` on a time grid."""

    times: np.ndarray
    states: list
    energies: np.ndarray
    steps: list = field(default_factory=list)
    u0: MapState | None = None

    @property
    def domain(self):
        return self.states[0].domain

    @property
    def space(self):
        return self.states[0].space

    @property
    def psi(self):
        return self.states[0].psi

    @property
    def pinned(self):
        return self.states[0].pinned

    def __len__(self):
        return len(self.times)

    def values(self) -> np.ndarray:
        """Stacked raw values, shape (ntimes, nvertices, ncoord)."""
        return np.stack([s.values for s in self.states])

    def uniform_step(self, rtol=1e-9) -> float:
        gaps = np.diff(self.times)
        if len(gaps) == 0:
            raise PreconditionError("trace needs at least two recorded times")
        if np.ptp(gaps) > rtol * gaps.max():
            raise PreconditionError("trace time grid is not uniform")
        return float(gaps.mean())

    def admissible(self) -> bool:
        """Diagnostic flag: no recorded energy exceeds the first one."""
        return bool(np.all(self.energies <= self.energies[0] * (1 + 1e-10) + 1e-12))


def flow_run(u0: MapState, times, m_per_interval: int | None = None, tol: float = 1e-10,
             h_max: float | None = None, max_sweeps: int = 10000,
             order: str = "colored") -> FlowTrace:
    """Record the Crandall-Liggett flow on a grid of times.

    Each interval ``[t_{k-1}, t_k]`` (with ``t_{-1} = 0``) is advanced by
    ``m`` resolvent steps, where ``m`` is ``m_per_interval`` or, if ``h_max``
    is given instead, the smallest count with step ``<= h_max``.  With
    neither given each interval is a single step.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) == 0:
        raise InvalidParameterError("times must be a nonempty list")
    if times[0] < 0 or np.any(np.diff(times) <= 0):
        raise InvalidParameterError("times must be strictly increasing and start at >= 0")
    if m_per_interval is not None and h_max is not None:
        raise InvalidParameterError("give at most one of m_per_interval and h_max")
    if m_per_interval is None and h_max is None:
        m_per_interval = 1

    def m_for(dt):
        if m_per_interval is not None:
            return int(m_per_interval)
        return max(1, int(np.ceil(dt / h_max - 1e-9)))

    states, steps = [], []
    prev_t, u = 0.0, u0
    for t in times:
        dt = t - prev_t
        if dt > 0:
            u, info = _chain(u, dt, m_for(dt), tol, max_sweeps, order)
            info.objective = resolvent_objective(u, states[-1] if states else u0, info.h)
        else:
            info = StepInfo(m=0, h=0.0, sweeps=0, displacement=0.0, objective=float("nan"))
        states.append(u)
        steps.append(info)
        prev_t = t
    energies = np.array([energy(s)[0] for s in states])
    return FlowTrace(times=times, states=states, energies=energies, steps=steps, u0=u0)


def evi_residual(trace: FlowTrace, v: MapState, t_index: int, s: float | None = None) -> float:
    """Discrete EVI residual at a recorded step.

    ``s (E[v] - E[u^t]) - (D^2(v, u^t) - D^2(v, u^{t-s}))`` with ``u^t`` the
    state at ``t_index`` and ``u^{t-s}`` the one before; ``s`` defaults to the
    recorded gap.  Nonnegative for every admissible comparator ``v``.
    """
    if not 1 <= t_index < len(trace):
        raise InvalidParameterError("t_index must point at a state with a predecessor")
    ut, uprev = trace.states[t_index], trace.states[t_index - 1]
    v.same_setting(ut)
    if not np.array_equal(v.pinned, ut.pinned) or not np.allclose(v.psi, ut.psi, atol=0, rtol=0):
        raise DomainMismatchError("comparator map carries different boundary data")
    if s is None:
        s = trace.times[t_index] - trace.times[t_index - 1]
    Ev, Et = energy(v)[0], trace.energies[t_index]
    return float(s * (Ev - Et) - (l2_distance(v, ut) ** 2 - l2_distance(v, uprev) ** 2))


def semigroup_residual(u0: MapState, t: float, s: float, m: int, tol: float = 1e-10,
                       order: str = "colored") -> float:
    """``D(F_{t+s} u0, F_t F_s u0)`` at discretization level ``m``.

    The one-shot run over ``t+s`` uses ``m' = max(1, round(m (t+s)/t))``
    steps so that its step size matches the final leg of the composite run.
    """
    if s == 0:
        return 0.0
    if not (t > 0 and s > 0):
        raise InvalidParameterError("t and s must be positive")
    m_total = max(1, int(round(m * (t + s) / t)))
    one = crandall_liggett(u0, t + s, m_total, tol, order=order)
    two = crandall_liggett(crandall_liggett(u0, s, m, tol, order=order), t, m, tol, order=order)
    return l2_distance(one, two)


def confinement_check(trace: FlowTrace, P0: Point, M0: float, slack: float = 1e-12) -> float:
    """Largest ``d(u_i^t, P0) - M0`` over the trace.

    Raises :class:`PreconditionError` if the initial map leaves the ball,
    since the check says nothing in that case.
    """
    space = trace.space
    c = space.check(P0)
    u0 = trace.u0 if trace.u0 is not None else trace.states[0]
    if np.max(space.dist_raw(u0.values, c)) > M0 + slack:
        raise PreconditionError("initial map is not inside the closed ball B(P0, M0)")
    vals = trace.values()
    return float(np.max(space.dist_raw(vals, c)) - M0)


def minimality_margin(J: MapState, u0: MapState, h: float, rng, size: float,
                      count: int = 64) -> float:
    """Smallest objective increase over random geodesic perturbations of ``J``.

    Each free vertex is moved a distance ``size`` toward an independent
    random point of the target.
    """
    space = J.space
    free = ~J.pinned
    base = resolvent_objective(J, u0, h)
    worst = np.inf
    for _ in range(count):
        goal = space.random_raw(rng, J.domain.num_vertices, scale=1.0)
        d = space.dist_raw(J.values, goal)
        frac = np.where(d > size, size / np.where(d > 0, d, 1.0), 1.0)
        moved = space.geodesic_raw(J.values, goal, frac)
        vals = np.where(free[:, None], moved, J.values)
        worst = min(worst, resolvent_objective(J.with_values(vals), u0, h) - base)
    return float(worst)
