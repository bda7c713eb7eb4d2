import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cat0flow import (
    DomainMismatchError,
    Euclidean,
    HyperbolicPlane,
    InvalidParameterError,
    MapState,
    PreconditionError,
    SweepLimitError,
    build_domain,
    confinement_check,
    crandall_liggett,
    energy,
    evi_residual,
    flow_run,
    harmonic_map,
    heat_evolve,
    ks_energy_profile,
    l2_distance,
    laplacian,
    poincare_constant,
    resolvent,
    semigroup_residual,
    tripod,
)
from cat0flow.flow import minimality_margin, resolvent_objective
from cat0flow.scenario import euclidean_heat_oracle, euclidean_resolvent_oracle, wave_values
from cat0flow.target import Point


def _spike():
    dom = build_domain("interval-dirichlet", 3, 2.0)
    return MapState(dom, Euclidean(1), [0.0, 1.0, 0.0])


# -- domains ---------------------------------------------------------------
@pytest.mark.parametrize("kind,n,nv", [("interval-dirichlet", 5, 5), ("cycle", 6, 6),
                                       ("grid2d-dirichlet", 4, 16), ("torus2d", 4, 16)])
def test_domain_sizes(kind, n, nv):
    dom = build_domain(kind, n, 1.0)
    assert dom.num_vertices == nv
    assert dom.closed == (kind in ("cycle", "torus2d"))


def test_domain_rejects_positive_curvature_and_unknown_kind():
    with pytest.raises(InvalidParameterError):
        build_domain("cycle", 8, 1.0, K=1.0)
    with pytest.raises(InvalidParameterError):
        build_domain("sphere", 8)


def test_laplacian_kills_linear_functions_inside():
    dom = build_domain("interval-dirichlet", 9, 1.0)
    lap = laplacian(dom, 3 * dom.coords[:, 0] - 1)
    assert np.abs(lap[dom.interior]).max() < 1e-12


def test_energy_of_linear_map_on_interval():
    dom = build_domain("interval-dirichlet", 11, 2.0)
    u = MapState(dom, Euclidean(1), dom.coords[:, :1] * 3.0)
    total, dens = energy(u)
    assert total == pytest.approx(9.0 * 2.0, rel=1e-12)


def test_energy_contracts_under_projection():
    dom = build_domain("cycle", 12, 1.0)
    E = Euclidean(2)
    u = MapState(dom, E, np.random.default_rng(0).normal(size=(12, 2)))
    proj = u.with_values(E.project_raw(u.values, np.zeros(2), 0.5))
    assert np.all(energy(proj)[1] <= energy(u)[1] + 1e-12)


def test_l2_distance_requires_same_setting():
    a = MapState(build_domain("cycle", 6), Euclidean(1), np.zeros((6, 1)))
    b = MapState(build_domain("cycle", 7), Euclidean(1), np.zeros((7, 1)))
    with pytest.raises(DomainMismatchError):
        l2_distance(a, b)


def test_heat_evolve_preserves_constants():
    dom = build_domain("torus2d", 5, 1.0)
    out = heat_evolve(dom, np.full(25, 2.5), 0.3, 4)
    assert np.allclose(out, 2.5, atol=1e-13)


def test_ks_profile_linear_maps():
    x = np.arange(0, 1 + 5e-4, 1e-3)
    assert np.abs(ks_energy_profile(x, 1e-3, 1e-2).values - 1.0).max() < 1e-3
    assert np.abs(ks_energy_profile(2 * x, 1e-3, 1e-2).values - 4.0).max() < 4e-3


def test_poincare_constant_matches_continuum():
    assert poincare_constant(build_domain("interval-dirichlet", 65, 1.0)) == pytest.approx(
        1 / np.pi**2, rel=1e-3)
    assert poincare_constant(build_domain("cycle", 64, 1.0)) == pytest.approx(
        1 / (4 * np.pi**2), rel=1e-3)


# -- resolvent and semigroup ----------------------------------------------
def test_small_instance_closed_forms():
    u0 = _spike()
    assert crandall_liggett(u0, 1.0, 1, tol=1e-15).values[1, 0] == pytest.approx(1 / 3, abs=1e-12)
    assert crandall_liggett(u0, 1.0, 2, tol=1e-15).values[1, 0] == pytest.approx(0.25, abs=1e-12)


def test_small_instance_heat_oracle():
    assert euclidean_heat_oracle(_spike(), 1.0)[1, 0] == pytest.approx(np.exp(-2.0), rel=1e-12)


def test_resolvent_matches_dense_solve():
    dom = build_domain("grid2d-dirichlet", 6, 1.0)
    u0 = MapState(dom, Euclidean(2), np.random.default_rng(1).uniform(-1, 1, (36, 2)))
    J = resolvent(u0, 0.01, tol=1e-13)
    assert np.abs(J.values - euclidean_resolvent_oracle(u0, 0.01)).max() < 1e-8


def test_sweep_orders_agree():
    tp = tripod()
    dom = build_domain("cycle", 12, 1.0)
    u0 = MapState(dom, tp, wave_values(tp, dom.coords, 1.0, 1.5, 1, 0.0))
    a = resolvent(u0, 0.01, tol=1e-13, order="colored")
    b = resolvent(u0, 0.01, tol=1e-13, order="sequential")
    assert l2_distance(a, b) < 1e-9


def test_resolvent_is_local_minimum():
    H = HyperbolicPlane()
    dom = build_domain("cycle", 10, 1.0)
    u0 = MapState(dom, H, wave_values(H, dom.coords, 1.0, 1.0, 1, 0.0))
    J = resolvent(u0, 0.02, tol=1e-13)
    margin = minimality_margin(J, u0, 0.02, np.random.default_rng(0), 1e-4)
    assert margin >= -1e-13 * (1 + resolvent_objective(J, u0, 0.02))


def test_sweep_limit_error_carries_iterate():
    dom = build_domain("cycle", 16, 1.0)
    u0 = MapState(dom, Euclidean(1), np.cos(2 * np.pi * dom.coords[:, :1]))
    with pytest.raises(SweepLimitError) as exc:
        crandall_liggett(u0, 1.0, 2, tol=1e-14, max_sweeps=2)
    assert exc.value.last_iterate is not None and exc.value.step_index == 0


def test_constant_map_is_fixed():
    dom = build_domain("cycle", 8, 1.0)
    tp = tripod()
    u0 = MapState.constant(dom, tp, tp.edge_point(1, 0.7))
    assert l2_distance(resolvent(u0, 1.0), u0) < 1e-12


def test_harmonic_map_interval_is_linear():
    dom = build_domain("interval-dirichlet", 9, 1.0)
    vals = np.zeros((9, 1))
    vals[-1] = 2.0
    h = harmonic_map(MapState(dom, Euclidean(1), vals), tol=1e-13)
    assert np.allclose(h.values[:, 0], 2.0 * dom.coords[:, 0], atol=1e-8)


def test_semigroup_residual_decreases_with_m():
    dom = build_domain("cycle", 12, 1.0)
    tp = tripod()
    u0 = MapState(dom, tp, wave_values(tp, dom.coords, 1.0, 1.5, 1, 0.0))
    r = [semigroup_residual(u0, 0.1, 0.05, m) for m in (4, 16, 64)]
    assert r[0] > r[1] > r[2]


def test_flow_run_rejects_bad_grid():
    u0 = _spike()
    with pytest.raises(InvalidParameterError):
        flow_run(u0, [0.0, 0.5, 0.5])


def test_confinement_precondition():
    dom = build_domain("cycle", 8, 1.0)
    u0 = MapState(dom, Euclidean(1), 3.0 * np.ones((8, 1)))
    tr = flow_run(u0, [0.0, 0.1])
    with pytest.raises(PreconditionError):
        confinement_check(tr, Euclidean(1).point(0.0), 1.0)


def test_contraction_between_twin_flows():
    tp = tripod()
    dom = build_domain("cycle", 16, 1.0)
    times = np.arange(9) / 64
    u = flow_run(MapState(dom, tp, wave_values(tp, dom.coords, 1.0, 1.5, 1, 0.0)), times, tol=1e-12)
    v = flow_run(MapState(dom, tp, wave_values(tp, dom.coords, 1.0, 1.5, 1, 2.0)), times, tol=1e-12)
    D = [l2_distance(a, b) for a, b in zip(u.states, v.states)]
    assert np.all(np.diff(D) <= 1e-9)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_energy_monotone_and_evi_random_tripod(seed):
    rng = np.random.default_rng(seed)
    tp = tripod()
    dom = build_domain("interval-dirichlet", 8, 1.0)
    u0 = MapState(dom, tp, tp.random_raw(rng, 8))
    tr = flow_run(u0, np.arange(4) * 0.01, tol=1e-12)
    E = tr.energies
    assert np.all(E[1:] <= E[:-1] + 1e-10 * (1 + E[:-1]))
    v = u0.with_values(tp.random_raw(rng, 8))
    Ev = energy(v)[0]
    for k in range(1, len(tr)):
        assert evi_residual(tr, v, k) >= -1e-8 * (1 + Ev)


def test_eigenmode_decay_on_cycle():
    dom = build_domain("cycle", 32, 2 * np.pi)
    u0 = MapState(dom, Euclidean(1), np.cos(dom.coords[:, :1]))
    exact = euclidean_heat_oracle(u0, 0.5)
    approx = crandall_liggett(u0, 0.5, 64, tol=1e-13)
    assert np.abs(approx.values - exact).max() < 5e-3


def test_point_indexing():
    u0 = _spike()
    assert isinstance(u0[1], Point) and str(u0[1]) == "1"
