import numpy as np
import pytest

from cat0flow import (
    Euclidean,
    HyperbolicPlane,
    InvalidParameterError,
    MapState,
    PreconditionError,
    build_domain,
    energy,
    flow_run,
    tripod,
)
from cat0flow.regularity import (
    CheckReport,
    bochner_residuals,
    distance_subsolution_residuals,
    hat_tests,
    hj_checks,
    hj_constants,
    hj_flow,
    lip_fields,
    lip_report,
    mean_value_residual,
    phi_interpolation_residuals,
    r_density,
    subsolution_residuals,
)
from cat0flow.scenario import wave_values


def _linear_trace(n=65, steps=3):
    dom = build_domain("interval-dirichlet", n, 1.0)
    u0 = MapState(dom, Euclidean(1), dom.coords[:, :1].copy())
    return flow_run(u0, np.arange(steps + 1) * 1e-3, tol=1e-13)


def _tripod_trace(n=16, s=1 / 64, steps=4, phase=0.0):
    tp = tripod()
    dom = build_domain("cycle", n, 1.0)
    u0 = MapState(dom, tp, wave_values(tp, dom.coords, 1.0, 1.5, 1, phase))
    return flow_run(u0, np.arange(steps + 1) * s, tol=1e-12)


def test_report_json_schema():
    rep = CheckReport.from_residuals("x", "Lemma 3.1", [0.5, -1e-12, np.inf], 1e-9,
                                     scenario="s", seed=3)
    js = rep.to_json()
    for key in ("check", "paper_anchor", "tolerance", "min", "mean", "max", "pass", "scenario",
                "seed"):
        assert key in js
    assert js["pass"] is True and js["max"] is None


def test_report_deficit_sense():
    assert CheckReport.from_residuals("a", "", [-0.2, 1.0], 1.0).deficit == pytest.approx(0.2)
    assert CheckReport.from_residuals("b", "", [0.3, -1.0], 1.0, sense="<=").deficit == 0.3


def test_hat_tests_vanish_on_boundary():
    dom = build_domain("grid2d-dirichlet", 6, 1.0)
    phi = hat_tests(dom)
    assert phi.shape == (16, 36)
    assert np.all(phi[:, dom.boundary] == 0) and np.all(phi >= 0)


def test_r_density_euclidean_is_zero():
    dom = build_domain("cycle", 10, 1.0)
    rng = np.random.default_rng(0)
    u = MapState(dom, Euclidean(2), rng.normal(size=(10, 2)))
    v = u.with_values(u.values + np.array([1.0, -2.0]))
    assert np.abs(r_density(u, v)).max() < 1e-12


def test_r_density_bounded_by_energies():
    dom = build_domain("cycle", 10, 1.0)
    H = HyperbolicPlane()
    rng = np.random.default_rng(1)
    u = MapState(dom, H, H.random_raw(rng, 10))
    v = MapState(dom, H, H.random_raw(rng, 10))
    R = r_density(u, v)
    assert np.all(R >= -1e-12)
    assert np.all(R <= 2 * energy(u)[1] + 2 * energy(v)[1] + 1e-9)


@pytest.mark.parametrize("space", [Euclidean(2), tripod(), HyperbolicPlane()],
                         ids=["R2", "tripod", "H2"])
def test_phi_interpolation_nonnegative(space):
    rng = np.random.default_rng(2)
    dom = build_domain("interval-dirichlet", 8, 1.0)
    for _ in range(100):
        u = MapState(dom, space, space.random_raw(rng, 8))
        v = MapState(dom, space, space.random_raw(rng, 8))
        phi = rng.uniform(0, 1, 8)
        phi[dom.boundary] = 0
        res = phi_interpolation_residuals(u, v, phi)
        assert res.edge_residuals.min() >= -1e-9
        assert res.total == pytest.approx(res.rhs - res.lhs, abs=1e-9)


def test_phi_interpolation_euclidean_identity_at_zero():
    dom = build_domain("interval-dirichlet", 6, 1.0)
    rng = np.random.default_rng(4)
    u = MapState(dom, Euclidean(1), rng.normal(size=(6, 1)))
    v = MapState(dom, Euclidean(1), rng.normal(size=(6, 1)))
    res = phi_interpolation_residuals(u, v, np.zeros(6))
    assert abs(res.total) < 1e-12


def test_subsolution_twin_tripods():
    u, v = _tripod_trace(phase=0.0), _tripod_trace(phase=2.0)
    rep = subsolution_residuals(u, v, hat_tests(u.domain))
    assert rep.passed and rep.min >= -u.uniform_step()


def test_distance_subsolution_reports():
    tr = _tripod_trace()
    ra, rb = distance_subsolution_residuals(tr, tripod().vertex_point("o"), hat_tests(tr.domain))
    assert ra.passed and rb.passed
    assert rb.deficit <= rb.extra["deficit_bound"] + 1e-10


def test_lip_fields_linear_map():
    dom = build_domain("interval-dirichlet", 17, 1.0)
    u = MapState(dom, Euclidean(1), 2.0 * dom.coords[:, :1])
    lip = lip_fields(u, [dom.spacing, 3 * dom.spacing])
    assert np.allclose(lip[np.isfinite(lip)], 2.0)


def test_lip_report_dyadic_factor():
    dom = build_domain("cycle", 32, 2 * np.pi)
    u0 = MapState(dom, Euclidean(1), np.cos(dom.coords[:, :1]))
    tr = flow_run(u0, np.arange(129) / 128, tol=1e-12)
    rep = lip_report(tr, 0.1, [dom.spacing])
    gaps = sorted(rep.temporal)
    first = np.stack([rep.temporal[s][1][0] for s in gaps])
    # skip the nodes of cos, where every ratio vanishes
    live = first.min(axis=0) > 1e-8
    assert np.all(first.max(axis=0)[live] / first.min(axis=0)[live] <= 2.0)


def test_mean_value_nonpositive():
    tr = _tripod_trace(steps=6)
    space = tr.space
    P = space.decode("0:0")
    g = np.stack([-space.dist_raw(st.values, P) ** 2 for st in tr.states])
    f = np.stack([-2 * energy(st)[1] for st in tr.states])
    s = tr.uniform_step()
    for x0 in range(0, 16, 5):
        assert mean_value_residual(tr.domain, tr.times, g, f, x0, tr.times[-1], 4 * s, 4) <= 1e-9


def test_mean_value_window_checks():
    tr = _tripod_trace(steps=2)
    g = np.zeros((3, 16))
    with pytest.raises(PreconditionError):
        mean_value_residual(tr.domain, tr.times, g, g, 0, tr.times[-1], 1.0, 2)


def test_hj_constants_formula():
    eps0, C1 = hj_constants(-0.5, 2.0, 1.0, 3.0)
    assert eps0 == pytest.approx(np.exp(-1.0) * 9.0 / 16.0)
    assert C1 == pytest.approx(np.sqrt(12.0 * np.e))


@pytest.mark.parametrize("p", [2, 3, 4])
def test_hj_linear_field_closed_form(p):
    tr = _linear_trace(n=257)
    eps = 8 * tr.domain.spacing
    hj = hj_flow(tr, eps, p, 0.0, M0=0.5, R=1.0)
    q = p / (p - 1)
    assert np.abs(hj.values[:, hj.admissible] + eps / q).max() <= 1e-12


def test_hj_rejects_large_eps():
    tr = _linear_trace()
    with pytest.raises(InvalidParameterError):
        hj_flow(tr, 10.0, 2, 0.0, M0=0.5, R=1.0)


def test_hj_checks_on_tripod():
    tr = _tripod_trace()
    hj = hj_flow(tr, 0.05, 2, 0.0, M0=1.5, R=2.0)
    reps = hj_checks(hj, tr, hat_tests(tr.domain))
    assert reps["gradient_bound"].min >= -1e-9
    assert reps["range"].passed and reps["supersolution"].passed


def test_bochner_stationary_is_exact():
    tr = _linear_trace(n=33)
    rep = bochner_residuals(tr, 0.0, hat_tests(tr.domain))
    assert max(abs(rep.min), abs(rep.max)) <= 1e-12


def test_bochner_torus_flow():
    dom = build_domain("torus2d", 8, 1.0)
    u0 = MapState(dom, Euclidean(1), wave_values(Euclidean(1), dom.coords, 1.0, 0.2, 1, 0.0))
    tr = flow_run(u0, np.arange(4) * dom.spacing / 8, tol=1e-12)
    assert bochner_residuals(tr, 0.0, hat_tests(dom)).passed
