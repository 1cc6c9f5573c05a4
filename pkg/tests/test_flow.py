import numpy as np
import pytest
from numpy.testing import assert_allclose

from l1control import flow, singular
from l1control.errors import ChatteringSuspected, SingularContact
from l1control.flow import ArcKind, FlowSettings
from l1control.hamiltonians import bracket, maximized_hamiltonian

from kepler_oracle import kepler_propagate, period

Q0 = np.array([1.1, 0.0, 0.1])
V0 = np.array([0.0, 1.05, 0.2])


def test_rhs_circular_point():
    pq = np.array([0.3, -0.2, 0.5])
    pv = np.array([0.7, 0.4, -0.1])
    z = np.concatenate([[1.0, 0, 0], [0, 1.0, 0], pq, pv])
    f = flow.extremal_rhs(z, 0.0)
    assert_allclose(f[0:3], [0, 1, 0])
    assert_allclose(f[3:6], [-1, 0, 0])
    # V''(q) = I - 3 q q^T at the unit circle
    assert_allclose(f[6:9], [-2 * 0.7, 0.4, -0.1])
    assert_allclose(f[9:12], -pq)


def test_rhs_costate_velocity_rate_independent_of_rho():
    rng = np.random.default_rng(0)
    for _ in range(20):
        z = rng.normal(size=12)
        z[0] += 2.0
        for rho in (0.0, 0.4, 1.0):
            assert_allclose(flow.extremal_rhs(z, rho)[9:12], -z[6:9])
    with pytest.raises(ValueError):
        flow.extremal_rhs(z, 1.5)


def test_single_coast_arc():
    z0 = np.concatenate([Q0, V0, np.zeros(3), [0.2, 0.0, 0.0]])
    z0[6:9] = 0.0
    ext = flow.propagate_bang_bang(z0, (0.0, 1.0))
    assert len(ext.switches) == 0
    assert len(ext.arcs) == 1 and ext.arcs[0].kind is ArcKind.COAST


def test_coast_matches_kepler_over_period():
    z0 = np.concatenate([Q0, V0, np.zeros(6)])
    t = period(Q0, V0)
    ext = flow.propagate_bang_bang(z0, (0.0, t))
    assert_allclose(ext.z_end.as_array()[:6], z0[:6], atol=1e-7)
    for tk in (0.7, 2.3, 4.1):
        q, v = kepler_propagate(Q0, V0, tk)
        zk = flow.propagate_bang_bang(z0, (0.0, tk)).z_end
        assert_allclose(np.concatenate([zk.q, zk.v]), np.concatenate([q, v]), atol=1e-9)


def test_reference_extremal_switchings(problem, solution, jac_ext):
    assert len(solution.extremal.switches) >= 10
    assert len(jac_ext.extremal.switches) > 70
    for s in solution.extremal.switches:
        assert abs(np.linalg.norm(s.z.p_v) - 1.0) < 1e-12


def test_time_reversal(problem, z0_ref):
    fwd = flow.propagate_bang_bang(z0_ref, (0.0, problem.t_f), problem.eps)
    back = flow.propagate_bang_bang(fwd.z_end.as_array(), (problem.t_f, 0.0), problem.eps)
    z_back = back.z_end.as_array()
    assert np.linalg.norm(z_back - z0_ref) <= 1e-8 * np.linalg.norm(z0_ref)
    assert_allclose(sorted(back.switch_times), fwd.switch_times, atol=1e-8)


def test_regularized_energy_limit_smooth(problem, z0_ref):
    ext = flow.propagate_regularized(z0_ref, (0.0, problem.t_f), 0.0, problem.eps)
    rho = ext.arcs[0].rho
    assert ext.switches == [] and np.all((rho >= 0) & (rho <= 1))
    assert np.max(np.abs(np.diff(rho))) < 0.05


def test_regularized_hamiltonian_constant(problem, z0_ref):
    for lam in (0.0, 0.5, 0.99):
        ext = flow.propagate_regularized(z0_ref, (0.0, problem.t_f), lam, problem.eps)
        hs = [maximized_hamiltonian(z, lam, eps=problem.eps) for z in ext.arcs[0].zs]
        assert np.max(np.abs(np.array(hs) - hs[0])) <= 1e-8 * max(1.0, abs(hs[0]))


def test_regularized_converges_to_bang_bang(problem, z0_ref):
    for horizon in (0.5 * problem.t_f, problem.t_f):
        bb = flow.propagate_bang_bang(z0_ref, (0.0, horizon), problem.eps).z_end.as_array()
        dist = []
        for lam in (0.9, 0.99, 0.999):
            reg = flow.propagate_regularized(z0_ref, (0.0, horizon), lam, problem.eps)
            dist.append(np.max(np.abs(reg.z_end.as_array()[:6] - bb[:6])))
        assert dist[0] > dist[1] > dist[2]


def test_singular_contact_detected():
    # start on the switching surface with H01 = 0
    z0 = np.concatenate([Q0, V0, [0.0, 0.3, 0.0], [1.0, 0.0, 0.0]])
    with pytest.raises(SingularContact):
        flow.propagate_bang_bang(z0, (0.0, 1.0))


def test_chattering_guard(problem, z0_ref):
    # any two switchings closer than the gap are reported as chattering
    with pytest.raises(ChatteringSuspected):
        flow.propagate_bang_bang(z0_ref, (0.0, problem.t_f), problem.eps,
                                 settings=FlowSettings(min_switch_gap=1e3))


@pytest.fixture(scope="module")
def locus_point():
    seed = singular.seed_point([1.2, 0.1, 0.0], [0.0, 0.5, 0.0], 2.0)
    z, _ = singular.locus_seek(seed)
    return z


def test_singular_arc(locus_point):
    ext = flow.propagate_singular(locus_point, (0.0, 0.05))
    arc = ext.arcs[0]
    assert arc.kind is ArcKind.SINGULAR
    drift = max(np.max(np.abs(flow.singular_constraints(z))) for z in arc.zs)
    assert drift <= 1e-6
    rho_s = -bracket("H00001", locus_point) / bracket("H10001", locus_point)
    assert_allclose(arc.rho[0], rho_s, rtol=1e-12)
    assert all(bracket("H10001", z) <= 0 for z in arc.zs)
    assert np.all((arc.rho >= 0) & (arc.rho <= 1))


def test_singular_rejects_off_locus(locus_point):
    z = locus_point.copy()
    z[6] += 1e-3
    with pytest.raises(ValueError):
        flow.propagate_singular(z, (0.0, 0.01))
