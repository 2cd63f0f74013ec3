import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from saddlescatter.errors import IntegrationFailure
from saddlescatter.flow import (FlowOptions, PhasePoint, escape_time, flow, flow_with_variational,
                                integrate_batch, read_trajectory_csv, symplectic_defect, symplectic_flow,
                                trajectory)
from saddlescatter.potentials import FreeModel, GaussianBarrier, HarmonicWell


def test_harmonic_exact():
    w = 1.7
    m = HarmonicWell(w, 2)
    p = PhasePoint(np.array([0.3, -1.0]), np.array([0.5, 0.2]))
    t = 2.3
    q, M = flow_with_variational(m, p, t)
    c, s = np.cos(w * t), np.sin(w * t)
    assert np.allclose(q.x, p.x * c + p.xi * s / w, atol=1e-9)
    assert np.allclose(q.xi, -p.x * w * s + p.xi * c, atol=1e-9)
    blk = np.array([[c, s / w], [-w * s, c]])
    assert np.allclose(M, np.kron(blk, np.eye(2)), atol=1e-8)


def test_free_motion():
    m = FreeModel(3)
    p = PhasePoint(np.array([1.0, 2.0, 3.0]), np.array([0.1, -0.2, 0.3]))
    q = flow(m, p, 7.0)
    assert np.allclose(q.x, p.x + 7.0 * p.xi, atol=1e-12)
    assert np.allclose(q.xi, p.xi)


@settings(max_examples=20, deadline=None)
@given(x=st.lists(st.floats(-1.5, 1.5), min_size=2, max_size=2),
       ang=st.floats(0, 2 * np.pi), dE=st.floats(-0.2, 0.2), t=st.floats(-8, 8))
def test_energy_symplecticity_reversibility(aniso, x, ang, dE, t):
    x = np.array(x)
    kin = 1.0 + dE - aniso.potential(x)
    if kin <= 1e-3 or abs(t) < 1e-3:
        return
    xi = np.sqrt(2 * kin) * np.array([np.cos(ang), np.sin(ang)])
    p = PhasePoint(x, xi)
    q, M = flow_with_variational(aniso, p, t)
    assert abs(q.energy(aniso) - p.energy(aniso)) <= 1e-9 * abs(p.energy(aniso))
    assert np.max(symplectic_defect(M)) <= 1e-7 * max(1.0, np.linalg.norm(M) ** 2)
    back = flow(aniso, q, -t)
    assert np.allclose(back.as_array(), p.as_array(), atol=1e-7 * max(1.0, np.linalg.norm(M)))


def test_batch_matches_single(aniso, rng):
    y0 = np.column_stack([rng.uniform(-1, 1, (5, 2)), rng.uniform(-1, 1, (5, 2))])
    res = integrate_batch(aniso, y0, 3.0)
    for k in range(5):
        q = flow(aniso, PhasePoint.from_array(y0[k]), 3.0)
        assert np.allclose(q.as_array(), res.y[k], atol=1e-9)


def test_variational_against_finite_differences(aniso):
    p = PhasePoint(np.array([0.4, 0.2]), np.array([-0.3, 0.8]))
    _, M = flow_with_variational(aniso, p, 2.5)
    y = p.as_array()
    fd = np.column_stack([
        (flow(aniso, PhasePoint.from_array(y + 1e-6 * e), 2.5).as_array()
         - flow(aniso, PhasePoint.from_array(y - 1e-6 * e), 2.5).as_array()) / 2e-6
        for e in np.eye(4)])
    assert np.allclose(M, fd, atol=1e-5)


def test_step_budget_failure(aniso):
    with pytest.raises(IntegrationFailure) as exc:
        integrate_batch(aniso, np.array([[0.1, 0.2, 0.3, 0.4]]), 10.0, opts=FlowOptions(max_steps=3))
    assert exc.value.last_state is not None


def test_escape_classification(aniso):
    lam1 = 1.0
    # unstable direction escapes, stable-manifold point converges
    out = escape_time(aniso, PhasePoint(np.array([1e-3, 0.0]), np.array([1e-3 * lam1, 0.0])), 5.0, 60.0)
    assert out.kind == "escaped"
    into = escape_time(aniso, PhasePoint(np.array([1e-3, 0.0]), np.array([-1e-3 * lam1, 0.0])), 5.0, 60.0)
    assert into.kind in ("converged", "escaped")
    far = escape_time(aniso, PhasePoint(np.array([9.0, 0.0]), np.array([1.0, 0.0])), 5.0, 1.0)
    assert far.kind == "escaped" and far.t == 0.0


def test_symplectic_integrator_energy(aniso):
    y0 = np.array([[0.5, 0.1, 0.2, -0.9]])
    y = symplectic_flow(aniso, y0, 5.0, 1e-3)
    ref = flow(aniso, PhasePoint.from_array(y0[0]), 5.0).as_array()
    assert np.allclose(y[0], ref, atol=1e-8)


def test_trajectory_csv(tmp_path, aniso):
    seg = trajectory(aniso, PhasePoint(np.array([0.5, 0.0]), np.array([0.0, 1.0])), np.linspace(-2, 2, 9))
    path = tmp_path / "traj.csv"
    seg.write_csv(path, aniso)
    header, data = read_trajectory_csv(path)
    assert header[0] == "t" and data.shape == (9, 6)
    assert np.allclose(data[:, 1:5], seg.y)
    assert (tmp_path / "traj.csv.json").exists()
    assert seg.check_invariants(aniso)["energy_ok"]
