import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from saddlescatter.asymptotics import (ImpactCoordinates, batch_csv, deflection_angle, fit_asymptote,
                                       init_from_asymptote, perp_basis, scatter_batch, scattering_data)
from saddlescatter.errors import CapturedError
from saddlescatter.flow import FlowOptions
from saddlescatter.potentials import FreeModel, GaussianBarrier


@settings(max_examples=20, deadline=None)
@given(n=st.integers(2, 4), seed=st.integers(0, 1000))
def test_perp_basis_orthonormal(n, seed):
    om = np.random.default_rng(seed).standard_normal(n)
    om /= np.linalg.norm(om)
    B = perp_basis(om)
    assert B.shape == (n, n - 1)
    assert np.allclose(B.T @ B, np.eye(n - 1), atol=1e-12)
    assert np.allclose(B.T @ om, 0, atol=1e-12)


def test_fit_recovers_exact_line():
    t = np.linspace(10, 20, 30)
    xi, x0 = np.array([1.0, 0.5]), np.array([0.3, -2.0])
    fit = fit_asymptote(t, x0 + t[:, None] * xi, rho=4.0)
    assert np.allclose(fit[0], xi) and np.allclose(fit[1], x0)


def test_free_model_trivial():
    m = FreeModel(2)
    om = np.array([[0.6, 0.8]] * 3)
    z = np.array([[-0.8, 0.6], [0.0, 0.0], [1.6, -1.2]])
    res = scatter_batch(m, om, z, 1.0, action=True)
    assert np.all(res.status == "ok")
    assert np.allclose(res.theta, om, atol=1e-12)
    assert np.allclose(res.zplus, z, atol=1e-10)
    assert np.allclose(res.action, 0.0, atol=1e-10)


def test_deflection_oracle_small_batch(radial):
    E = 1.5
    bs = np.array([-2.0, -0.5, 0.3, 1.0, 3.0])
    res = scatter_batch(radial, np.tile([1.0, 0.0], (5, 1)), np.column_stack([np.zeros(5), bs]), E)
    chi = deflection_angle(np.tile([1.0, 0.0], (5, 1)), res.theta)
    V = oracles.gaussian_radial(1.0, 1.0)
    ref = np.array([np.sign(b) * oracles.radial_deflection(V, E, b) for b in bs])
    assert np.max(np.abs(chi - ref)) < 1e-6


def test_energy_conserved_at_infinity(aniso, rng):
    om = np.array([np.cos(0.3), np.sin(0.3)])
    z = rng.uniform(-2, 2, 6)[:, None] * perp_basis(om).T
    res = scatter_batch(aniso, np.tile(om, (6, 1)), z, 1.3)
    ok = res.status == "ok"
    assert np.allclose(np.linalg.norm(res.xi_inf[ok], axis=1) ** 2, 2 * 1.3, rtol=1e-9)


def test_variational_derivative(aniso):
    om = np.array([1.0, 0.0])
    z0 = 0.7
    res = scatter_batch(aniso, om[None], np.array([[0.0, z0]]), 1.5, variational=True)
    h = 1e-5
    pm = scatter_batch(aniso, np.tile(om, (2, 1)), np.array([[0.0, z0 + h], [0.0, z0 - h]]), 1.5)
    fd = (pm.xi_inf[0] - pm.xi_inf[1]) / (2 * h)
    # perp_basis((1,0)) = (0,1): the z coordinate is the second component
    assert np.allclose(res.dxi_dz[0, :, 0], fd, atol=1e-6)


def test_captured_on_axis(radial):
    with pytest.raises(CapturedError):
        scattering_data(radial, [1.0, 0.0], [0.0, 0.0], 1.0)


def test_init_from_asymptote_energy(aniso):
    ic = ImpactCoordinates(np.array([1.0, 0.0]), np.array([0.0, 0.4]), 1.2)
    p = init_from_asymptote(aniso, ic)
    assert p.energy(aniso) == pytest.approx(1.2, rel=FlowOptions().energy_drift_tol)


def test_impact_coordinate_validation():
    with pytest.raises(ValueError):
        ImpactCoordinates(np.array([1.0, 0.0]), np.array([1.0, 0.0]), 1.0)
    with pytest.raises(ValueError):
        ImpactCoordinates(np.array([1.0, 0.0]), np.array([0.0, 1.0]), -1.0)


def test_batch_csv_columns(aniso):
    header, rows = batch_csv(aniso, np.array([[1.0, 0.0, 0.0, 0.5, 1.2]]))
    assert header[-1] == "status" and len(rows[0]) == len(header)
