from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from saddlescatter.amplitude import (ScatteringBranch, SearchSpec, assemble, branch_data,
                                     critical_order_exponents, find_branches, flux_normalized,
                                     interference_frequency, maslov_index, modified_action,
                                     scattering_relation_table, semiclassical_leading_amplitude,
                                     sigma_hat)
from saddlescatter.errors import ConfigurationError
from saddlescatter.potentials import FreeModel, GaussianBarrier

OMEGA = np.array([1.0, 0.0])
CHI = 0.316
THETA = np.array([np.cos(CHI), np.sin(CHI)])


def test_free_model_empty_sum():
    m = FreeModel(2)
    res = semiclassical_leading_amplitude(m, OMEGA, THETA, 1.0, 0.1)
    assert res.value == 0 and res.branches == []
    assert sigma_hat(m, OMEGA, [0.0, 0.5], 1.0).value == pytest.approx(0.0, abs=1e-12)
    assert maslov_index(m, OMEGA, [0.0, 0.5], 1.0) == 0
    assert modified_action(m, OMEGA, np.array([0.0, 0.5]), 1.0).value == pytest.approx(0.0, abs=1e-10)


def test_forward_direction_rejected():
    with pytest.raises(ConfigurationError):
        semiclassical_leading_amplitude(FreeModel(2), OMEGA, OMEGA, 1.0, 0.1)


@pytest.fixture(scope="module")
def radial_branches(radial):
    zs, diag = find_branches(radial, OMEGA, THETA, 1.5, SearchSpec())
    return branch_data(radial, OMEGA, zs, 1.5, fd_check=True)


def test_radial_two_branches(radial_branches):
    bs = sorted(radial_branches, key=lambda b: abs(b.z[1]))
    assert len(bs) == 2
    assert [b.maslov for b in bs] == [0, 1]
    for b in bs:
        assert np.allclose(b.theta, THETA, atol=1e-6)
        assert b.sigma_hat == pytest.approx(b.sigma_hat_fd, rel=1e-4)


def test_action_dual_estimate(radial_branches):
    for b in radial_branches:
        assert abs(b.action - b.action_dual) < 1e-7


def test_assemble_phases(radial_branches):
    h = 0.05
    A = assemble(radial_branches, h)
    ref = sum(b.sigma_hat ** -0.5 * np.exp(1j * b.action / h - 1j * b.maslov * np.pi / 2) for b in radial_branches)
    assert A == pytest.approx(ref)
    assert abs(flux_normalized(A, 1.5, 2)) == pytest.approx(np.sqrt(3.0) * abs(A))


def test_scattering_relation_free():
    rows = scattering_relation_table(FreeModel(2), 1.0, OMEGA[None], np.array([[0.0, 0.5]]))
    r = rows[0]
    assert np.allclose(r["theta"], r["omega"], atol=1e-12)
    assert np.allclose(r["eta_plus"], r["eta_minus"], atol=1e-10)


@pytest.mark.parametrize("lams, r_res, r_sc", [
    ((1, 1), Fraction(0), Fraction(-1, 2)),
    ((1, 2), Fraction(-1, 2), Fraction(-1)),
    ((2, 3), Fraction(-1, 4), Fraction(-3, 4)),
    ((1, 1, 1), Fraction(-1, 2), Fraction(-1)),
])
def test_critical_order_examples(lams, r_res, r_sc):
    d = critical_order_exponents(lams)
    assert d.resolvent_order == r_res and d.scattering_order == r_sc


@settings(max_examples=50, deadline=None)
@given(st.lists(st.fractions(min_value=Fraction(1, 10), max_value=10), min_size=1, max_size=5))
def test_critical_order_formula(lams):
    d = critical_order_exponents(lams)
    lam1 = min(lams)
    s = sum(lams)
    assert d.resolvent_order == 1 - s / (2 * lam1)
    assert d.scattering_order == Fraction(1, 2) - s / (2 * lam1)
    assert isinstance(d.scattering_order, Fraction)


def test_critical_order_from_model():
    d = critical_order_exponents(GaussianBarrier(1.0, (1.0, 1.5)))
    assert d.scattering_order == Fraction(-3, 4)


@settings(max_examples=20, deadline=None)
@given(w=st.floats(0.2, 2.0), ph=st.floats(0, 2 * np.pi))
def test_interference_frequency_synthetic(w, ph):
    u = np.linspace(10, 60, 101)
    y = 2.0 + 0.3 / u + (1.1 - 0.5 / u) * np.cos(w * u + ph)
    assert interference_frequency(u, y) == pytest.approx(w, rel=1e-6)


def test_branch_json_round_trip(radial):
    res = semiclassical_leading_amplitude(radial, OMEGA, THETA, 1.5, 0.05)
    d = res.to_dict()
    assert d["amplitude"]["re"] == pytest.approx(res.value.real)
    assert len(d["branches"]) == 2
    assert res.at_h(0.1) == pytest.approx(assemble(res.branches, 0.1))
