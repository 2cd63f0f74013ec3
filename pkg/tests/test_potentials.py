import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from saddlescatter.errors import AssumptionViolation, ConfigError, ModelEvaluationError
from saddlescatter.potentials import (EckartBarrier, EnergySpec, FreeModel, GaussianBarrier, HarmonicWell,
                                      QuadraticBarrier, RationalBarrier, SumOfGaussians, evaluate,
                                      linearization, model_from_config, rotation_2d,
                                      validate_assumptions)

FAMILIES = [
    GaussianBarrier(1.0, (1.0, 2.0)),
    RationalBarrier(1.0, (1.0, 1.5)),
    EckartBarrier(1.0, (1.0, 2.0)),
    GaussianBarrier(0.7, (1.0, 1.3, 2.0)),
    SumOfGaussians([1.0, -0.2], [[0.0, 0.0], [0.0, 0.0]], [1.0, 2.0]),
]

coords = st.floats(-3, 3, allow_nan=False)


@pytest.mark.parametrize("model", FAMILIES, ids=lambda m: f"{m.family}{m.n}")
def test_barrier_top(model):
    v, g, H = evaluate(model, np.zeros(model.n))
    assert v == pytest.approx(model.E0)
    assert np.allclose(g, 0, atol=1e-14)
    assert np.allclose(np.sort(np.linalg.eigvalsh(-H)), np.sort(np.square(model.lambdas)), rtol=1e-10)


@pytest.mark.parametrize("model", FAMILIES, ids=lambda m: f"{m.family}{m.n}")
@settings(max_examples=25, deadline=None)
@given(data=st.data())
def test_derivatives_match_finite_differences(model, data):
    x = np.array(data.draw(st.lists(coords, min_size=model.n, max_size=model.n)))
    v, g, H = model.vgh(x)
    step = 1e-6
    E = np.eye(model.n) * step
    gfd = np.array([(model.potential(x + e) - model.potential(x - e)) / (2 * step) for e in E])
    Hfd = np.array([(model.gradient(x + e) - model.gradient(x - e)) / (2 * step) for e in E])
    assert np.allclose(g, gfd, atol=1e-8)
    assert np.allclose(H, Hfd, atol=1e-7)
    assert model.value(x) == pytest.approx(model.potential(x), rel=1e-14, abs=1e-300)


def test_gaussian_value_extended_precision():
    m = GaussianBarrier(1.3, (0.7, 1.9))
    for x in ([0.4, -1.1], [2.0, 0.3], [-3.0, 2.5]):
        assert m.potential(np.array(x)) == pytest.approx(oracles.gaussian_value_mp(1.3, (0.7, 1.9), x), rel=1e-14)


@settings(max_examples=25, deadline=None)
@given(angle=st.floats(0, 2 * np.pi), x=st.lists(coords, min_size=2, max_size=2))
def test_rotation_covariance(angle, x):
    base = GaussianBarrier(1.0, (1.0, 2.0))
    R = rotation_2d(angle)
    rot = base.rotated(R)
    x = np.array(x)
    v, g, H = rot.vgh(R @ x)
    v0, g0, H0 = base.vgh(x)
    assert v == pytest.approx(v0, rel=1e-12, abs=1e-300)
    assert np.allclose(g, R @ g0, atol=1e-12)
    assert np.allclose(H, R @ H0 @ R.T, atol=1e-12)


def test_linearization_axes_follow_rotation():
    R = rotation_2d(0.4)
    lin = linearization(GaussianBarrier(1.0, (1.0, 2.0)).rotated(R))
    assert np.allclose(lin.lambdas, [1.0, 2.0])
    assert abs(abs(lin.axes[:, 0] @ R[:, 0]) - 1) < 1e-12


def test_config_round_trip():
    m = GaussianBarrier(0.8, (1.0, 1.7)).rotated(rotation_2d(0.3))
    m2 = model_from_config(m.to_config())
    assert m2.config_hash() == m.config_hash()
    x = np.array([[0.3, -0.2], [1.1, 0.5]])
    assert np.allclose(m.potential(x), m2.potential(x), rtol=1e-15)


@pytest.mark.parametrize("cfg", [
    {"family": "gaussian", "n": 2, "E0": 1.0},
    {"family": "nope", "lambda": [1.0]},
    {"family": "gaussian", "n": 3, "E0": 1.0, "lambda": [1.0, 2.0]},
    {"family": "gaussian", "E0": 1.0, "lambda": [1.0], "schema_version": 99},
])
def test_bad_configs(cfg):
    with pytest.raises(ConfigError):
        model_from_config(cfg)


def test_non_finite_evaluation():
    with pytest.raises(ModelEvaluationError):
        evaluate(GaussianBarrier(1.0, (1.0,)), [np.nan])


def test_validation_passes_for_barriers(aniso):
    rep = validate_assumptions(aniso)
    assert rep.ok, rep.to_dict()


def test_validation_rejects_non_barrier():
    with pytest.raises(AssumptionViolation):
        linearization(HarmonicWell(1.0, 2))


def test_energy_spec_window():
    assert EnergySpec(1.0, 2.0, 0.01).E == pytest.approx(1.02)
    with pytest.raises(ValueError):
        EnergySpec(1.0, 20.0, 0.01)


def test_free_and_quadratic():
    assert FreeModel(3).potential(np.ones(3)) == 0.0
    q = QuadraticBarrier(1.0, (1.0, 2.0))
    assert q.potential(np.array([1.0, 1.0])) == pytest.approx(1.0 - 0.5 * (1 + 4))
