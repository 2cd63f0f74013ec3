import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from saddlescatter.errors import IndeterminateRankError
from saddlescatter.flow import PhasePoint, flow_with_variational
from saddlescatter.manifolds import ManifoldOptions, sample_manifold
from saddlescatter.verifier import (DimensionError, SpaceSpec, TangentFrame, clean_intersection_excess,
                                    graph_frame, lagrangian_defect, sampled_configurations,
                                    symplectic_form)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 3))
def test_form_antisymmetric_bilinear(seed, n):
    rng = np.random.default_rng(seed)
    u, v, w = rng.standard_normal((3, 2 * n))
    assert symplectic_form(u, v) == pytest.approx(-symplectic_form(v, u))
    assert symplectic_form(u, v + 2 * w) == pytest.approx(symplectic_form(u, v) + 2 * symplectic_form(u, w))


def test_form_convention():
    # sigma(d/dx, d/dxi) = 1
    assert symplectic_form([1.0, 0.0], [0.0, 1.0]) == 1.0
    twisted = SpaceSpec((1, 1), (1, -1))
    assert symplectic_form([0, 0, 1.0, 0], [0, 0, 0, 1.0], twisted) == -1.0


def test_dimension_errors():
    with pytest.raises(DimensionError):
        symplectic_form([1.0, 0.0], [1.0, 0.0, 0.0, 0.0])
    with pytest.raises(DimensionError):
        SpaceSpec((1,), (2,))
    with pytest.raises(DimensionError):
        lagrangian_defect(TangentFrame(np.zeros(4), np.eye(4)[:, :1], SpaceSpec.single(2)))


def test_graph_of_symplectic_map_is_lagrangian(aniso):
    p = PhasePoint(np.array([0.3, 0.2]), np.array([0.5, -0.4]))
    q, M = flow_with_variational(aniso, p, 1.5)
    G = graph_frame(M, p.as_array(), q.as_array())
    assert lagrangian_defect(G) < 1e-10


def test_graph_of_non_symplectic_map_is_not():
    M = np.diag([2.0, 1.0, 1.0, 1.0])
    G = graph_frame(M, np.zeros(4), np.zeros(4))
    assert lagrangian_defect(G) > 0.1


def test_excess_textbook_cases():
    spec = SpaceSpec.single(2)
    e = np.eye(4)
    # transversal planes: excess 0
    r = clean_intersection_excess(TangentFrame(np.zeros(4), e[:, :2], spec), TangentFrame(np.zeros(4), e[:, 2:], spec))
    assert r.excess == 0 and r.dim_intersection == 0
    # a line in common: excess 1
    r = clean_intersection_excess(TangentFrame(np.zeros(4), e[:, :2], spec), TangentFrame(np.zeros(4), e[:, 1:3], spec))
    assert r.excess == 1 and r.dim_intersection == 1
    # basis independence
    A = np.array([[1.0, 2.0], [0.5, -1.0]])
    r2 = clean_intersection_excess(TangentFrame(np.zeros(4), e[:, :2] @ A, spec),
                                   TangentFrame(np.zeros(4), e[:, 1:3], spec))
    assert r2.excess == 1


def test_ambiguous_rank_raises():
    spec = SpaceSpec.single(2)
    e = np.eye(4)
    tilt = e[:, 2] + 1e-8 * e[:, 3]
    with pytest.raises(IndeterminateRankError):
        clean_intersection_excess(TangentFrame(np.zeros(4), e[:, :3], spec),
                                  TangentFrame(np.zeros(4), np.column_stack([tilt, e[:, 0]]), spec))


def test_mismatched_base_points():
    spec = SpaceSpec.single(1)
    with pytest.raises(DimensionError):
        clean_intersection_excess(TangentFrame(np.zeros(2), np.eye(2)[:, :1], spec),
                                  TangentFrame(np.ones(2), np.eye(2)[:, 1:], spec))


def test_sampled_configurations_small(aniso):
    opts = ManifoldOptions(n_seeds=16, n_times=11)
    patches = (sample_manifold(aniso, "+", opts=opts), sample_manifold(aniso, "-", opts=opts))
    out = sampled_configurations(aniso, count=3, seed=5, patches=patches)
    assert {r["configuration"]: r["excess"] for r in out if r["sample"] == 0} == {"graph": 0, "flowout": 1}
    assert all(r["excess"] is not None for r in out)
