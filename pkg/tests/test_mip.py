import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from calicert.errors import FeasibilityError, InputError
from calicert.metrics import BinningScheme, PredictionRecord, compute_ece
from calicert.mip import (
    FeasiblePoint,
    build_instance,
    build_instance_arrays,
    check_feasibility,
    enumeration_size,
    natural_point,
    objective,
    point_from_bins,
    project_feasible,
    relaxed_objective,
    vertex_point,
)
from calicert.synthetic import random_box_instance


def test_e2_layout(e2):
    assert e2.lower.tolist() == [0.1, 1 / 3, 0.0, 0.0, 0.5, 2 / 3]
    assert e2.upper.tolist() == [1 / 3, 0.6, 0.0, 0.0, 2 / 3, 0.9]
    assert e2.k.tolist() == [0, 0, 1, 1, 0, 0]
    assert enumeration_size(e2) == 4


def test_e2_objective(e2):
    p = point_from_bins(e2, [0, 2], [0.1, 0, 0, 0, 0, 0.9])
    assert objective(e2, p) == pytest.approx(0.9, abs=1e-15)


def test_objective_zero_when_confidence_equals_correctness():
    inst = build_instance_arrays([1, 0], [0.5, 0.0], [1.0, 0.4], BinningScheme.equal_width(2))
    p = point_from_bins(inst, [1, 0], [0, 1.0, 0.0, 0])
    assert objective(inst, p) == 0.0


def test_degenerate_single_bin():
    inst = build_instance_arrays([1], [0.4], [0.4], BinningScheme.equal_width(1))
    assert inst.lower.tolist() == [0.4] and inst.upper.tolist() == [0.4] and inst.k.tolist() == [0]


def test_degenerate_box_keeps_home_bin():
    inst = build_instance_arrays([1, 0], [1 / 3, 1.0], [1 / 3, 1.0], BinningScheme.equal_width(3))
    assert inst.accessible.tolist() == [[False, True, False], [False, False, True]]


def test_full_boxes_everything_accessible():
    s = BinningScheme.equal_width(4)
    inst = build_instance_arrays([1, 0, 1], [0.0] * 3, [1.0] * 3, s)
    assert inst.k.sum() == 0
    assert inst.lower.reshape(3, 4)[1].tolist() == list(s.lower_edges)
    assert inst.upper.reshape(3, 4)[2].tolist() == list(s.upper_edges)


def test_building_rejects_bad_input():
    s = BinningScheme.equal_width(2)
    with pytest.raises(InputError):
        build_instance_arrays([1], [0.6], [0.5], s)
    with pytest.raises(InputError):
        build_instance_arrays([], [], [], s)
    with pytest.raises(InputError):
        build_instance([PredictionRecord(0, 0.5, True)], s)


def test_point_box_on_edge_reaches_one_bin():
    s = BinningScheme("equal-count", 3, (0.0, 0.5, 0.5, 1.0))
    inst = build_instance_arrays([1], [0.5], [0.5], s)
    assert inst.accessible.tolist() == [[False, False, True]]


def test_feasibility_residuals(e2):
    p = point_from_bins(e2, [1, 2], [0, 0.5, 0, 0, 0, 0.8])
    assert check_feasibility(e2, p.a, p.z).max() == 0.0
    uniform = np.full(6, 1 / 3)
    res = check_feasibility(e2, uniform, p.z)
    assert res.unique == pytest.approx(0.0, abs=1e-15)
    assert res.binary == pytest.approx(1 / 3)
    two = p.a.copy()
    two[0] = 1.0
    assert check_feasibility(e2, two, p.z).unique == 1.0


def test_objective_refuses_infeasible(e2):
    with pytest.raises(FeasibilityError):
        objective(e2, FeasiblePoint(np.full(6, 1 / 3), np.zeros(6)))


def test_projection_rules(e2):
    p = point_from_bins(e2, [0, 2], [0.2, 0, 0, 0, 0, 0.7])
    q = project_feasible(e2, p.a, p.z)
    assert np.array_equal(q.a, p.a) and np.array_equal(q.z, p.z)
    u = project_feasible(e2, np.full(6, 1 / 3), np.zeros(6))
    assert u.bins(3).tolist() == [0, 1]
    favour_bad = np.array([0.2, 0.3, 0.9, 0.9, 0.05, 0.05])
    assert project_feasible(e2, favour_bad, np.zeros(6)).bins(3).tolist() == [1, 1]


def test_vertex_point_is_optimal_for_its_assignment(e2):
    assert objective(e2, vertex_point(e2, [0, 2])) == pytest.approx(0.9)
    assert vertex_point(e2, [0, 2]).confidences(3).tolist() == [0.1, 0.9]


@given(st.integers(0, 2**32 - 1), st.integers(1, 10), st.integers(1, 6))
def test_natural_point_matches_ece(seed, N, M):
    rng = np.random.default_rng(seed)
    inst = random_box_instance(rng, N, M)
    p = natural_point(inst, inst.clean)
    assert check_feasibility(inst, p.a, p.z).max() == 0.0
    recs = [PredictionRecord(i, z, bool(c)) for i, (z, c) in enumerate(zip(inst.clean, inst.c))]
    assert objective(inst, p) == pytest.approx(compute_ece(recs, inst.binning).ece, abs=1e-12)


@given(st.integers(0, 2**32 - 1), st.integers(1, 10), st.integers(1, 6))
def test_instance_invariants_and_projection(seed, N, M):
    rng = np.random.default_rng(seed)
    inst = random_box_instance(rng, N, M)
    L, U = inst.lower.reshape(N, M), inst.upper.reshape(N, M)
    K = inst.k.reshape(N, M).astype(bool)
    assert np.all(L <= U)
    assert np.all(L[K] == 0) and np.all(U[K] == 0)
    assert np.all((~K).sum(axis=1) >= 1)
    lB, uB = inst.binning.lower_edges, inst.binning.upper_edges
    nondeg = inst.box_lower < inst.box_upper
    for n in np.flatnonzero(nondeg):
        for m in np.flatnonzero(~K[n]):
            assert L[n, m] == max(inst.box_lower[n], lB[m]) and U[n, m] == min(inst.box_upper[n], uB[m])
    p = project_feasible(inst, rng.normal(size=N * M), rng.normal(size=N * M))
    assert check_feasibility(inst, p.a, p.z).max() == 0.0
    assert 0.0 <= objective(inst, p) <= 1.0


@given(st.integers(0, 2**32 - 1))
def test_inaccessible_slots_inert(seed):
    rng = np.random.default_rng(seed)
    inst = random_box_instance(rng, 5, 4)
    p = project_feasible(inst, rng.random(20), rng.random(20))
    z = p.z.copy()
    z[inst.k == 1] = rng.random(int(inst.k.sum()))
    assert relaxed_objective(inst, p.a, z) == relaxed_objective(inst, p.a, p.z)
