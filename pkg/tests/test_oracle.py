import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from calicert.admm import AdmmConfig, brier_start, multi_start_solve
from calicert.dece import DeceSchedule, maximize_dece
from calicert.errors import TooLargeError
from calicert.metrics import BinningScheme, PredictionRecord, compute_ece
from calicert.mip import build_instance_arrays, check_feasibility, natural_point, objective
from calicert.oracle import brute_force_cce, grid_cce
from calicert.synthetic import random_box_instance


def test_e2_oracle(e2):
    val, witness = brute_force_cce(e2)
    assert val == 0.9
    assert witness.bins(3).tolist() == [0, 2]
    assert witness.confidences(3).tolist() == [0.1, 0.9]


def test_e2_all_assignment_values(e2):
    from calicert.mip import vertex_point

    vals = sorted(objective(e2, vertex_point(e2, b)) for b in ([0, 1], [0, 2], [1, 1], [1, 2]))
    # the worked example rounds 2/3 to four places
    assert vals == pytest.approx(sorted([0.78335, 0.9, 0.13335, 0.78335]), abs=1e-4)
    assert vals[0] == pytest.approx(0.4 / 3, abs=1e-15)


def test_degenerate_boxes_equal_fixed_ece():
    z = np.array([0.12, 0.5, 0.51, 0.97])
    c = np.array([1, 0, 1, 1])
    s = BinningScheme.equal_width(4)
    inst = build_instance_arrays(c, z, z, s)
    recs = [PredictionRecord(i, zi, bool(ci)) for i, (zi, ci) in enumerate(zip(z, c))]
    ece = compute_ece(recs, s).ece
    assert brute_force_cce(inst)[0] == pytest.approx(ece, abs=1e-15)
    assert grid_cce(inst, 3) == pytest.approx(ece, abs=1e-15)


def test_single_sample_full_box():
    inst = build_instance_arrays([1], [0.0], [1.0], BinningScheme.equal_width(2))
    val, w = brute_force_cce(inst)
    assert val == 1.0 and w.bins(2).tolist() == [0] and w.confidences(2).tolist() == [0.0]


def test_grid_endpoints_on_e2(e2):
    assert grid_cce(e2, 2) == pytest.approx(0.9)


def test_guards(e2):
    with pytest.raises(TooLargeError):
        brute_force_cce(e2, guard=3)
    with pytest.raises(TooLargeError):
        grid_cce(e2, 10, guard=50)


@given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.integers(1, 3))
def test_grid_never_exceeds_enumeration(seed, N, M):
    inst = random_box_instance(np.random.default_rng(seed), N, M)
    assert grid_cce(inst, 4) <= brute_force_cce(inst)[0] + 1e-12


@given(st.integers(0, 2**32 - 1), st.integers(1, 7), st.integers(1, 4))
def test_enumeration_dominates_other_points(seed, N, M):
    inst = random_box_instance(np.random.default_rng(seed), N, M)
    val, witness = brute_force_cce(inst)
    assert check_feasibility(inst, witness.a, witness.z).max() == 0.0
    assert objective(inst, witness) == val
    for z in (inst.clean, brier_start(inst)):
        assert objective(inst, natural_point(inst, z)) <= val + 1e-12


def test_enumeration_dominates_solvers(rng):
    cfg = AdmmConfig(trace=False)
    sched = DeceSchedule(stages=8, steps_per_stage=20)
    for _ in range(10):
        inst = random_box_instance(rng, 5, 3)
        val = brute_force_cce(inst)[0]
        assert multi_start_solve(inst, cfg).best_acce <= val + 1e-9
        assert maximize_dece(inst, sched).ece <= val + 1e-9


def test_vertex_argument_against_dense_grid(rng):
    # one bin, several samples: the bin term is linear in z, so a grid can't beat its vertices
    for _ in range(100):
        n = int(rng.integers(1, 4))
        c = rng.random(n) < 0.5
        lo = rng.random(n) * 0.5
        hi = lo + rng.random(n) * 0.5
        inst = build_instance_arrays(c, lo, hi, BinningScheme.equal_width(1))
        grid = np.stack(np.meshgrid(*[np.linspace(a, b, 10 * n + 1) for a, b in zip(lo, hi)]), -1).reshape(-1, n)
        dense = np.abs((c - grid).sum(axis=1)).max() / n
        assert brute_force_cce(inst)[0] == pytest.approx(dense, abs=1e-12)
