"""Simulation designs: truth objects, generation determinism, RNG streams."""

import numpy as np
import pytest

from tvnets import ScenarioSpec, ValidationError, generate
from tvnets.simulate import (
    BURN_IN_DEFAULT,
    truth_example1,
    truth_example2,
    truth_example3,
    truth_example4,
)

from properties import prop_truth_invariants


def test_truth_invariants_all_examples():
    prop_truth_invariants()


def test_spec_validation():
    with pytest.raises(ValidationError):
        ScenarioSpec(example=5, d=10, n=100, seed=0)
    with pytest.raises(ValidationError):
        ScenarioSpec(example=1, d=7, n=100, seed=0)  # example 1 needs even d
    with pytest.raises(ValidationError):
        ScenarioSpec(example=2, d=1, n=100, seed=0)
    with pytest.raises(ValidationError):
        ScenarioSpec(example=2, d=10, n=100, seed=0, replication=-1)


def test_generation_is_deterministic():
    spec = ScenarioSpec(example=2, d=6, n=80, seed=42)
    p1, t1 = generate(spec)
    p2, t2 = generate(spec)
    assert np.array_equal(p1.values, p2.values)
    assert np.array_equal(t1.A1, t2.A1)
    assert np.array_equal(t1.innovations, t2.innovations)


def test_replications_differ():
    a, _ = generate(ScenarioSpec(example=2, d=6, n=80, seed=42, replication=0))
    b, _ = generate(ScenarioSpec(example=2, d=6, n=80, seed=42, replication=1))
    assert not np.array_equal(a.values, b.values)


def test_seeds_differ():
    a, _ = generate(ScenarioSpec(example=2, d=6, n=80, seed=1))
    b, _ = generate(ScenarioSpec(example=2, d=6, n=80, seed=2))
    assert not np.array_equal(a.values, b.values)


def test_deterministic_designs_share_truth_across_replications():
    # examples 2 and 3 have non-random truths: replications only change noise
    for example in (2, 3):
        _, t0 = generate(ScenarioSpec(example=example, d=6, n=80, seed=9,
                                      replication=0))
        _, t1 = generate(ScenarioSpec(example=example, d=6, n=80, seed=9,
                                      replication=1))
        assert np.array_equal(t0.A1, t1.A1)
        assert np.array_equal(t0.Omega, t1.Omega)


def test_panel_matches_recursion_from_truth():
    # regenerating X_t from A1, the innovations and the burn-in-free start
    # must reproduce the panel exactly for a replication
    spec = ScenarioSpec(example=3, d=5, n=60, seed=4)
    panel, truth = generate(spec)
    X = panel.values
    for t in range(1, 60):
        pred = truth.A1[t] @ X[t - 1] + truth.innovations[t]
        assert np.allclose(X[t], pred, atol=1e-12), t


def test_innovation_shapes():
    spec = ScenarioSpec(example=1, d=8, n=70, seed=5)
    panel, truth = generate(spec)
    assert truth.innovations.shape == (70, 8)
    assert panel.values.shape == (70, 8)
    assert truth.factors is None and truth.loadings is None


def test_example4_factor_structure():
    spec = ScenarioSpec(example=4, d=10, n=80, seed=6)
    panel, truth = generate(spec)
    assert truth.factors.shape == (80, 2)
    assert truth.loadings.shape == (80, 10, 2)
    assert truth.idiosyncratic.shape == (80, 10)
    common = np.einsum("tdk,tk->td", truth.loadings, truth.factors)
    assert np.allclose(panel.values, common + truth.idiosyncratic, atol=1e-12)


def test_example1_truth_is_seeded():
    t1 = truth_example1(6, 50, seed=3)
    t2 = truth_example1(6, 50, seed=3)
    t3 = truth_example1(6, 50, seed=4)
    assert np.array_equal(t1.A1, t2.A1)
    assert not np.array_equal(t1.A1, t3.A1)


def test_example1_block_structure():
    t = truth_example1(8, 60, seed=1)
    # transition is diagonal, precision couples disjoint 2x2 blocks
    offdiag = t.A1 * (1.0 - np.eye(8))
    assert np.all(offdiag == 0.0)
    assert t.partial_edges == frozenset({(0, 1), (2, 3), (4, 5), (6, 7)})


def test_example2_banded_transition():
    t = truth_example2(6, 60)
    A = t.A1[30]
    for i in range(6):
        for j in range(6):
            if abs(i - j) > 1:
                assert A[i, j] == 0.0
    assert (0, 1) in t.granger_edges and (0, 0) in t.granger_edges
    assert (0, 5) not in t.granger_edges


def test_example3_dense_truth():
    t = truth_example3(5, 40)
    assert np.all(np.any(t.A1 != 0.0, axis=0))
    assert len(t.granger_edges) == 25


def test_burn_in_changes_sample_path_not_truth():
    a, ta = generate(ScenarioSpec(example=2, d=5, n=60, seed=8, burn_in=50))
    b, tb = generate(ScenarioSpec(example=2, d=5, n=60, seed=8,
                                  burn_in=BURN_IN_DEFAULT))
    assert np.array_equal(ta.A1, tb.A1)
    assert not np.array_equal(a.values, b.values)
