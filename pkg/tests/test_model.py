import numpy as np
import pytest
import scipy.sparse as sp

from hawkshape import BudgetSpec, Cascade, EventLog, HawkesNetwork, IntensityCurve, ShapingTask, validate_network
from hawkshape.exceptions import (DimensionMismatch, DuplicateEntry, InvalidKind, MissingTarget, NegativeEntry,
                                  NonpositiveOmega, ValidationError)
from hawkshape.synth import random_network


def test_valid_scalar_network():
    net = HawkesNetwork(sp.csr_matrix([[0.5]]), 1.0)
    assert validate_network(net) is None
    assert net.m == 1


def test_negative_entry_reports_position():
    with pytest.raises(NegativeEntry) as exc:
        HawkesNetwork(sp.csr_matrix([[-0.1]]), 1.0)
    assert (exc.value.row, exc.value.col) == (0, 0)


def test_out_of_range_triplet():
    with pytest.raises(DimensionMismatch):
        HawkesNetwork.from_triplets(2, [(0, 5, 0.1)], 1.0)


def test_duplicate_triplets_rejected():
    with pytest.raises(DuplicateEntry):
        HawkesNetwork.from_triplets(2, [(0, 1, 0.1), (0, 1, 0.2)], 1.0)


@pytest.mark.parametrize("omega", [0.0, -1.0, np.nan])
def test_nonpositive_omega(omega):
    with pytest.raises(NonpositiveOmega):
        HawkesNetwork(sp.csr_matrix([[0.5]]), omega)


def test_non_square_matrix():
    with pytest.raises(DimensionMismatch):
        HawkesNetwork(np.zeros((2, 3)), 1.0)


def test_triplets_sorted_and_equality():
    net = HawkesNetwork.from_triplets(3, [(2, 0, 0.3), (0, 2, 0.1), (0, 1, 0.2)], 2.0)
    rows, cols, vals = net.triplets()
    assert list(zip(rows, cols)) == [(0, 1), (0, 2), (2, 0)]
    assert net == HawkesNetwork.from_triplets(3, list(zip(rows, cols, vals)), 2.0)
    assert net != net.with_A(net.A * 2)


def test_kernel_and_branching():
    net = HawkesNetwork(sp.csr_matrix([[0.5, 0.2], [0.0, 0.4]]), 2.0)
    np.testing.assert_allclose(net.kernel_matrix(1.0).toarray(), net.A.toarray() * np.exp(-2.0))
    np.testing.assert_allclose(net.branching_matrix().toarray(), net.A.toarray() / 2.0)


def test_random_networks_validate(rng):
    for _ in range(5):
        net = random_network(20, 3, 1.0, 0.7, rng)
        assert validate_network(net) is None


def test_cascade_invariants():
    Cascade(10.0, [0, 1], [1.0, 2.0], [0, 1], [-1, 0])
    with pytest.raises(ValidationError):
        Cascade(10.0, [0, 1], [2.0, 1.0])
    with pytest.raises(ValidationError):
        Cascade(10.0, [0], [11.0])
    with pytest.raises(ValidationError):
        Cascade(10.0, [0, 1], [1.0, 2.0], [0, 0], [-1, 0])
    with pytest.raises(ValidationError):
        Cascade(10.0, [0], [1.0], [1], [-1])
    with pytest.raises(DimensionMismatch):
        EventLog((Cascade(10.0, [3], [1.0]),), m=2)


def test_cascade_arrays_read_only():
    c = Cascade(5.0, [0], [1.0])
    with pytest.raises(ValueError):
        c.times[0] = 2.0


def test_budget_spec():
    b = BudgetSpec.uniform(3, 1.5)
    assert b.spent([0.5, 0.5, 0.5]) == pytest.approx(1.5)
    with pytest.raises(ValidationError):
        BudgetSpec([1.0, 0.0], 1.0)
    with pytest.raises(ValidationError):
        BudgetSpec([1.0], -1.0)


def test_shaping_task_parameters():
    with pytest.raises(MissingTarget):
        ShapingTask("cam")
    with pytest.raises(MissingTarget):
        ShapingTask("lsash")
    with pytest.raises(InvalidKind):
        ShapingTask("foo")
    with pytest.raises(ValidationError):
        ShapingTask("hom", alpha=[1.0])
    with pytest.raises(ValidationError):
        ShapingTask.hom(gamma=-1)
    t = ShapingTask.lsash([1.0, 2.0])
    assert t.B.shape == (2, 2) and t.smooth
    assert not ShapingTask.mmash().smooth
    assert ShapingTask.cam([1.0]).with_gamma(0.3).gamma == 0.3
    with pytest.raises(DimensionMismatch):
        t.check_dim(3)


def test_intensity_curve():
    c = IntensityCurve(2.0, [[0.5, 0.0], [1.0, 1.0]])
    np.testing.assert_allclose(c.edges, [0, 2, 4])
    np.testing.assert_allclose(c.midpoints, [1, 3])
    np.testing.assert_allclose(c.final(), [1, 1])
    with pytest.raises(ValidationError):
        IntensityCurve(1.0, [[-1.0]])
