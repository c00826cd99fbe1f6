import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from owlprune.errors import NumericalError, PreconditionError, StructuralError
from owlprune.tensor import (
    ActivationNorms,
    NormAccumulator,
    PruneMask,
    WeightMatrix,
    apply_mask,
    column_l2_norms,
    select_smallest_k,
)


def test_weight_matrix_is_read_only_copy():
    src = np.arange(6.0).reshape(2, 3)
    w = WeightMatrix("a", src)
    src[0, 0] = 99.0
    assert w.values[0, 0] == 0.0
    with pytest.raises(ValueError):
        w.values[0, 0] = 1.0
    assert (w.rows, w.cols, w.size) == (2, 3, 6)


@pytest.mark.parametrize("bad", [np.zeros(3), np.zeros((0, 2)), np.zeros((2, 2, 2))])
def test_weight_matrix_rejects_bad_shapes(bad):
    with pytest.raises(StructuralError):
        WeightMatrix("a", bad)


def test_weight_matrix_rejects_non_finite():
    with pytest.raises(NumericalError):
        WeightMatrix("a", np.array([[1.0, np.nan]]))


def test_norms_validation():
    with pytest.raises(NumericalError):
        ActivationNorms("a", np.array([1.0, -1.0]), 3)
    with pytest.raises(PreconditionError):
        ActivationNorms("a", np.array([1.0]), -1)


def test_column_norms_hand_values():
    batch = np.array([[3.0, 0.0], [4.0, 1.0]])
    assert column_l2_norms(batch).norms.tolist() == [5.0, 1.0]


def test_accumulator_is_batch_split_independent(rng):
    x = rng.normal(size=(37, 5))
    whole = NormAccumulator("a", 5).update(x).result()
    parts = NormAccumulator("a", 5)
    for chunk in np.array_split(x, 6):
        parts.update(chunk)
    np.testing.assert_allclose(parts.result().norms, whole.norms, rtol=1e-14)
    assert parts.result().sample_count == 37


def test_accumulator_width_check():
    with pytest.raises(StructuralError):
        NormAccumulator("a", 3).update(np.zeros((2, 4)))


def test_apply_mask_zeroes_pruned_and_leaves_input():
    w = WeightMatrix("a", np.ones((2, 2)))
    m = PruneMask(np.array([[True, False], [False, True]]))
    out = apply_mask(w, m)
    assert out.values.tolist() == [[1.0, 0.0], [0.0, 1.0]]
    assert w.values.sum() == 4.0
    assert m.pruned_count == 2 and m.sparsity == 0.5
    with pytest.raises(StructuralError):
        apply_mask(w, PruneMask.keep_all(3, 2))


def test_select_smallest_k_tie_break():
    assert select_smallest_k([2.0, 1.0, 1.0, 1.0, 0.5], 3).tolist() == [1, 2, 4]
    assert select_smallest_k([1.0, 1.0], 0).tolist() == []
    with pytest.raises(PreconditionError):
        select_smallest_k([1.0], 2)


@settings(max_examples=200, deadline=None)
@given(
    arrays(np.float64, st.integers(1, 40), elements=st.sampled_from([0.0, 0.5, 1.0, 2.0, 3.0])),
    st.data(),
)
def test_select_smallest_k_matches_sorted_pairs(scores, data):
    k = data.draw(st.integers(0, scores.size))
    expected = sorted(sorted(range(scores.size), key=lambda i: (scores[i], i))[:k])
    assert select_smallest_k(scores, k).tolist() == expected
