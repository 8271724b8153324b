import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from policylearn.core import (
    Branch,
    FoldAssignment,
    Leaf,
    ObservationalDataset,
    ScoreMatrix,
    check_tree,
    hamming_distance,
    predict,
    render_tree,
    tree_assign,
    tree_from_json,
    tree_to_json,
    validate_dataset,
)
from policylearn.errors import (
    ActionOutOfRange,
    DimensionMismatch,
    EmptyPointSet,
    InvalidPropensityRow,
    NonFiniteValue,
    OverlapWarning,
)

# the three-action example tree; actions are zero-based here
FIG_TREE = Branch(0, 0.5, Branch(1, 0.4, Leaf(0), Leaf(2)), Branch(1, 0.8, Leaf(1), Leaf(0)))


def ds(X, A, Y, d, E=None):
    return ObservationalDataset(np.asarray(X, float), np.asarray(A), np.asarray(Y, float), d, E)


def test_minimal_dataset_accepted():
    out = validate_dataset(ds([[0.0], [1.0]], [0, 1], [1.0, 0.0], 2))
    assert (out.n, out.p, out.d) == (2, 1, 2)
    assert not out.features.flags.writeable


def test_action_out_of_range():
    with pytest.raises(ActionOutOfRange):
        validate_dataset(ds([[0.0], [1.0]], [0, 2], [1.0, 0.0], 2))


def test_propensity_row_must_sum_to_one():
    E = np.array([[0.6, 0.6], [0.5, 0.5]])
    with pytest.raises(InvalidPropensityRow):
        validate_dataset(ds([[0.0], [1.0]], [0, 1], [1.0, 0.0], 2, E))


def test_zero_propensity_on_logged_action():
    E = np.array([[0.0, 1.0], [0.5, 0.5]])
    with pytest.raises(InvalidPropensityRow):
        validate_dataset(ds([[0.0], [1.0]], [0, 1], [1.0, 0.0], 2, E))


def test_non_finite_and_shape_errors():
    with pytest.raises(NonFiniteValue):
        validate_dataset(ds([[np.nan], [1.0]], [0, 1], [1.0, 0.0], 2))
    with pytest.raises(NonFiniteValue):
        validate_dataset(ds([[0.0], [1.0]], [0, 1], [np.inf, 0.0], 2))
    with pytest.raises(DimensionMismatch):
        validate_dataset(ds([[0.0], [1.0]], [0], [1.0, 0.0], 2))
    with pytest.raises(DimensionMismatch):
        validate_dataset(ds([[0.0], [1.0]], [0, 1], [1.0, 0.0], 1))


def test_overlap_floor_only_warns():
    E = np.array([[0.05, 0.95], [0.5, 0.5]])
    with pytest.warns(OverlapWarning):
        out = validate_dataset(ds([[0.0], [1.0]], [1, 1], [1.0, 0.0], 2, E), eta=0.1)
    assert out.known_propensities is not None


@given(
    n=st.integers(1, 6),
    d=st.integers(2, 4),
    data=st.data(),
)
def test_validate_accepts_exactly_valid_inputs(n, d, data):
    X = data.draw(hnp.arrays(float, (n, 2), elements=st.floats(-1e6, 1e6)))
    A = data.draw(hnp.arrays(np.int64, n, elements=st.integers(-1, d)))
    Y = data.draw(hnp.arrays(float, n, elements=st.floats(-1e6, 1e6)))
    valid = bool(np.all((A >= 0) & (A < d)))
    if valid:
        assert validate_dataset(ds(X, A, Y, d)).n == n
    else:
        with pytest.raises(ActionOutOfRange):
            validate_dataset(ds(X, A, Y, d))


def test_tree_assign_example_tree():
    assert tree_assign(FIG_TREE, [0.4, 0.5]) == 2
    assert tree_assign(FIG_TREE, [0.5, 0.7]) == 1
    assert tree_assign(Leaf(1), [123.0]) == 1


def test_ties_go_right():
    t = Branch(0, 0.5, Leaf(0), Leaf(1))
    assert tree_assign(t, [0.5]) == 1
    assert tree_assign(t, [np.nextafter(0.5, 0)]) == 0


@given(hnp.arrays(float, (20, 2), elements=st.floats(0, 1)))
def test_predict_matches_tree_assign(X):
    assert predict(FIG_TREE, X).tolist() == [tree_assign(FIG_TREE, x) for x in X]


def test_hamming_examples():
    pts = np.array([0.2, 0.4, 0.6, 0.8])
    t1 = Branch(0, 0.5, Leaf(0), Leaf(1))
    assert hamming_distance(t1, t1, pts) == 0.0
    assert hamming_distance(Leaf(0), Leaf(1), pts) == 1.0
    assert hamming_distance(t1, Leaf(0), pts) == 0.5
    with pytest.raises(EmptyPointSet):
        hamming_distance(t1, t1, np.empty((0, 1)))


trees = st.recursive(
    st.builds(Leaf, st.integers(0, 2)),
    lambda kids: st.builds(Branch, st.integers(0, 1), st.floats(0, 1), kids, kids),
    max_leaves=8,
)


@given(trees, trees, trees, hnp.arrays(float, (15, 2), elements=st.floats(0, 1)))
def test_hamming_is_a_pseudometric(t1, t2, t3, pts):
    d12 = hamming_distance(t1, t2, pts)
    assert d12 == hamming_distance(t2, t1, pts)
    assert hamming_distance(t1, t1, pts) == 0.0
    assert hamming_distance(t1, t3, pts) <= d12 + hamming_distance(t2, t3, pts) + 1e-12


@given(trees)
def test_json_round_trip(tree):
    assert tree_from_json(tree_to_json(tree)) == tree
    assert tree_from_json(tree_to_json(tree, indent=None)) == tree


def test_json_schema():
    obj = json.loads(tree_to_json(Branch(1, 0.25, Leaf(0), Leaf(2))))
    assert obj == {"split_dim": 1, "split_value": 0.25, "left": {"leaf_action": 0}, "right": {"leaf_action": 2}}
    with pytest.raises(ValueError):
        tree_from_json('{"split_dim": 0}')


def test_check_tree_and_render():
    check_tree(FIG_TREE, p=2, d=3, max_depth=3)
    with pytest.raises(ValueError):
        check_tree(FIG_TREE, p=1, d=3)
    with pytest.raises(ValueError):
        check_tree(FIG_TREE, p=2, d=2)
    with pytest.raises(ValueError):
        check_tree(FIG_TREE, p=2, d=3, max_depth=2)
    text = render_tree(FIG_TREE)
    assert text.splitlines()[0] == "if x0 < 0.5:"
    assert FIG_TREE.depth() == 3 and Leaf(0).depth() == 1


def test_score_matrix_validation():
    with pytest.raises(DimensionMismatch):
        ScoreMatrix(np.zeros(3))
    with pytest.raises(NonFiniteValue):
        ScoreMatrix(np.array([[np.nan, 0.0]]))
    assert ScoreMatrix([[1, 2]]).d == 2


def test_fold_assignment_invariants():
    f = FoldAssignment(np.array([0, 1, 2, 0, 1]), 3)
    assert f.sizes().tolist() == [2, 2, 1]
    assert f.members(2).tolist() == [2]
    assert f.complement(0).tolist() == [1, 2, 4]
    with pytest.raises(ValueError):
        FoldAssignment(np.array([0, 0, 0, 1]), 2)
    with pytest.raises(ValueError):
        FoldAssignment(np.array([0, 1]), 1)
