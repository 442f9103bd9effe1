import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from hybridsim.model import (BoxConstraints, DimensionError, LinearModel,
                             NonFiniteError, StateSemantics, project,
                             spectral_radius, step)


def brute_matvec(M, v):
    return [sum(M[i][j] * v[j] for j in range(len(v))) for i in range(len(M))]


def test_step_identity_dynamics():
    m = LinearModel(np.eye(2), np.zeros((2, 1)))
    assert step(m, [3, -1], [42.0]).tolist() == [3.0, -1.0]


def test_step_pure_input_response():
    m = LinearModel(np.zeros((2, 2)), [[1.0], [2.0]])
    assert step(m, [7.0, -5.0], [0.5]).tolist() == [0.5, 1.0]


def test_step_hand_example_matches_brute_force():
    A = [[0.5, 0.0], [0.1, 0.9]]
    B = [[1.0], [0.0]]
    x, u = [2.0, 4.0], [-1.0]
    oracle = [a + b for a, b in zip(brute_matvec(A, x), brute_matvec(B, u))]
    assert oracle == pytest.approx([0.0, 3.8], abs=1e-15)
    got = step(LinearModel(A, B), x, u)
    np.testing.assert_allclose(got, oracle, atol=1e-15)


def test_step_dimension_errors_name_operand():
    m = LinearModel(np.eye(2), np.zeros((2, 1)))
    with pytest.raises(DimensionError, match="x"):
        step(m, [1, 2, 3], [0])
    with pytest.raises(DimensionError, match="u"):
        step(m, [1, 2], [0, 0])


def test_step_non_finite_result_names_component():
    m = LinearModel([[1e308, 0], [0, 1]], np.zeros((2, 1)))
    with pytest.raises(NonFiniteError, match=r"x\[0\]"):
        step(m, [10.0, 1.0], [0.0])


def test_model_rejects_bad_shapes():
    with pytest.raises(DimensionError):
        LinearModel(np.ones((2, 3)), np.ones((2, 1)))
    with pytest.raises(DimensionError):
        LinearModel(np.eye(2), np.ones((3, 1)))
    with pytest.raises(NonFiniteError):
        LinearModel([[np.nan]], [[1.0]])
    with pytest.raises(DimensionError):
        LinearModel(np.eye(2), np.ones((2, 1)), BoxConstraints.unbounded(3))


def test_project_examples():
    assert project([0.5], BoxConstraints([0.0], [1.0])).tolist() == [0.5]
    assert project([-3.0, 7.0], BoxConstraints([0, 0], [1, 5])).tolist() == [0.0, 5.0]
    with pytest.raises(DimensionError):
        project([1.0, 2.0], BoxConstraints([0.0], [1.0]))


def test_box_invariants():
    with pytest.raises(ValueError):
        BoxConstraints([1.0], [0.0])
    with pytest.raises(DimensionError):
        BoxConstraints([0.0, 0.0], [1.0])
    b = BoxConstraints([-np.inf], [np.inf])
    assert project([1e300], b).tolist() == [1e300]


def test_state_semantics_labels_unique():
    assert StateSemantics(["a", "b"]).n == 2
    with pytest.raises(ValueError):
        StateSemantics(["a", "a"])


def test_spectral_radius_examples():
    assert spectral_radius(np.eye(3)) == pytest.approx(1.0, abs=1e-9)
    assert spectral_radius(np.diag([0.5, -0.9])) == pytest.approx(0.9, abs=1e-9)
    # double eigenvalue 0.5 (lambda^2 - lambda + 0.25 = 0). A defective
    # eigenvalue moves by ~sqrt(machine eps) under rounding, hence 1e-5.
    assert spectral_radius([[0.0, 1.0], [-0.25, 1.0]]) == pytest.approx(0.5, abs=1e-5)
    assert spectral_radius([[0.0, -1.0], [1.0, 0.0]]) == pytest.approx(1.0, abs=1e-9)
    assert spectral_radius(np.zeros((2, 2))) == 0.0
    with pytest.raises(DimensionError):
        spectral_radius(np.ones((2, 3)))


@given(hnp.arrays(float, (4, 4), elements=st.floats(-2, 2)))
def test_spectral_radius_agrees_with_eigvals(A):
    expected = np.max(np.abs(np.linalg.eigvals(A)))
    # near-defective random matrices lose accuracy like sqrt(eps)
    assert spectral_radius(A) == pytest.approx(expected, rel=1e-4, abs=1e-6)


finite = st.floats(-1e3, 1e3)
dims = st.tuples(st.integers(1, 5), st.integers(1, 4))


@st.composite
def model_and_pairs(draw):
    n, m = draw(dims)
    A = draw(hnp.arrays(float, (n, n), elements=st.floats(-2, 2)))
    B = draw(hnp.arrays(float, (n, m), elements=st.floats(-2, 2)))
    xs = [draw(hnp.arrays(float, n, elements=finite)) for _ in range(2)]
    us = [draw(hnp.arrays(float, m, elements=finite)) for _ in range(2)]
    alpha = draw(st.floats(-10, 10))
    return LinearModel(A, B), xs, us, alpha


@given(model_and_pairs())
def test_step_is_linear(case):
    model, (x1, x2), (u1, u2), _ = case
    lhs = step(model, x1 + x2, u1 + u2)
    rhs = step(model, x1, u1) + step(model, x2, u2)
    np.testing.assert_allclose(lhs, rhs, atol=1e-9, rtol=1e-12)


@given(model_and_pairs())
def test_step_is_homogeneous(case):
    model, (x, _), (u, _), alpha = case
    np.testing.assert_allclose(step(model, alpha * x, alpha * u),
                               alpha * step(model, x, u), atol=1e-9, rtol=1e-12)


@given(hnp.arrays(float, 3, elements=finite))
def test_identity_model_is_identity_map(x):
    m = LinearModel(np.eye(3), np.zeros((3, 2)))
    assert np.array_equal(step(m, x, [1.0, -1.0]), x)


@st.composite
def vec_and_box(draw):
    d = draw(st.integers(1, 6))
    v = draw(hnp.arrays(float, d, elements=finite))
    a = draw(hnp.arrays(float, d, elements=finite))
    b = draw(hnp.arrays(float, d, elements=finite))
    return v, BoxConstraints(np.minimum(a, b), np.maximum(a, b))


@given(vec_and_box())
def test_project_feasible_and_idempotent(case):
    v, box = case
    p = project(v, box)
    assert box.contains(p)
    assert np.array_equal(project(p, box), p)
    if box.contains(v):
        assert np.array_equal(p, v)
