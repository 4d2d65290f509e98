import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from lyapta.system import (DimensionError, LyapunovError, QuadraticLyapunov, VectorField,
                           check_transversal_pair, completeness_ratio, eval_psi, eval_psi_dot,
                           is_hurwitz, lyapunov_map, solve_lyapunov_equation, verify_lyapunov)

COUPLED = [[0.0, 1.0], [-2.0, -3.0]]
P_COUPLED = [[1.25, 0.25], [0.25, 0.25]]


def test_eval_psi_examples():
    assert eval_psi(QuadraticLyapunov([[1.0]]), [2.0]) == 4.0
    assert eval_psi(QuadraticLyapunov(np.eye(2)), [0.0, 0.0]) == 0.0
    assert eval_psi(QuadraticLyapunov(P_COUPLED), [1.0, 1.0]) == pytest.approx(2.0, abs=1e-15)


def test_eval_psi_dimension_mismatch():
    with pytest.raises(DimensionError):
        eval_psi(QuadraticLyapunov(np.eye(2)), [1.0, 2.0, 3.0])


def test_eval_psi_dot_examples():
    assert eval_psi_dot(QuadraticLyapunov([[1.0]]), VectorField.linear([[-1.0]]), [2.0]) == -8.0
    assert eval_psi_dot(QuadraticLyapunov(P_COUPLED), VectorField.linear(COUPLED), [0.0, 0.0]) == 0.0
    psi2 = QuadraticLyapunov(np.diag([0.0, 1.0]), 2, [1])
    assert eval_psi_dot(psi2, VectorField.linear(np.diag([-1.0, 2.0])), [5.0, 1.0]) == 4.0


@given(arrays(float, (3, 3), elements=st.floats(-3, 3)), arrays(float, (3, 3), elements=st.floats(-3, 3)),
       arrays(float, 3, elements=st.floats(-2, 2)))
def test_psi_dot_linear_matches_gradient_formula(A, M, x):
    P = M + M.T + 7 * np.eye(3)
    lyap = QuadraticLyapunov(P)
    lin = VectorField.linear(A)
    # same field written as polynomial terms
    terms = [[(A[j, k], [int(i == k) for i in range(3)]) for k in range(3)] for j in range(3)]
    poly = VectorField.polynomial(terms)
    expected = 2 * x @ P @ (A @ x)
    assert eval_psi_dot(lyap, lin, x) == pytest.approx(expected, rel=1e-9, abs=1e-9)
    assert eval_psi_dot(lyap, poly, x) == pytest.approx(expected, rel=1e-9, abs=1e-9)


def test_polynomial_field_evaluation():
    f = VectorField.polynomial([[(1.0, [1]), (-1.0, [3])]])
    assert f([2.0])[0] == pytest.approx(2 - 8)
    with pytest.raises(DimensionError):
        VectorField.polynomial([[(1.0, [1, 0])]])


def test_form_is_symmetric_upper_triangle():
    lyap = QuadraticLyapunov([[2.0, 1.0], [1.0, 3.0]])
    assert np.array_equal(lyap.P, lyap.P.T)
    with pytest.raises(ValueError):
        QuadraticLyapunov([[2.0, 1.0], [0.0, 3.0]])
    with pytest.raises(LyapunovError):
        QuadraticLyapunov([[1.0, 1.0], [1.0, 1.0]])
    with pytest.raises(ValueError):
        QuadraticLyapunov(np.diag([1.0, 1.0]), subspace=[0])


def test_solve_lyapunov_examples():
    lyap = solve_lyapunov_equation(-np.eye(2), -2 * np.eye(2))
    assert np.allclose(lyap.P, np.eye(2), atol=1e-12)
    lyap = solve_lyapunov_equation(COUPLED, -np.eye(2))
    assert np.allclose(lyap.P, P_COUPLED, atol=1e-12)


def test_solve_lyapunov_errors():
    with pytest.raises(LyapunovError):
        solve_lyapunov_equation([[1.0, 0.0], [0.0, -1.0]], -np.eye(2))
    with pytest.raises(LyapunovError):
        solve_lyapunov_equation([[0.0, 1.0], [-1.0, 0.0]], -np.eye(2))
    with pytest.raises(ValueError, match="symmetric"):
        solve_lyapunov_equation(-np.eye(2), [[-1.0, 0.5], [0.0, -1.0]])


@given(st.integers(1, 6), st.integers(0, 2 ** 32 - 1))
def test_solve_lyapunov_residual_property(n, seed):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n, n))
    A = M - (np.abs(np.linalg.eigvals(M).real).max() + 0.5) * np.eye(n)
    assert is_hurwitz(A)
    lyap = solve_lyapunov_equation(A, -np.eye(n))
    assert np.abs(lyapunov_map(A, lyap.P) + np.eye(n)).max() < 1e-9 * max(1.0, np.abs(lyap.P).max())
    assert np.linalg.eigvalsh(lyap.P).min() > 0


def test_verify_lyapunov_examples():
    psi = QuadraticLyapunov([[1.0]])
    rep = verify_lyapunov(psi, VectorField.linear([[-1.0]]), [(-2, 2)], 0.01)
    assert rep.passed and rep.sign_violations == 0 and rep.orientation == "decreasing" and rep.alpha_bound > 0
    rep = verify_lyapunov(psi, VectorField.linear([[1.0]]), [(-2, 2)], 0.01)
    assert rep.passed and rep.orientation == "increasing"
    cubic = VectorField.polynomial([[(1.0, [1]), (-1.0, [3])]])
    rep = verify_lyapunov(psi, cubic, [(-2, 2)], 0.01)
    assert not rep.passed and rep.sign_violations > 0
    assert abs(abs(rep.witness[0]) - 1.5) < 0.05


def test_transversality_examples():
    p1 = QuadraticLyapunov(np.diag([1.0, 0.0]), 1, [0])
    p2 = QuadraticLyapunov(np.diag([0.0, 1.0]), 2, [1])
    assert check_transversal_pair(p1, p2, 1.0)
    assert not check_transversal_pair(QuadraticLyapunov(np.eye(2)), QuadraticLyapunov(np.eye(2)), 1.0)
    assert check_transversal_pair(QuadraticLyapunov(np.eye(2)), QuadraticLyapunov(2 * np.eye(2)), 1.0)


def test_transversality_detects_tangency():
    # ellipses x^2 + 4y^2 = 4 and 4x^2 + y^2 = 4 cross at 45-degree points;
    # x^2 + 4y^2 and x^2 + y^2 touch at (+-2, 0) with parallel gradients
    assert check_transversal_pair(QuadraticLyapunov(np.diag([1.0, 4.0])), QuadraticLyapunov(np.diag([4.0, 1.0])), 4.0)
    assert not check_transversal_pair(QuadraticLyapunov(np.diag([1.0, 4.0])), QuadraticLyapunov(np.diag([1.0, 1.0])), 4.0)


def test_completeness_ratio_examples():
    assert completeness_ratio(QuadraticLyapunov([[1.0]]), VectorField.linear([[-1.0]])) == pytest.approx(-0.5)
    saddle = VectorField.linear(np.diag([-1.0, 2.0]))
    assert completeness_ratio(QuadraticLyapunov(np.diag([1.0, 0.0]), 1, [0]), saddle) == pytest.approx(-0.5)
    assert completeness_ratio(QuadraticLyapunov(np.diag([0.0, 1.0]), 2, [1]), saddle) == pytest.approx(0.25)
    assert completeness_ratio(QuadraticLyapunov(P_COUPLED), VectorField.linear(COUPLED)) is None
