import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lyapta.bounds import (NOT_SIGN_DEFINITE, BoundsError, exact_transit_time, pencil_eigenvalues,
                           psidot_range_pencil, psidot_range_points, psidot_range_sampled, slice_bounds,
                           transit_time_bounds)
from lyapta.oracle import flow, transit_time
from lyapta.partition import PartitionError, SliceFamily, build_partition
from lyapta.system import QuadraticLyapunov, VectorField, eval_psi, eval_psi_dot, solve_lyapunov_equation


def test_pencil_examples():
    assert psidot_range_pencil([[1.0]], [[-1.0]], 2, 4) == pytest.approx((4, 8))
    A = np.diag([-1.0, -0.5])  # A^T P + P A = diag(-4, -1) for P = diag(2, 1)
    assert sorted(pencil_eigenvalues(np.diag([2.0, 1.0]), A)) == pytest.approx([-2, -1])
    assert psidot_range_pencil(np.diag([2.0, 1.0]), A, 1, 3) == pytest.approx((1, 6))
    assert psidot_range_pencil(np.eye(2), -np.eye(2), 0.7, 0.7) == pytest.approx((1.4, 1.4))


def _level_samples(P, a, m, rng):
    U = rng.standard_normal((m, P.shape[0]))
    q = np.einsum("pi,ij,pj->p", U, P, U)
    return U * np.sqrt(a / q)[:, None]


@given(st.integers(2, 4), st.integers(0, 2 ** 32 - 1))
def test_pencil_range_matches_sampling(n, seed):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n, n))
    A = M - (np.abs(np.linalg.eigvals(M).real).max() + 0.5) * np.eye(n)
    lyap = solve_lyapunov_equation(A, -np.eye(n) - 0.3 * np.diag(rng.random(n)))
    lo, hi = psidot_range_pencil(lyap.P, A, 1.0, 1.0)
    X = _level_samples(lyap.P, 1.0, 4000, rng)
    vals = np.abs(eval_psi_dot(lyap, VectorField.linear(A), X))
    assert vals.min() >= lo * (1 - 1e-9) and vals.max() <= hi * (1 + 1e-9)
    # the extremes are attained at generalized eigenvectors
    mu, V = __import__("scipy").linalg.eigh(lyap.P @ A + A.T @ lyap.P, lyap.P)
    for k in (0, -1):
        v = V[:, k] / math.sqrt(V[:, k] @ lyap.P @ V[:, k])
        assert abs(eval_psi_dot(lyap, VectorField.linear(A), v)) == pytest.approx(abs(mu[k]), rel=1e-9)


def test_sign_indefinite_pencil_is_rejected():
    with pytest.raises(BoundsError, match=NOT_SIGN_DEFINITE):
        psidot_range_pencil(np.eye(2), [[0.0, 1.0], [-2.0, -3.0]], 1, 2)


def test_sampled_range_examples():
    field = VectorField.linear([[-1.0]])
    fam = SliceFamily(QuadraticLyapunov([[1.0]], 1), (1, 2, 4))
    part = build_partition([fam], [(-2.5, 2.5)], 0.01)
    lo, hi = psidot_range_sampled(fam.lyap, field, part, 0, 2)
    assert lo == pytest.approx(4 * 0.9, rel=0.05) and hi == pytest.approx(8 * 1.1, rel=0.05)
    cubic = VectorField.polynomial([[(-1.0, [3])]])
    fam2 = SliceFamily(QuadraticLyapunov([[1.0]], 1), (1, 4))
    part2 = build_partition([fam2], [(-2.5, 2.5)], 0.01)
    lo, hi = psidot_range_sampled(fam2.lyap, cubic, part2, 0, 1)
    assert lo == pytest.approx(2 * 0.9, rel=1e-6) and hi == pytest.approx(32 * 1.1, rel=1e-6)
    with pytest.raises(BoundsError, match="vanishes"):
        psidot_range_points(fam.lyap, field, [[0.0], [0.5]])
    with pytest.raises(BoundsError, match="vanishes"):
        psidot_range_sampled(fam.lyap, field, part, 0, 0)


def test_transit_time_bound_examples():
    assert transit_time_bounds(2, 4, (4, 8)) == pytest.approx((0.25, 0.5))
    assert transit_time_bounds(1, 2, (2, 4)) == pytest.approx((0.25, 0.5))
    assert transit_time_bounds(2, 2, (4, 8)) == (0.0, 0.0)
    with pytest.raises(PartitionError):
        SliceFamily(QuadraticLyapunov([[1.0]], 1), (2, 2, 4))


def test_exact_transit_examples():
    assert exact_transit_time(-0.5, 4, 2) == pytest.approx(0.5 * math.log(2), abs=1e-12)
    assert exact_transit_time(-0.5, 4, 1) == pytest.approx(0.5 * math.log(4), abs=1e-12)
    assert exact_transit_time(0.25, 1, 2) == pytest.approx(0.25 * math.log(2), abs=1e-12)
    assert exact_transit_time(0.25, 1, 2) == pytest.approx(0.17329, abs=1e-5)
    with pytest.raises(BoundsError):
        exact_transit_time(-0.5, 1, 2)


def test_slice_bounds_modes():
    field = VectorField.linear([[-1.0]])
    fam = SliceFamily(QuadraticLyapunov([[1.0]], 1), (1, 2, 4))
    sound = slice_bounds(fam, field)
    assert [(b.t_lower, b.t_upper) for b in sound] == [pytest.approx((0.25, 0.5))] * 2
    assert all(b.method == "pencil" for b in sound)
    exact = slice_bounds(fam, field, mode="complete")
    assert all(b.exact and b.t_lower == b.t_upper for b in exact)
    assert exact[1].t_lower == pytest.approx(0.34657359, abs=1e-8)
    coupled = VectorField.linear([[0.0, 1.0], [-2.0, -3.0]])
    fam_c = SliceFamily(solve_lyapunov_equation(coupled.A, -np.eye(2), 1), (0.5, 1, 2))
    with pytest.raises(BoundsError, match="complete-form"):
        slice_bounds(fam_c, coupled, mode="complete")


@pytest.mark.parametrize("P,levels", [([[5.0, 3.0], [3.0, 2.0]], (1, 2, 4)),
                                      ([[1.25, 0.25], [0.25, 0.25]], (0.5, 1, 2))])
def test_sound_bounds_bracket_simulated_transits(P, levels):
    field = VectorField.linear([[0.0, 1.0], [-2.0, -3.0]])
    fam = SliceFamily(QuadraticLyapunov(P, 1), levels)
    rng = np.random.default_rng(7)
    for b in slice_bounds(fam, field):
        lo, hi = fam.slice_range(b.slice)
        for x0 in _level_samples(np.array(P), hi, 40, rng):
            t = transit_time(field, fam.lyap, x0, lo, t_max=5 * b.t_upper)
            assert b.t_lower - 1e-9 <= t <= b.t_upper + 1e-9
            assert eval_psi(fam.lyap, flow(field, x0, t)) == pytest.approx(lo, rel=1e-9)
