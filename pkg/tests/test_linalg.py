import numpy as np
import pytest

from monovio import linalg
from monovio.errors import NotPositiveDefinite, NumericalFailure, SingularMatrix
from monovio.linalg import (
    inverse_power,
    jacobi_eigen,
    solve_general,
    solve_spd,
    svd_square,
)


def random_spd(rng, n):
    a = rng.standard_normal((n, n))
    return a @ a.T + n * np.eye(n)


class TestJacobiEigen:
    def test_diagonal_input(self):
        lam, v = jacobi_eigen(np.diag([5.0, 3.0, 1.0]))
        assert np.allclose(lam, [5.0, 3.0, 1.0])
        # columns equal identity up to sign
        assert np.allclose(np.abs(v), np.eye(3))

    def test_analytic_2x2(self):
        lam, v = jacobi_eigen(np.array([[2.0, 1.0], [1.0, 2.0]]))
        assert np.allclose(lam, [3.0, 1.0])
        v1 = v[:, 0] / v[0, 0]
        v2 = v[:, 1] / v[0, 1]
        assert np.allclose(v1, [1.0, 1.0])
        assert np.allclose(v2, [1.0, -1.0])

    def test_random_9x9_reconstruction(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            a = rng.standard_normal((9, 9))
            a = a + a.T
            lam, v = jacobi_eigen(a)
            # oracle: reconstruct and compare against the input
            assert np.abs(a - v @ np.diag(lam) @ v.T).max() < 1e-9

    def test_eigen_residual_and_orthonormality(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((7, 7))
        a = a + a.T
        lam, v = jacobi_eigen(a)
        scale = max(1.0, np.abs(lam).max())
        for i in range(7):
            assert np.linalg.norm(a @ v[:, i] - lam[i] * v[:, i]) < 1e-9 * scale
        assert np.abs(v.T @ v - np.eye(7)).max() < 1e-9
        assert np.all(np.diff(lam) <= 0)

    def test_trace_preserved(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            a = rng.standard_normal((6, 6))
            a = a + a.T
            lam, _ = jacobi_eigen(a)
            assert abs(np.trace(a) - lam.sum()) < 1e-9 * max(1.0, abs(np.trace(a)))

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            jacobi_eigen(np.zeros((2, 3)))

    def test_rejects_asymmetric(self):
        a = np.array([[1.0, 2.0], [0.0, 1.0]])
        with pytest.raises(ValueError):
            jacobi_eigen(a)

    def test_rejects_non_finite(self):
        a = np.array([[1.0, np.nan], [np.nan, 1.0]])
        with pytest.raises(ValueError):
            jacobi_eigen(a)

    def test_pure_function(self):
        rng = np.random.default_rng(5)
        a = rng.standard_normal((8, 8))
        a = a + a.T
        lam1, v1 = jacobi_eigen(a)
        lam2, v2 = jacobi_eigen(a)
        assert np.array_equal(lam1, lam2)
        assert np.array_equal(v1, v2)

    def test_jit_and_numpy_sweeps_bitwise_equal(self):
        # the compiled kernel must not change a single bit vs the fallback
        rng = np.random.default_rng(17)
        for _ in range(50):
            n = int(rng.integers(2, 15))
            a = rng.standard_normal((n, n))
            a = a + a.T
            fnorm = float(np.sqrt((a * a).sum()))
            tol = 1e-12 * fnorm
            skip = tol / (10.0 * n)
            w1, v1 = a.copy(), np.eye(n)
            w2, v2 = a.copy(), np.eye(n)
            linalg._sweep(w1, v1, tol, skip, 50)
            linalg._sweep_numpy(w2, v2, tol, skip, 50)
            assert np.array_equal(w1, w2)
            assert np.array_equal(v1, v2)


class TestSvdSquare:
    def test_identity(self):
        r = svd_square(np.eye(3))
        assert np.allclose(r.sigma, [1.0, 1.0, 1.0])

    def test_signed_diagonal(self):
        r = svd_square(np.diag([3.0, -2.0, 1.0]))
        assert np.allclose(r.sigma, [3.0, 2.0, 1.0])
        a = np.diag([3.0, -2.0, 1.0])
        assert np.abs(a - r.u @ np.diag(r.sigma) @ r.v.T).max() < 1e-12

    def test_random_8x8_reconstruction(self):
        rng = np.random.default_rng(8)
        a = rng.standard_normal((8, 8))
        r = svd_square(a)
        assert np.abs(r.u.T @ r.u - np.eye(8)).max() < 1e-9
        assert np.abs(r.v.T @ r.v - np.eye(8)).max() < 1e-9
        assert np.abs(a - r.u @ np.diag(r.sigma) @ r.v.T).max() < 1e-9

    def test_invariants_across_sizes(self):
        rng = np.random.default_rng(21)
        for n in range(2, 13):
            for _ in range(5):
                a = rng.standard_normal((n, n))
                r = svd_square(a)
                assert np.all(np.diff(r.sigma) <= 1e-12)
                assert np.all(r.sigma >= 0.0)
                assert np.abs(r.u.T @ r.u - np.eye(n)).max() < 1e-9
                assert np.abs(r.v.T @ r.v - np.eye(n)).max() < 1e-9
                scale = max(1.0, np.abs(a).max())
                assert np.abs(a - r.u @ np.diag(r.sigma) @ r.v.T).max() < 1e-9 * scale

    def test_rank_deficient(self):
        a = np.zeros((4, 4))
        a[0, 0] = 2.0
        a[1, 1] = 1.0
        r = svd_square(a)
        assert np.allclose(r.sigma, [2.0, 1.0, 0.0, 0.0])
        assert np.abs(r.u.T @ r.u - np.eye(4)).max() < 1e-12
        assert np.abs(a - r.u @ np.diag(r.sigma) @ r.v.T).max() < 1e-12

    def test_zero_matrix(self):
        r = svd_square(np.zeros((3, 3)))
        assert np.allclose(r.sigma, 0.0)
        assert np.abs(r.u.T @ r.u - np.eye(3)).max() < 1e-12

    def test_capacity_cap(self):
        with pytest.raises(ValueError):
            svd_square(np.eye(17))

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            svd_square(np.zeros((3, 4)))


class TestInversePower:
    def test_smallest_of_diagonal(self):
        lam, v = inverse_power(np.diag([5.0, 3.0, 1.0]), shift=0.0)
        assert abs(lam - 1.0) < 1e-10
        assert np.allclose(np.abs(v), [0.0, 0.0, 1.0], atol=1e-8)

    def test_nearest_to_shift(self):
        lam, _ = inverse_power(np.diag([5.0, 3.0, 1.0]), shift=4.9)
        assert abs(lam - 5.0) < 1e-10

    def test_matches_jacobi_smallest(self):
        rng = np.random.default_rng(6)
        a = random_spd(rng, 6)
        lam_ip, v_ip = inverse_power(a, shift=0.0)
        lam_j, _ = jacobi_eigen(a)
        assert abs(lam_ip - lam_j[-1]) < 1e-8
        assert np.linalg.norm(a @ v_ip - lam_ip * v_ip) < 1e-8

    def test_singular_shift(self):
        with pytest.raises((SingularMatrix, NumericalFailure)):
            inverse_power(np.diag([5.0, 3.0, 1.0]), shift=3.0)


class TestSolveSpd:
    def test_identity_system(self):
        x = solve_spd(np.eye(4), np.array([1.0, 2.0, 3.0, 4.0]))
        assert np.allclose(x, [1.0, 2.0, 3.0, 4.0])

    def test_diagonal(self):
        x = solve_spd(np.diag([2.0, 4.0]), np.array([2.0, 8.0]))
        assert np.allclose(x, [1.0, 2.0])

    def test_random_spd_30(self):
        rng = np.random.default_rng(30)
        a = random_spd(rng, 30)
        b = rng.standard_normal(30)
        x = solve_spd(a, b)
        assert np.linalg.norm(a @ x - b) < 1e-8 * max(1.0, np.linalg.norm(b))

    def test_not_positive_definite_reports_pivot(self):
        a = np.diag([1.0, -1.0, 2.0])
        with pytest.raises(NotPositiveDefinite) as exc:
            solve_spd(a, np.ones(3))
        assert exc.value.pivot_index == 1

    def test_agrees_with_general_solver(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            a = random_spd(rng, 12)
            b = rng.standard_normal(12)
            assert np.allclose(solve_spd(a, b), solve_general(a, b), atol=1e-8)

    def test_capacity_cap(self):
        n = 201
        with pytest.raises(ValueError):
            solve_spd(np.eye(n), np.ones(n))


class TestSolveGeneral:
    def test_permutation(self):
        a = np.array([[0.0, 1.0], [1.0, 0.0]])
        x = solve_general(a, np.array([2.0, 3.0]))
        assert np.allclose(x, [3.0, 2.0])

    def test_identity_returns_rhs(self):
        b = np.arange(5, dtype=float)
        assert np.allclose(solve_general(np.eye(5), b), b)

    def test_random_10x10(self):
        rng = np.random.default_rng(10)
        a = rng.standard_normal((10, 10)) + 10 * np.eye(10)
        b = rng.standard_normal(10)
        x = solve_general(a, b)
        assert np.linalg.norm(a @ x - b) < 1e-8 * max(1.0, np.linalg.norm(b))

    def test_singular_matrix(self):
        a = np.array([[1.0, 2.0], [2.0, 4.0]])
        with pytest.raises(SingularMatrix):
            solve_general(a, np.ones(2))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            solve_general(np.eye(3), np.ones(4))


class TestInvSpd:
    def test_round_trip(self):
        rng = np.random.default_rng(12)
        a = random_spd(rng, 9)
        inv = linalg.inv_spd(a)
        assert np.abs(a @ inv - np.eye(9)).max() < 1e-9
        assert np.array_equal(inv, inv.T)
