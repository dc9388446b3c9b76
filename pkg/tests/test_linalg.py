import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from natgrad_lens import (
    CertificateError,
    SymMatrix,
    angle_between,
    orthonormal_complement_basis,
    solve_lyapunov,
    sym_eigen,
)
from natgrad_lens.tolerances import COMPLEMENT_ORTHO_TOL, EIG_RECONSTRUCTION_RTOL


class TestSymMatrix:
    def test_mirrors_upper_triangle(self):
        raw = np.array([[1.0, 2.0], [999.0, 3.0]])
        sym = SymMatrix(raw)
        assert sym.array[1, 0] == 2.0
        assert np.array_equal(sym.array, sym.array.T)

    def test_rejects_nonsquare(self):
        with pytest.raises(ValueError):
            SymMatrix(np.zeros((2, 3)))

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError, match="non-finite"):
            SymMatrix(np.array([[np.nan, 0.0], [0.0, 1.0]]))

    def test_immutable(self):
        sym = SymMatrix(np.eye(2))
        with pytest.raises(ValueError):
            sym.array[0, 0] = 5.0


class TestSymEigen:
    def test_identity(self):
        dec = sym_eigen(np.eye(3))
        assert np.allclose(dec.eigenvalues, [1.0, 1.0, 1.0])

    def test_diagonal_orders_ascending(self):
        dec = sym_eigen(np.diag([2.0, -1.0]))
        assert np.allclose(dec.eigenvalues, [-1.0, 2.0])

    def test_random_reconstruction_residual(self, rng):
        raw = rng.standard_normal((5, 5))
        sym = SymMatrix(raw + raw.T)
        dec = sym_eigen(sym)
        scale = max(1.0, np.abs(sym.array).max())
        assert np.abs(sym.array - dec.reconstruct()).max() <= 1e-9 * scale

    def test_nonfinite_rejected_with_diagnostics(self):
        with pytest.raises(ValueError, match="non-finite"):
            sym_eigen(np.array([[np.inf, 0.0], [0.0, 1.0]]))

    @settings(max_examples=40, deadline=None)
    @given(
        dim=st.integers(1, 8),
        seed=st.integers(0, 2**31),
        scale=st.floats(1e-3, 1e6),
    )
    def test_invariants_hold_for_random_matrices(self, dim, seed, scale):
        raw = np.random.default_rng(seed).standard_normal((dim, dim)) * scale
        sym = SymMatrix(raw + raw.T)
        dec = sym_eigen(sym)
        assert np.all(np.diff(dec.eigenvalues) >= 0)
        gram = dec.eigenvectors @ dec.eigenvectors.T
        assert np.abs(gram - np.eye(dim)).max() <= 1e-10
        bound = EIG_RECONSTRUCTION_RTOL * max(1.0, np.abs(sym.array).max())
        assert np.abs(sym.array - dec.reconstruct()).max() <= bound


class TestSolveLyapunov:
    def test_negative_identity_halves_q(self):
        p = solve_lyapunov(-np.eye(2), SymMatrix(np.eye(2)))
        assert np.allclose(p.array, 0.5 * np.eye(2), atol=1e-14)

    def test_hand_derived_two_by_two(self):
        # P A + A^T P = -I with A = [[-1, 1], [0, -2]] solves to
        # P = [[1/2, 1/6], [1/6, 1/3]] by direct elimination.
        a = np.array([[-1.0, 1.0], [0.0, -2.0]])
        p = solve_lyapunov(a, SymMatrix(np.eye(2)))
        expected = np.array([[0.5, 1.0 / 6.0], [1.0 / 6.0, 1.0 / 3.0]])
        assert np.abs(p.array - expected).max() <= 1e-12
        residual = np.abs(p.array @ a + a.T @ p.array + np.eye(2)).max()
        assert residual <= 1e-9
        assert sym_eigen(p).min > 0

    def test_matches_scipy_on_random_stable_systems(self, rng):
        for dim in (2, 4, 7):
            raw = rng.standard_normal((dim, dim))
            a = raw - (np.max(np.linalg.eigvals(raw).real) + 0.5) * np.eye(dim)
            q_raw = rng.standard_normal((dim, dim))
            q = SymMatrix(q_raw @ q_raw.T + dim * np.eye(dim))
            p = solve_lyapunov(a, q)
            reference = scipy.linalg.solve_continuous_lyapunov(a.T, -q.array)
            assert np.abs(p.array - reference).max() <= 1e-9 * np.abs(reference).max()

    def test_unstable_matrix_rejected_by_certificate(self):
        with pytest.raises(CertificateError):
            solve_lyapunov(np.array([[0.5]]), SymMatrix(np.eye(1)))
        with pytest.raises(CertificateError):
            solve_lyapunov(np.diag([0.5, -1.0]), SymMatrix(np.eye(2)))

    def test_rejects_indefinite_q(self):
        with pytest.raises(ValueError, match="positive definite"):
            solve_lyapunov(-np.eye(2), SymMatrix(np.diag([1.0, -1.0])))

    def test_decrease_along_integrated_trajectory(self, rng):
        # L(theta) = theta^T P theta must shrink along d theta/dt = A theta,
        # and its analytic rate is -theta^T Q theta.
        dim = 4
        raw = rng.standard_normal((dim, dim))
        a = raw - (np.max(np.linalg.eigvals(raw).real) + 0.5) * np.eye(dim)
        p = solve_lyapunov(a, SymMatrix(np.eye(dim)))
        theta = rng.standard_normal(dim)
        for theta_probe in (theta, -theta, rng.standard_normal(dim)):
            rate = 2.0 * theta_probe @ p.array @ (a @ theta_probe)
            assert rate == pytest.approx(-theta_probe @ theta_probe, rel=1e-9)
        dt = 1e-3
        losses = []
        for _ in range(2000):
            losses.append(theta @ p.array @ theta)
            k1 = a @ theta
            k2 = a @ (theta + 0.5 * dt * k1)
            k3 = a @ (theta + 0.5 * dt * k2)
            k4 = a @ (theta + dt * k3)
            theta = theta + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        assert np.all(np.diff(losses) < 0)


class TestComplementBasis:
    def test_axis_vector_spans_remaining_axes(self):
        basis = orthonormal_complement_basis(np.array([1.0, 0.0, 0.0]))
        projector = basis @ basis.T
        expected = np.diag([0.0, 1.0, 1.0])
        assert np.abs(projector - expected).max() <= 1e-12

    def test_two_dimensional_complement_is_antidiagonal(self):
        basis = orthonormal_complement_basis(np.array([1.0, 1.0]) / np.sqrt(2))
        u = basis[:, 0]
        expected = np.array([1.0, -1.0]) / np.sqrt(2)
        assert min(np.abs(u - expected).max(), np.abs(u + expected).max()) <= 1e-12

    def test_gram_matrix_oracle_in_six_dimensions(self, rng):
        g = rng.standard_normal(6)
        basis = orthonormal_complement_basis(g)
        frame = np.column_stack([g / np.linalg.norm(g), basis])
        assert np.abs(frame.T @ frame - np.eye(6)).max() <= COMPLEMENT_ORTHO_TOL

    def test_zero_vector_rejected(self):
        with pytest.raises(ValueError):
            orthonormal_complement_basis(np.zeros(3))

    def test_one_dimensional_complement_is_empty(self):
        assert orthonormal_complement_basis(np.array([2.0])).shape == (1, 0)


class TestAngleBetween:
    def test_parallel_is_zero(self):
        v = np.array([0.3, -2.0, 1.0])
        assert angle_between(v, v) == 0.0

    def test_forty_five_degrees(self):
        assert angle_between([1.0, 0.0], [1.0, 1.0]) == pytest.approx(np.pi / 4, abs=1e-15)

    def test_orthogonal_is_right_angle(self):
        assert angle_between([1.0, 0.0], [0.0, 1.0]) == pytest.approx(np.pi / 2, abs=1e-15)

    def test_antiparallel_is_pi(self):
        assert angle_between([1.0, 0.0], [-1.0, 0.0]) == pytest.approx(np.pi, abs=1e-15)

    def test_zero_norm_rejected(self):
        with pytest.raises(ValueError):
            angle_between([0.0, 0.0], [1.0, 0.0])
