"""Jacobi SVD invariants: reconstruction, orthonormality, ordering, signs."""

import numpy as np
import pytest

from lrad import NumericalError, svd


def check_spectrum(a, spectrum, tol=1e-10):
    k = min(a.shape)
    fro = np.linalg.norm(a)
    assert np.linalg.norm(a - spectrum.reconstruct()) <= tol * max(fro, 1.0)
    assert np.abs(spectrum.U.T @ spectrum.U - np.eye(k)).max() <= tol
    assert np.abs(spectrum.V.T @ spectrum.V - np.eye(k)).max() <= tol
    assert np.all(np.diff(spectrum.S) <= 0.0)
    assert np.all(spectrum.S >= 0.0)


class TestSvd:
    def test_identity(self):
        spectrum = svd(np.eye(3))
        np.testing.assert_allclose(spectrum.S, [1.0, 1.0, 1.0])
        check_spectrum(np.eye(3), spectrum)

    def test_diagonal(self):
        a = np.diag([3.0, 2.0, 1.0])
        spectrum = svd(a)
        np.testing.assert_allclose(spectrum.S, [3.0, 2.0, 1.0])
        check_spectrum(a, spectrum)

    def test_random_rectangular(self, rng):
        a = rng.standard_normal((8, 6))
        spectrum = svd(a)
        check_spectrum(a, spectrum)
        np.testing.assert_allclose(
            spectrum.S, np.linalg.svd(a, compute_uv=False), atol=1e-12
        )

    def test_wide_matrix(self, rng):
        a = rng.standard_normal((4, 9))
        spectrum = svd(a)
        assert spectrum.U.shape == (4, 4)
        assert spectrum.V.shape == (9, 4)
        check_spectrum(a, spectrum)

    def test_random_batch_up_to_32(self, rng):
        for _ in range(60):
            m = int(rng.integers(1, 33))
            n = int(rng.integers(1, 33))
            a = rng.standard_normal((m, n)) * float(rng.uniform(0.1, 10))
            check_spectrum(a, svd(a))

    def test_rank_deficient(self, rng):
        u = rng.standard_normal((7, 2))
        v = rng.standard_normal((5, 2))
        a = u @ v.T
        spectrum = svd(a)
        check_spectrum(a, spectrum)
        assert np.all(spectrum.S[2:] <= 1e-10 * spectrum.S[0])

    def test_zero_matrix(self):
        spectrum = svd(np.zeros((4, 3)))
        np.testing.assert_array_equal(spectrum.S, np.zeros(3))
        assert np.abs(spectrum.U.T @ spectrum.U - np.eye(3)).max() <= 1e-12

    def test_sign_convention_and_determinism(self, rng):
        a = rng.standard_normal((6, 5))
        s1, s2 = svd(a), svd(a)
        assert np.array_equal(s1.U, s2.U) and np.array_equal(s1.V, s2.V)
        for j in range(s1.U.shape[1]):
            i = int(np.argmax(np.abs(s1.U[:, j])))
            assert s1.U[i, j] > 0.0

    def test_float32_tolerance(self, rng):
        a = rng.standard_normal((10, 8)).astype(np.float32)
        spectrum = svd(a)
        assert spectrum.U.dtype == np.float32
        check_spectrum(a.astype(np.float64), spectrum, tol=1e-5)

    def test_nonfinite_rejected(self):
        with pytest.raises(NumericalError, match="non-finite"):
            svd(np.array([[1.0, np.nan], [0.0, 1.0]]))

    def test_sweep_cap_raises(self, rng):
        a = rng.standard_normal((6, 6))
        with pytest.raises(NumericalError, match="did not converge"):
            svd(a, max_sweeps=0)
