"""Numerics layer: inverse square roots, Khatri-Rao, water-filling, SVD/EVD."""

import numpy as np
import pytest

from ckmbeam.linalg import (
    EvdResult,
    SingularMatrixError,
    SvdResult,
    evd_hermitian,
    hermitian_inv_sqrt,
    khatri_rao,
    svd,
    water_filling,
)

from oracles import waterfill_active_set


def random_hpd(rng, n, cond_spread=3.0):
    q, _ = np.linalg.qr(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    vals = np.exp(rng.uniform(-cond_spread, cond_spread, size=n))
    return (q * vals) @ q.conj().T


class TestHermitianInvSqrt:
    def test_diagonal_case(self):
        """Diagonal input: the inverse square root is the entrywise one."""
        b = hermitian_inv_sqrt(np.diag([4.0, 9.0]).astype(complex))
        np.testing.assert_allclose(b, np.diag([0.5, 1.0 / 3.0]), atol=1e-14)

    def test_defining_property(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            n = int(rng.integers(1, 9))
            a = random_hpd(rng, n)
            b = hermitian_inv_sqrt(a)
            np.testing.assert_allclose(b @ a @ b.conj().T, np.eye(n), atol=1e-10)
            assert np.linalg.norm(b - b.conj().T) < 1e-12 * max(1.0, np.linalg.norm(b))

    def test_singular_error_names_eigenvalue(self):
        a = np.diag([1.0, 1e-15]).astype(complex)
        with pytest.raises(SingularMatrixError) as err:
            hermitian_inv_sqrt(a)
        assert "1" in str(err.value) and "eigenvalue" in str(err.value)

    def test_rejects_non_hermitian(self):
        a = np.array([[1.0, 2.0], [0.0, 1.0]], dtype=complex)
        with pytest.raises(ValueError):
            hermitian_inv_sqrt(a)

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            hermitian_inv_sqrt(np.ones((2, 3)))


class TestKhatriRao:
    def test_column_count_mismatch(self):
        with pytest.raises(ValueError):
            khatri_rao(np.ones((2, 3)), np.ones((4, 2)))

    def test_columnwise_kron(self):
        rng = np.random.default_rng(11)
        a = rng.normal(size=(3, 5)) + 1j * rng.normal(size=(3, 5))
        b = rng.normal(size=(4, 5)) + 1j * rng.normal(size=(4, 5))
        out = khatri_rao(a, b)
        assert out.shape == (12, 5)
        for col in range(5):
            np.testing.assert_allclose(out[:, col], np.kron(a[:, col], b[:, col]))

    def test_vectorization_identity(self):
        """vec of B diag(x) A^T column-stacked equals (A kr B) x, 200 draws."""
        rng = np.random.default_rng(13)
        for _ in range(200):
            m, n, ell = (int(v) for v in rng.integers(1, 7, size=3))
            a = rng.normal(size=(m, ell)) + 1j * rng.normal(size=(m, ell))
            b = rng.normal(size=(n, ell)) + 1j * rng.normal(size=(n, ell))
            x = rng.normal(size=ell) + 1j * rng.normal(size=ell)
            direct = (b @ np.diag(x) @ a.T).flatten(order="F")
            np.testing.assert_allclose(khatri_rao(a, b) @ x, direct, atol=1e-12)

    def test_gram_is_hadamard_of_grams(self):
        rng = np.random.default_rng(17)
        a = rng.normal(size=(4, 6)) + 1j * rng.normal(size=(4, 6))
        b = rng.normal(size=(3, 6)) + 1j * rng.normal(size=(3, 6))
        kr = khatri_rao(a, b)
        np.testing.assert_allclose(
            kr.conj().T @ kr, (a.conj().T @ a) * (b.conj().T @ b), atol=1e-12
        )


class TestWaterFilling:
    def test_frozen_two_channel_case(self):
        """sigma=(2,1), snr=1: both channels active, level (1+1/4+1)/2=1.125,
        shares (0.875, 0.125)."""
        alloc = water_filling(np.array([2.0, 1.0]), 1.0)
        np.testing.assert_allclose(alloc.shares, [0.875, 0.125], atol=1e-12)
        assert abs(alloc.water_level - 1.125) < 1e-12

    def test_single_channel_takes_everything(self):
        alloc = water_filling(np.array([3.0]), 2.0)
        np.testing.assert_allclose(alloc.shares, [1.0], atol=1e-12)

    def test_zero_channels_get_nothing(self):
        alloc = water_filling(np.array([2.0, 0.0, 1.0]), 1.0)
        assert alloc.shares[1] == 0.0
        np.testing.assert_allclose(alloc.shares.sum(), 1.0, atol=1e-12)

    def test_all_zero_rejected(self):
        with pytest.raises(ValueError):
            water_filling(np.zeros(3), 1.0)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            water_filling(np.array([1.0, -0.1]), 1.0)

    def test_matches_active_set_oracle(self):
        """Bisection agrees with the closed-form active-set solution."""
        rng = np.random.default_rng(23)
        for _ in range(500):
            n = int(rng.integers(1, 9))
            sv = rng.uniform(0.0, 3.0, size=n)
            sv[int(rng.integers(0, n))] = rng.uniform(0.5, 3.0)  # keep one positive
            snr = float(np.exp(rng.uniform(-2, 6)))
            alloc = water_filling(sv, snr)
            ref_shares, ref_level = waterfill_active_set(sv, snr)
            np.testing.assert_allclose(alloc.shares, ref_shares, atol=1e-8)
            assert abs(alloc.shares.sum() - 1.0) <= 1e-10
            rate = np.sum(np.log2(1.0 + snr * alloc.shares * sv**2))
            ref_rate = np.sum(np.log2(1.0 + snr * ref_shares * sv**2))
            assert abs(rate - ref_rate) <= 1e-8

    def test_dominates_random_allocations(self):
        """Closed-form split beats random simplex points up to roundoff."""
        rng = np.random.default_rng(29)
        for _ in range(100):
            n = int(rng.integers(2, 7))
            sv = rng.uniform(0.1, 3.0, size=n)
            snr = float(np.exp(rng.uniform(-1, 4)))
            alloc = water_filling(sv, snr)
            best = np.sum(np.log2(1.0 + snr * alloc.shares * sv**2))
            draws = rng.exponential(size=(200, n))
            draws /= draws.sum(axis=1, keepdims=True)
            rates = np.sum(np.log2(1.0 + snr * draws * sv**2), axis=1)
            assert best - rates.max() >= -1e-9


class TestSvdEvd:
    def test_svd_contract(self):
        rng = np.random.default_rng(31)
        for shape in [(3, 5), (5, 3), (4, 4), (1, 6)]:
            a = rng.normal(size=shape) + 1j * rng.normal(size=shape)
            res = svd(a)
            assert isinstance(res, SvdResult)
            s = res.singular_values
            assert np.all(np.diff(s) <= 1e-14)
            np.testing.assert_allclose((res.u * s) @ res.v.conj().T, a, atol=1e-10)
            k = min(shape)
            np.testing.assert_allclose(res.u.conj().T @ res.u, np.eye(k), atol=1e-12)
            np.testing.assert_allclose(res.v.conj().T @ res.v, np.eye(k), atol=1e-12)

    def test_evd_contract(self):
        rng = np.random.default_rng(37)
        for _ in range(20):
            n = int(rng.integers(1, 8))
            a = random_hpd(rng, n)
            res = evd_hermitian(a)
            assert isinstance(res, EvdResult)
            assert np.all(np.diff(res.values) <= 1e-12)
            np.testing.assert_allclose(
                (res.vectors * res.values) @ res.vectors.conj().T, a, atol=1e-9
            )

    def test_evd_rejects_non_hermitian(self):
        with pytest.raises(ValueError):
            evd_hermitian(np.array([[0.0, 1.0], [0.0, 0.0]]))
