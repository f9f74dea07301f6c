"""Hybrid beamforming: rates, baseband optimization, exhaustive selection."""

import numpy as np
import pytest

from ckmbeam.arrays import UpaGeometry
from ckmbeam.codebooks import kronecker_dft_codebook
from ckmbeam.hybrid import (
    HybridBeamformer,
    SearchBudgetError,
    SystemDims,
    effective_channel,
    effective_rate,
    exhaustive_hybrid_search,
    optimal_baseband,
    rate,
)
from ckmbeam.linalg import hermitian_inv_sqrt

from oracles import pair_rate_oracle, rate_logdet


def random_complex(rng, shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


def random_rf(rng, n, k):
    """Constant-modulus selection matrix with entries of modulus 1/sqrt(n)."""
    phases = rng.uniform(0, 2 * np.pi, size=(n, k))
    return np.exp(1j * phases) / np.sqrt(n)


class TestSystemDims:
    def test_stream_count_follows_rx_chains(self):
        dims = SystemDims(8, 4, 3, 2)
        assert dims.n_streams == 2

    def test_chain_count_bounds(self):
        with pytest.raises(ValueError):
            SystemDims(8, 4, 8, 2)  # tx chains must stay below tx elements
        with pytest.raises(ValueError):
            SystemDims(8, 4, 3, 4)
        with pytest.raises(ValueError):
            SystemDims(8, 4, 2, 3)  # rx chains cannot exceed tx chains


class TestRate:
    def test_matches_logdet_oracle(self):
        rng = np.random.default_rng(101)
        for _ in range(50):
            m, k = int(rng.integers(1, 5)), int(rng.integers(1, 5))
            h = random_complex(rng, (m, k))
            b = random_complex(rng, (k, k))
            cov = b @ b.conj().T
            cov /= np.trace(cov).real
            snr = float(np.exp(rng.uniform(-2, 4)))
            got = rate(h, cov, snr)
            ref = rate_logdet(h, cov, snr)
            assert abs(got - ref) < 1e-10 * max(1.0, abs(ref))

    def test_zero_channel_zero_rate(self):
        assert rate(np.zeros((2, 3)), np.eye(3) / 3, 5.0) == 0.0

    def test_rejects_negative_snr(self):
        with pytest.raises(ValueError):
            rate(np.eye(2), np.eye(2) / 2, -1.0)

    def test_rejects_non_hermitian_covariance(self):
        cov = np.array([[0.5, 0.4], [0.0, 0.5]])
        with pytest.raises(ValueError):
            rate(np.eye(2), cov, 1.0)


class TestEffectiveChannel:
    def test_whitening_invariant(self):
        """Rates computed through the whitened effective channel match the
        oracle that whitens from scratch, over random mixing."""
        rng = np.random.default_rng(103)
        for _ in range(100):
            h = random_complex(rng, (4, 8))
            f_rf = random_rf(rng, 8, 3)
            w_rf = random_rf(rng, 4, 2)
            he = effective_channel(h, f_rf, w_rf)
            assert he.shape == (2, 3)
            # direct construction
            white = hermitian_inv_sqrt(w_rf.conj().T @ w_rf)
            np.testing.assert_allclose(
                he, white @ w_rf.conj().T @ h @ f_rf, atol=1e-11
            )


class TestOptimalBaseband:
    def test_beats_random_covariances(self):
        """The water-filled baseband maximizes rate over random unit-trace
        input covariances shaped through the same analog front ends."""
        rng = np.random.default_rng(107)
        for _ in range(40):
            h = random_complex(rng, (4, 8))
            f_rf = random_rf(rng, 8, 3)
            w_rf = random_rf(rng, 4, 2)
            snr = float(np.exp(rng.uniform(-1, 3)))
            bf, best = optimal_baseband(h, f_rf, w_rf, snr)
            he = effective_channel(h, f_rf, w_rf)
            tx_white = hermitian_inv_sqrt(f_rf.conj().T @ f_rf)
            for _ in range(25):
                b = random_complex(rng, (3, 3))
                g = b @ b.conj().T
                g /= np.trace(g).real
                # feasible digital covariance: F_BB F_BB^H with unit power
                cov = tx_white @ g @ tx_white.conj().T
                cov /= np.trace(
                    f_rf @ cov @ f_rf.conj().T
                ).real
                trial = rate(he, cov, snr)
                assert best - trial >= -1e-9

    def test_power_constraint_met(self):
        rng = np.random.default_rng(109)
        h = random_complex(rng, (4, 8))
        f_rf = random_rf(rng, 8, 3)
        w_rf = random_rf(rng, 4, 2)
        bf, _ = optimal_baseband(h, f_rf, w_rf, 2.0)
        assert abs(np.linalg.norm(bf.tx_rf @ bf.tx_bb) - 1.0) < 1e-10

    def test_stream_count_equals_rx_chains(self):
        rng = np.random.default_rng(113)
        h = random_complex(rng, (4, 8))
        bf, _ = optimal_baseband(h, random_rf(rng, 8, 3), random_rf(rng, 4, 2), 1.0)
        assert bf.tx_bb.shape == (3, 2)
        assert bf.rx_bb.shape == (2, 2)

    def test_combiner_whitens_itself(self):
        """W_BB^H W_RF^H W_RF W_BB = I: the digital combiner absorbs the
        analog gram."""
        rng = np.random.default_rng(127)
        h = random_complex(rng, (4, 8))
        w_rf = random_rf(rng, 4, 2)
        bf, _ = optimal_baseband(h, random_rf(rng, 8, 3), w_rf, 1.0)
        w = w_rf @ bf.rx_bb
        np.testing.assert_allclose(w.conj().T @ w, np.eye(2), atol=1e-10)

    def test_zero_channel_equal_split(self):
        rng = np.random.default_rng(131)
        bf, r = optimal_baseband(
            np.zeros((4, 8)), random_rf(rng, 8, 3), random_rf(rng, 4, 2), 1.0
        )
        assert r == 0.0
        assert abs(np.linalg.norm(bf.tx_rf @ bf.tx_bb) - 1.0) < 1e-10

    def test_rate_reproducible_through_rate_function(self):
        rng = np.random.default_rng(137)
        h = random_complex(rng, (4, 8))
        f_rf = random_rf(rng, 8, 3)
        w_rf = random_rf(rng, 4, 2)
        snr = 3.0
        bf, r = optimal_baseband(h, f_rf, w_rf, snr)
        he = effective_channel(h, f_rf, w_rf)
        assert abs(rate(he, bf.input_covariance, snr) - r) < 1e-9


class TestHybridBeamformer:
    def test_validates_constant_modulus(self):
        rng = np.random.default_rng(139)
        f_rf = random_rf(rng, 8, 3)
        w_rf = random_rf(rng, 4, 2)
        f_bb = np.linalg.qr(random_complex(rng, (3, 2)))[0]
        f_bb /= np.linalg.norm(f_rf @ f_bb)
        w_bb = random_complex(rng, (2, 2))
        HybridBeamformer(f_rf, f_bb, w_rf, w_bb)
        with pytest.raises(ValueError):
            HybridBeamformer(f_rf * 2.0, f_bb / 2.0, w_rf, w_bb)

    def test_validates_unit_power(self):
        rng = np.random.default_rng(149)
        f_rf = random_rf(rng, 8, 3)
        w_rf = random_rf(rng, 4, 2)
        f_bb = np.linalg.qr(random_complex(rng, (3, 2)))[0]
        with pytest.raises(ValueError):
            HybridBeamformer(f_rf, f_bb * 3.0, w_rf, np.eye(2, dtype=complex))


class TestExhaustiveSearch:
    def _setup(self, seed=151):
        rng = np.random.default_rng(seed)
        tx_geom = UpaGeometry(2, 4)
        rx_geom = UpaGeometry(2, 2)
        h = random_complex(rng, (4, 8))
        tx_cb = kronecker_dft_codebook(tx_geom)
        rx_cb = kronecker_dft_codebook(rx_geom)
        dims = SystemDims(8, 4, 2, 2)
        return h, tx_cb, rx_cb, dims

    def test_matches_brute_force_oracle(self):
        import itertools

        h, tx_cb, rx_cb, dims = self._setup()
        snr = 2.0
        bf, best = exhaustive_hybrid_search(h, tx_cb, rx_cb, dims, snr)
        ref_best = -np.inf
        ref_pair = None
        for tx_sel in itertools.combinations(range(tx_cb.n_beams), 2):
            for rx_sel in itertools.combinations(range(rx_cb.n_beams), 2):
                r = pair_rate_oracle(
                    h, tx_cb.subset(tx_sel), rx_cb.subset(rx_sel), snr
                )
                if r > ref_best:
                    ref_best = r
                    ref_pair = (tx_sel, rx_sel)
        assert bf.tx_indices == ref_pair[0]
        assert bf.rx_indices == ref_pair[1]
        assert abs(best - ref_best) < 1e-8

    def test_selected_beams_populate_rf_stages(self):
        h, tx_cb, rx_cb, dims = self._setup(157)
        bf, _ = exhaustive_hybrid_search(h, tx_cb, rx_cb, dims, 1.0)
        np.testing.assert_array_equal(bf.tx_rf, tx_cb.subset(bf.tx_indices))
        np.testing.assert_array_equal(bf.rx_rf, rx_cb.subset(bf.rx_indices))

    def test_monotone_under_codebook_growth(self):
        """Adding beams to the codebooks can only help an exhaustive search."""
        h, tx_cb, rx_cb, dims = self._setup(163)
        _, small = exhaustive_hybrid_search(
            h,
            tx_cb.restrict(6) if hasattr(tx_cb, "restrict") else _truncate(tx_cb, 6),
            rx_cb,
            dims,
            1.0,
        )
        _, big = exhaustive_hybrid_search(h, tx_cb, rx_cb, dims, 1.0)
        assert big >= small - 1e-12

    def test_budget_guard(self):
        h, tx_cb, rx_cb, dims = self._setup(167)
        with pytest.raises(SearchBudgetError):
            exhaustive_hybrid_search(h, tx_cb, rx_cb, dims, 1.0, budget=10)

    def test_rate_positive_for_random_channel(self):
        h, tx_cb, rx_cb, dims = self._setup(173)
        _, best = exhaustive_hybrid_search(h, tx_cb, rx_cb, dims, 1.0)
        assert best > 0


def _truncate(cb, n):
    from ckmbeam.codebooks import Codebook

    return Codebook(cb.geometry, cb.beams[:, :n], cb.oversampling)


class TestEffectiveRate:
    def test_formula(self):
        assert effective_rate([4.0, 6.0], 100, 20) == pytest.approx(4.0)

    def test_zero_training(self):
        assert effective_rate([3.0], 50, 0) == pytest.approx(3.0)

    def test_training_exceeding_block_rejected(self):
        with pytest.raises(ValueError):
            effective_rate([3.0], 50, 80)

    def test_validation(self):
        with pytest.raises(ValueError):
            effective_rate([], 100, 10)
        with pytest.raises(ValueError):
            effective_rate([1.0], 0, 0)
        with pytest.raises(ValueError):
            effective_rate([1.0], 100, -1)
