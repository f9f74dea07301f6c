"""Hybrid analog/digital beamforming core.

Analog precoders/combiners pick constant-modulus codebook columns; digital
stages work on the whitened effective channel. The transmit power constraint
is ||tx_rf @ tx_bb||_F^2 = 1 throughout.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .linalg import SingularMatrixError, hermitian_inv_sqrt, svd, water_filling

_LN2 = math.log(2.0)


class SearchBudgetError(RuntimeError):
    """Exhaustive selection space exceeds the configured budget."""


@dataclass(frozen=True)
class SystemDims:
    """Antenna and RF-chain counts. The stream count equals the receive RF
    chain count and never exceeds the transmit RF chain count."""

    n_tx: int
    n_rx: int
    n_tx_rf: int
    n_rx_rf: int

    def __post_init__(self):
        if not (1 <= self.n_rx_rf <= self.n_tx_rf):
            raise ValueError(
                f"need 1 <= n_rx_rf <= n_tx_rf, got {self.n_rx_rf}, {self.n_tx_rf}"
            )
        if self.n_tx_rf >= self.n_tx:
            raise ValueError(
                f"transmit RF chains must be fewer than antennas "
                f"({self.n_tx_rf} >= {self.n_tx})"
            )
        if self.n_rx_rf >= self.n_rx:
            raise ValueError(
                f"receive RF chains must be fewer than antennas "
                f"({self.n_rx_rf} >= {self.n_rx})"
            )

    @property
    def n_streams(self):
        return self.n_rx_rf


@dataclass(frozen=True)
class HybridBeamformer:
    """Analog + digital beamforming matrices with validated constraints."""

    tx_rf: np.ndarray
    tx_bb: np.ndarray
    rx_rf: np.ndarray
    rx_bb: np.ndarray
    tx_indices: tuple = ()
    rx_indices: tuple = ()

    def __post_init__(self):
        tx_rf = np.asarray(self.tx_rf, dtype=np.complex128)
        tx_bb = np.asarray(self.tx_bb, dtype=np.complex128)
        rx_rf = np.asarray(self.rx_rf, dtype=np.complex128)
        rx_bb = np.asarray(self.rx_bb, dtype=np.complex128)
        if tx_rf.shape[1] != tx_bb.shape[0]:
            raise ValueError(
                f"tx chain mismatch: tx_rf {tx_rf.shape} vs tx_bb {tx_bb.shape}"
            )
        if rx_rf.shape[1] != rx_bb.shape[0]:
            raise ValueError(
                f"rx chain mismatch: rx_rf {rx_rf.shape} vs rx_bb {rx_bb.shape}"
            )
        for name, mat in (("tx_rf", tx_rf), ("rx_rf", rx_rf)):
            expected = 1.0 / math.sqrt(mat.shape[0])
            dev = float(np.max(np.abs(np.abs(mat) - expected)))
            if dev > 1e-12:
                raise ValueError(
                    f"{name} entries must all have modulus 1/sqrt({mat.shape[0]}) "
                    f"(worst deviation {dev:.3e})"
                )
        power = float(np.linalg.norm(tx_rf @ tx_bb) ** 2)
        if abs(power - 1.0) > 1e-10:
            raise ValueError(f"transmit power {power!r} violates the unit constraint")
        object.__setattr__(self, "tx_rf", tx_rf)
        object.__setattr__(self, "tx_bb", tx_bb)
        object.__setattr__(self, "rx_rf", rx_rf)
        object.__setattr__(self, "rx_bb", rx_bb)
        object.__setattr__(self, "tx_indices", tuple(int(i) for i in self.tx_indices))
        object.__setattr__(self, "rx_indices", tuple(int(i) for i in self.rx_indices))

    @property
    def input_covariance(self):
        return self.tx_bb @ self.tx_bb.conj().T


def effective_channel(channel, tx_rf, rx_rf):
    """Whitened digital-domain channel (rx_rf^H rx_rf)^(-1/2) rx_rf^H H tx_rf."""
    h = np.asarray(channel, dtype=np.complex128)
    f = np.asarray(tx_rf, dtype=np.complex128)
    w = np.asarray(rx_rf, dtype=np.complex128)
    if h.shape != (w.shape[0], f.shape[0]):
        raise ValueError(
            f"channel shape {h.shape} does not match rx {w.shape[0]} x tx {f.shape[0]}"
        )
    white = hermitian_inv_sqrt(w.conj().T @ w)
    return white @ (w.conj().T @ h @ f)


def rate(effective, input_cov, snr):
    """Spectral efficiency log2 det(I + snr * H_e R H_e^H) in bits/s/Hz."""
    h = np.asarray(effective, dtype=np.complex128)
    r = np.asarray(input_cov, dtype=np.complex128)
    if h.ndim != 2 or r.shape != (h.shape[1], h.shape[1]):
        raise ValueError(
            f"input covariance {r.shape} does not match effective channel {h.shape}"
        )
    if not (snr > 0.0 and math.isfinite(snr)):
        raise ValueError(f"snr must be positive and finite, got {snr}")
    herm_dev = float(np.linalg.norm(r - r.conj().T))
    scale = max(1.0, float(np.linalg.norm(r)))
    if herm_dev > 1e-10 * scale:
        raise ValueError(f"input covariance is not Hermitian (deviation {herm_dev:.3e})")
    evs = np.linalg.eigvalsh(0.5 * (r + r.conj().T))
    if float(evs[0]) < -1e-10 * max(1.0, float(evs[-1])):
        raise ValueError(f"input covariance has negative eigenvalue {float(evs[0]):.3e}")
    gram = h @ r @ h.conj().T
    ev = np.linalg.eigvalsh(0.5 * (gram + gram.conj().T))
    ev = np.clip(ev, 0.0, None)
    return float(np.sum(np.log1p(snr * ev)) / _LN2)


def optimal_baseband(channel, tx_rf, rx_rf, snr):
    """Capacity-optimal digital stages for fixed analog selections.

    Whitens both sides, takes the thin SVD of the doubly whitened channel,
    water-fills the singular values, and folds the whitening back into the
    digital matrices. Returns the beamformer and its rate on this channel.
    A zero channel yields rate 0 with an equal power split.
    """
    f = np.asarray(tx_rf, dtype=np.complex128)
    w = np.asarray(rx_rf, dtype=np.complex128)
    n_streams = w.shape[1]
    if f.shape[1] < n_streams:
        raise ValueError(
            f"stream count {n_streams} exceeds transmit chain count {f.shape[1]}"
        )
    tx_white = hermitian_inv_sqrt(f.conj().T @ f)
    rx_white = hermitian_inv_sqrt(w.conj().T @ w)
    h = np.asarray(channel, dtype=np.complex128)
    core = rx_white @ (w.conj().T @ h @ f) @ tx_white
    tx_bb, rx_bb, achieved = _baseband_stages(core, tx_white, rx_white, n_streams, snr)
    bf = HybridBeamformer(tx_rf=f, tx_bb=tx_bb, rx_rf=w, rx_bb=rx_bb)
    return bf, achieved


def _baseband_stages(core, tx_white, rx_white, n_streams, snr):
    """Digital stages and rate from a doubly whitened channel core.

    Thin SVD, water-filling over the leading singular values, whitening folded
    back into both digital matrices. An all-zero core gets an equal power
    split and rate 0.
    """
    dec = svd(core)
    sv = dec.singular_values[:n_streams]
    if np.any(sv > 0.0):
        shares = water_filling(sv, snr).shares
    else:
        shares = np.full(n_streams, 1.0 / n_streams)
    tx_bb = tx_white @ (dec.v[:, :n_streams] * np.sqrt(shares))
    rx_bb = rx_white @ dec.u[:, :n_streams]
    achieved = float(np.sum(np.log1p(snr * shares * sv * sv)) / _LN2)
    return tx_bb, rx_bb, achieved


def exhaustive_hybrid_search(channel, tx_codebook, rx_codebook, dims, snr,
                             budget=1_000_000):
    """Best RF selection pair by full enumeration over both codebooks.

    Scores every (transmit subset, receive subset) pair with the optimal
    digital stage and keeps the first maximizer in lexicographic enumeration
    order (transmit subsets outer). Raises SearchBudgetError when the pair
    count exceeds ``budget``.
    """
    h = np.asarray(channel, dtype=np.complex128)
    if h.shape != (dims.n_rx, dims.n_tx):
        raise ValueError(f"channel shape {h.shape} does not match dims {dims}")
    if tx_codebook.n_beams < dims.n_tx_rf or rx_codebook.n_beams < dims.n_rx_rf:
        raise ValueError("codebooks are smaller than the RF chain counts")
    pairs = math.comb(tx_codebook.n_beams, dims.n_tx_rf) * math.comb(
        rx_codebook.n_beams, dims.n_rx_rf
    )
    if pairs > budget:
        raise SearchBudgetError(
            f"{pairs} selection pairs exceed the search budget of {budget}; "
            "exhaustive selection is intended for desk-scale dimensions"
        )
    tx_beams = tx_codebook.beams
    rx_beams = rx_codebook.beams
    coupling = rx_beams.conj().T @ h @ tx_beams
    tx_gram = tx_beams.conj().T @ tx_beams
    rx_gram = rx_beams.conj().T @ rx_beams
    tx_idx, rx_idx, _, status, bad_eig = _kernels.search_selection_pairs(
        coupling, rx_gram, tx_gram, dims.n_tx_rf, dims.n_rx_rf, snr
    )
    if status == 1:
        raise SingularMatrixError(
            f"a transmit beam subset has a singular Gram matrix "
            f"(eigenvalue {bad_eig:.6e})"
        )
    if status == 2:
        raise SingularMatrixError(
            f"a receive beam subset has a singular Gram matrix "
            f"(eigenvalue {bad_eig:.6e})"
        )
    bf, achieved = optimal_baseband(
        h, tx_codebook.subset(tx_idx), rx_codebook.subset(rx_idx), snr
    )
    bf = replace(bf, tx_indices=tuple(tx_idx), rx_indices=tuple(rx_idx))
    return bf, achieved


def effective_rate(block_rates, block_length, training_symbols):
    """Mean block rate scaled by the fraction of symbols left after training."""
    rates = np.asarray(block_rates, dtype=np.float64)
    if rates.size == 0:
        raise ValueError("need at least one block rate")
    if np.any(~np.isfinite(rates)) or np.any(rates < 0.0):
        raise ValueError("block rates must be finite and nonnegative")
    if block_length <= 0:
        raise ValueError(f"block length must be positive, got {block_length}")
    if not (0 <= training_symbols <= block_length):
        raise ValueError(
            f"training symbols {training_symbols} outside [0, {block_length}]"
        )
    return float(rates.mean() * (block_length - training_symbols) / block_length)
