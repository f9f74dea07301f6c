"""Training design and path-gain estimation from angle-map candidates.

Given a short list of candidate departure/arrival directions for a location,
this module lays out a multi-epoch sounding schedule whose analog stages point
at those directions, turns the received pilot blocks into a linear system for
the candidate gains, and solves it by least squares. A reconstructed channel
estimate and mean-square-error bounds for the gain estimate round the module
out.
"""

import dataclasses
import math

import numpy as np

from .arrays import response_matrix
from .hybrid import HybridBeamformer
from .linalg import hermitian_inv_sqrt, evd_hermitian, khatri_rao

# Observation matrices beyond this condition number get extra epochs.
_MAX_CONDITION = 1e8
_MAX_EXTRA_EPOCHS = 4


class CamDesignError(RuntimeError):
    """Training design could not produce a usable observation matrix."""


def training_subset(scores, size, position):
    """Beam subset for one training epoch, rotating through ranked beams.

    Beams are ranked by (score descending, index ascending); rotation position
    p covers ranked slots p*size .. p*size+size-1, wrapping modulo the beam
    count, and comes back as a sorted index tuple. Position 0 is therefore
    exactly the top-``size`` beams, and consecutive positions use disjoint
    beam groups until the ranking wraps around.
    """
    values = np.asarray(scores, dtype=np.float64)
    if values.ndim != 1:
        raise ValueError(f"scores must be one dimensional, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise ValueError("scores must all be finite")
    n = values.shape[0]
    if not 1 <= size <= n:
        raise ValueError(f"subset size must be in [1, {n}], got {size}")
    if int(position) != position or position < 0:
        raise ValueError(f"position must be a nonnegative integer, got {position}")
    ranked = sorted(range(n), key=lambda i: (-values[i], i))
    start = int(position) * size
    return tuple(sorted(ranked[(start + j) % n] for j in range(size)))


def _beam_scores(response, beams):
    return np.sum(np.abs(response.conj().T @ beams) ** 2, axis=0)


def _unitary_pilots(n_streams):
    k = np.arange(n_streams)
    pilots = np.exp(-2j * np.pi * np.outer(k, k) / n_streams) / math.sqrt(n_streams)
    gap = float(np.linalg.norm(pilots @ pilots.conj().T - np.eye(n_streams)))
    if gap > 1e-10:
        raise ArithmeticError(f"pilot matrix lost unitarity (gap {gap:.3e})")
    return pilots


def _epoch_beamformer(tx_codebook, rx_codebook, response_tx, response_rx,
                      tx_subset, rx_subset, n_streams):
    """Beamformer whose analog stages are the given codebook subsets.

    The transmit baseband stage whitens the selected beams and keeps the top
    eigenvectors of the beam-space focus matrix; scaling by 1/sqrt(n_streams)
    makes the transmit power exactly one. The receive stage keeps every
    eigenvector, so the combined combiner has orthonormal columns.
    """
    f_rf = tx_codebook.beams[:, list(tx_subset)]
    w_rf = rx_codebook.beams[:, list(rx_subset)]
    tx_proj = response_tx.conj().T @ f_rf
    tx_top = evd_hermitian(tx_proj.conj().T @ tx_proj).vectors[:, :n_streams]
    tx_bb = hermitian_inv_sqrt(f_rf.conj().T @ f_rf) @ tx_top / math.sqrt(n_streams)
    rx_proj = response_rx.conj().T @ w_rf
    rx_all = evd_hermitian(rx_proj.conj().T @ rx_proj).vectors
    rx_bb = hermitian_inv_sqrt(w_rf.conj().T @ w_rf) @ rx_all
    return HybridBeamformer(
        tx_rf=f_rf,
        tx_bb=tx_bb,
        rx_rf=w_rf,
        rx_bb=rx_bb,
        tx_indices=tuple(tx_subset),
        rx_indices=tuple(rx_subset),
    )


@dataclasses.dataclass(frozen=True)
class CamTrainingPlan:
    """Multi-epoch sounding schedule for estimating candidate path gains.

    ``observation`` stacks one block per epoch; row counts are
    n_streams**2 per epoch and columns follow the candidate order. The same
    unitary pilot matrix is reused by every epoch.
    """

    beamformers: tuple
    pilots: np.ndarray
    observation: np.ndarray
    response_tx: np.ndarray
    response_rx: np.ndarray
    aod: tuple
    aoa: tuple

    @property
    def n_epochs(self):
        return len(self.beamformers)

    @property
    def n_candidates(self):
        return self.observation.shape[1]

    @property
    def n_streams(self):
        return self.pilots.shape[0]

    @property
    def training_symbols(self):
        return len(self.beamformers) * self.pilots.shape[1]


def _observation_block(beamformer, response_tx, response_rx):
    precoder = beamformer.tx_rf @ beamformer.tx_bb
    combiner = beamformer.rx_rf @ beamformer.rx_bb
    tx_side = response_tx.conj().T @ precoder
    rx_side = combiner.conj().T @ response_rx
    return khatri_rao(tx_side.T, rx_side)


def design_training_beams(candidates, tx_codebook, rx_codebook, dims,
                          subset_rank=0):
    """Build the sounding plan for a list of angle candidates.

    Epochs are ceil(n_candidates / n_streams**2); epoch e points both arrays
    at rotation position subset_rank + e of their score-ranked beam lists, so
    successive epochs sweep disjoint beam groups and the stacked observation
    matrix reaches full column rank. If its condition number still ends up
    above 1e8, up to four extra epochs at the following rotation positions are
    appended before giving up.
    """
    cands = list(candidates)
    if not cands:
        raise ValueError("need at least one angle candidate")
    if tx_codebook.geometry.size != dims.n_tx:
        raise ValueError(
            f"transmit codebook is for {tx_codebook.geometry.size} antennas, "
            f"dims say {dims.n_tx}"
        )
    if rx_codebook.geometry.size != dims.n_rx:
        raise ValueError(
            f"receive codebook is for {rx_codebook.geometry.size} antennas, "
            f"dims say {dims.n_rx}"
        )
    if int(subset_rank) != subset_rank or subset_rank < 0:
        raise ValueError(f"subset_rank must be a nonnegative integer, got {subset_rank}")
    subset_rank = int(subset_rank)

    aod = tuple(c.aod for c in cands)
    aoa = tuple(c.aoa for c in cands)
    response_tx = response_matrix(tx_codebook.geometry, aod)
    response_rx = response_matrix(rx_codebook.geometry, aoa)
    n_streams = dims.n_streams
    tx_scores = _beam_scores(response_tx, tx_codebook.beams)
    rx_scores = _beam_scores(response_rx, rx_codebook.beams)

    def add_epoch(position):
        bf = _epoch_beamformer(
            tx_codebook, rx_codebook, response_tx, response_rx,
            training_subset(tx_scores, dims.n_tx_rf, position),
            training_subset(rx_scores, dims.n_rx_rf, position),
            n_streams,
        )
        beamformers.append(bf)
        blocks.append(_observation_block(bf, response_tx, response_rx))

    n_epochs = -(-len(cands) // (n_streams * n_streams))
    beamformers = []
    blocks = []
    for epoch in range(n_epochs):
        add_epoch(subset_rank + epoch)

    extra = 0
    while True:
        observation = np.vstack(blocks)
        condition = float(np.linalg.cond(observation))
        if condition <= _MAX_CONDITION:
            break
        if extra == _MAX_EXTRA_EPOCHS:
            raise CamDesignError(
                f"observation matrix stays ill conditioned "
                f"(condition {condition:.3e}) after {extra} extra epochs"
            )
        add_epoch(subset_rank + n_epochs + extra)
        extra += 1

    return CamTrainingPlan(
        beamformers=tuple(beamformers),
        pilots=_unitary_pilots(n_streams),
        observation=observation,
        response_tx=response_tx,
        response_rx=response_rx,
        aod=aod,
        aoa=aoa,
    )


def _check_snr(snr):
    if not (snr > 0.0 and math.isfinite(snr)):
        raise ValueError(f"snr must be positive and finite, got {snr}")


def simulate_training(plan, channel, snr, rng=None):
    """Sound the channel with the plan, returning the stacked pilot outputs.

    Per epoch the receiver output is sqrt(snr) * W^H H F plus combined noise,
    already decorrelated by the pilot matrix; blocks are vectorized column by
    column and concatenated in epoch order. With ``rng`` None the noise term
    is skipped entirely, giving the exact noiseless observation.
    """
    mat = np.asarray(channel, dtype=np.complex128)
    n_rx = plan.response_rx.shape[0]
    n_tx = plan.response_tx.shape[0]
    if mat.shape != (n_rx, n_tx):
        raise ValueError(f"channel must be {(n_rx, n_tx)}, got {mat.shape}")
    _check_snr(snr)
    root_power = math.sqrt(snr)
    n_streams = plan.n_streams
    chunks = []
    for bf in plan.beamformers:
        precoder = bf.tx_rf @ bf.tx_bb
        combiner = (bf.rx_rf @ bf.rx_bb).conj().T
        block = root_power * (combiner @ mat @ precoder)
        if rng is not None:
            noise = (
                rng.standard_normal((n_rx, n_streams))
                + 1j * rng.standard_normal((n_rx, n_streams))
            ) / math.sqrt(2.0)
            block = block + combiner @ noise @ plan.pilots.conj().T
        chunks.append(block.reshape(-1, order="F"))
    return np.concatenate(chunks)


@dataclasses.dataclass(frozen=True)
class GainEstimate:
    """Least-squares candidate gains and the residual left in the outputs."""

    gains: np.ndarray
    residual: float


def estimate_gains(plan, outputs, snr):
    """Least-squares path gains from stacked training outputs."""
    vec = np.asarray(outputs, dtype=np.complex128)
    expected = plan.observation.shape[0]
    if vec.shape != (expected,):
        raise ValueError(f"outputs must have shape ({expected},), got {vec.shape}")
    _check_snr(snr)
    root_power = math.sqrt(snr)
    gains, *_ = np.linalg.lstsq(plan.observation, vec, rcond=None)
    gains = gains / root_power
    residual = float(np.linalg.norm(vec - root_power * (plan.observation @ gains)))
    return GainEstimate(gains=gains, residual=residual)


def reconstruct_channel(plan, gains):
    """Channel rebuilt from candidate directions and estimated gains."""
    vec = np.asarray(gains, dtype=np.complex128)
    if vec.shape != (plan.n_candidates,):
        raise ValueError(
            f"gains must have shape ({plan.n_candidates},), got {vec.shape}"
        )
    return (plan.response_rx * vec) @ plan.response_tx.conj().T


@dataclasses.dataclass(frozen=True)
class CamMseBound:
    """Gain-estimate mean square error and two closed-form lower bounds.

    ``exact_mse`` is the least-squares error itself (unit noise variance),
    ``trace_bound`` relaxes it through the trace of the observation Gram, and
    ``product_bound`` relaxes further using per-epoch factor norms, so
    exact_mse >= trace_bound >= product_bound always holds.
    """

    exact_mse: float
    trace_bound: float
    product_bound: float


def mse_lower_bound(plan, snr):
    """Error of the gain estimator for this plan, with its two relaxations.

    Requires every epoch's combined combiner to have orthonormal columns;
    that is what keeps the combined noise white so the least-squares error
    formula is exact.
    """
    _check_snr(snr)
    for position, bf in enumerate(plan.beamformers):
        combiner = bf.rx_rf @ bf.rx_bb
        gap = float(np.linalg.norm(
            combiner.conj().T @ combiner - np.eye(combiner.shape[1])
        ))
        if gap > 1e-8:
            raise CamDesignError(
                f"epoch {position} combiner columns are not orthonormal "
                f"(gap {gap:.3e}); the noise-whitening hypothesis fails"
            )
    gram = plan.observation.conj().T @ plan.observation
    eigs = np.linalg.eigvalsh(gram)
    if eigs[0] <= 0.0:
        raise CamDesignError("observation matrix is rank deficient")
    n_cands = plan.n_candidates
    exact = float(np.sum(1.0 / eigs)) / snr
    trace_bound = n_cands * n_cands / (snr * float(np.trace(gram).real))
    factor_sum = 0.0
    for bf in plan.beamformers:
        tx_side = plan.response_tx.conj().T @ (bf.tx_rf @ bf.tx_bb)
        rx_side = plan.response_rx.conj().T @ (bf.rx_rf @ bf.rx_bb)
        factor_sum += float(
            np.linalg.norm(tx_side) ** 2 * np.linalg.norm(rx_side) ** 2
        )
    product_bound = n_cands * n_cands / (snr * factor_sum)
    return CamMseBound(
        exact_mse=exact, trace_bound=trace_bound, product_bound=product_bound
    )
