"""Environment-unaware training baselines.

Three reference schemes that never consult a channel knowledge map: full
least-squares sounding of every antenna pair, sparse estimation on a discrete
angle dictionary from random probing beams, and beam alignment computed from
reported endpoint positions alone.
"""

import math
from dataclasses import dataclass

import numpy as np

from .arrays import direction_to_angles, response_matrix, steering_vector
from .bim import _top_indices
from .cam import _check_snr, _unitary_pilots
from .linalg import hermitian_inv_sqrt

# Largest dictionary the sparse estimator will materialize (complex128 bytes).
_DICTIONARY_BUDGET_BYTES = 1 << 30


@dataclass(frozen=True)
class BaselineResult:
    """Outcome of one training scheme.

    Carries either a full channel estimate (`channel`) or a set of selected
    analog beams (`tx_rf`/`rx_rf` plus their codebook indices), never both,
    together with the number of pilot symbols the scheme consumes.
    """

    method: str
    training_symbols: int
    channel: np.ndarray = None
    tx_rf: np.ndarray = None
    rx_rf: np.ndarray = None
    tx_indices: tuple = ()
    rx_indices: tuple = ()

    def __post_init__(self):
        if not self.method:
            raise ValueError("method tag must be a nonempty string")
        if self.training_symbols < 0:
            raise ValueError(
                f"training_symbols must be >= 0, got {self.training_symbols}"
            )
        has_channel = self.channel is not None
        has_beams = self.tx_rf is not None or self.rx_rf is not None
        if has_channel == has_beams:
            raise ValueError(
                "result must carry either a channel estimate or selected beams"
            )
        if has_beams and (self.tx_rf is None or self.rx_rf is None):
            raise ValueError("beam selections need both transmit and receive sides")
        if has_channel:
            object.__setattr__(
                self, "channel", np.asarray(self.channel, dtype=np.complex128)
            )
        object.__setattr__(self, "tx_indices", tuple(int(i) for i in self.tx_indices))
        object.__setattr__(self, "rx_indices", tuple(int(i) for i in self.rx_indices))


def _check_channel(channel, dims):
    mat = np.asarray(channel, dtype=np.complex128)
    if mat.shape != (dims.n_rx, dims.n_tx):
        raise ValueError(
            f"channel shape {mat.shape} does not match ({dims.n_rx}, {dims.n_tx})"
        )
    return mat


def ls_full_estimate(channel, dims, snr, rng=None):
    """Estimate every channel entry by sounding all antenna pairs.

    The transmitter cycles the columns of an n_tx-point unitary DFT, one
    sounding direction per symbol; for each direction the receiver steps
    through disjoint groups of n_rx_rf columns of an n_rx-point unitary
    combiner bank until all antennas are covered. Inverting the two unitary
    factors recovers the channel exactly in the noiseless case.

    The recorded symbol count is ceil(n_tx*n_rx/n_rx_rf). When the chain
    count does not divide the antenna count the simulated sweep is slightly
    longer, because the final partial combiner group still occupies a full
    symbol.
    """
    h = _check_channel(channel, dims)
    _check_snr(snr)
    root_power = math.sqrt(snr)
    sounding = _unitary_pilots(dims.n_tx)
    bank = _unitary_pilots(dims.n_rx)
    outputs = root_power * (bank.conj().T @ h @ sounding)
    if rng is not None:
        n_groups = -(-dims.n_rx // dims.n_rx_rf)
        for t in range(dims.n_tx):
            for g in range(n_groups):
                rows = slice(g * dims.n_rx_rf, min((g + 1) * dims.n_rx_rf, dims.n_rx))
                noise = (
                    rng.standard_normal(dims.n_rx)
                    + 1j * rng.standard_normal(dims.n_rx)
                ) / math.sqrt(2.0)
                outputs[rows, t] += bank[:, rows].conj().T @ noise
    estimate = (bank @ outputs @ sounding.conj().T) / root_power
    n_training = -(-(dims.n_tx * dims.n_rx) // dims.n_rx_rf)
    return BaselineResult(method="ls", training_symbols=n_training, channel=estimate)


def _random_beams(rng, n_antennas, count):
    """Constant-modulus columns with independent uniform phases."""
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(n_antennas, count))
    return np.exp(1j * phases) / math.sqrt(n_antennas)


def default_probe_count(sparsity, n_atoms, n_rx_rf):
    """Probing symbols for the sparse estimator: 4*ceil(L*ln(atoms)/chains)."""
    if sparsity == 0:
        return 0
    return 4 * math.ceil(sparsity * math.log(n_atoms) / n_rx_rf)


def _matching_pursuit(dictionary, observed, sparsity):
    """Greedy atom selection with a least-squares refit after every pick.

    Correlations are normalized by atom norm; ties go to the smaller index.
    Runs exactly `sparsity` iterations and returns the selected indices, the
    final coefficients, and the residual norm after each iteration.
    """
    norms = np.linalg.norm(dictionary, axis=0)
    residual = observed.copy()
    selected = []
    coefficients = np.zeros(0, dtype=np.complex128)
    residual_norms = [float(np.linalg.norm(observed))]
    for _ in range(sparsity):
        correlation = np.abs(dictionary.conj().T @ residual)
        scores = np.divide(
            correlation, norms, out=np.zeros_like(correlation), where=norms > 0.0
        )
        scores[selected] = -1.0
        selected.append(int(np.argmax(scores)))
        coefficients, *_ = np.linalg.lstsq(
            dictionary[:, selected], observed, rcond=None
        )
        residual = observed - dictionary[:, selected] @ coefficients
        residual_norms.append(float(np.linalg.norm(residual)))
    return selected, coefficients, residual_norms


def omp_grid_estimate(channel, grid, tx_geom, rx_geom, sparsity, measurements,
                      dims, snr, rng, noise_rng=None):
    """Sparse channel estimate on the joint angle dictionary.

    Every probing symbol uses a fresh random constant-modulus transmit beam
    and combiner group; each output block is whitened so the combined noise
    stays white. Orthogonal matching pursuit then picks at most `sparsity`
    outer-product atoms from the grid and reconstructs the channel over them.
    Pass measurements=None for the default probe count. The estimate consumes
    ceil(measurements/n_streams) pilot frames of n_streams symbols each.
    """
    h = _check_channel(channel, dims)
    _check_snr(snr)
    if tx_geom.size != dims.n_tx or rx_geom.size != dims.n_rx:
        raise ValueError(
            f"array geometries {tx_geom.size}x{rx_geom.size} antennas do not "
            f"match dims ({dims.n_tx}, {dims.n_rx})"
        )
    if sparsity < 0:
        raise ValueError(f"sparsity must be >= 0, got {sparsity}")
    rx_pairs = grid.rx_pairs()
    tx_pairs = grid.tx_pairs()
    n_atoms = len(rx_pairs) * len(tx_pairs)
    if measurements is None:
        measurements = default_probe_count(sparsity, n_atoms, dims.n_rx_rf)
    if measurements < sparsity:
        raise ValueError(
            f"need at least {sparsity} probing symbols, got {measurements}"
        )
    group = dims.n_streams
    n_training = group * -(-measurements // group)
    if sparsity == 0:
        return BaselineResult(
            method="omp",
            training_symbols=n_training,
            channel=np.zeros((dims.n_rx, dims.n_tx), dtype=np.complex128),
        )
    needed = measurements * dims.n_rx_rf * n_atoms * 16
    if needed > _DICTIONARY_BUDGET_BYTES:
        raise MemoryError(
            f"angle dictionary would need {needed} bytes; use a smaller angle "
            f"grid or fewer probing symbols"
        )
    response_rx = response_matrix(rx_geom, rx_pairs)
    response_tx = response_matrix(tx_geom, tx_pairs)
    root_power = math.sqrt(snr)
    blocks = []
    outputs = []
    for _ in range(measurements):
        probe = _random_beams(rng, dims.n_tx, 1)[:, 0]
        combiners = _random_beams(rng, dims.n_rx, dims.n_rx_rf)
        white = hermitian_inv_sqrt(combiners.conj().T @ combiners)
        received = root_power * (h @ probe)
        if noise_rng is not None:
            received = received + (
                noise_rng.standard_normal(dims.n_rx)
                + 1j * noise_rng.standard_normal(dims.n_rx)
            ) / math.sqrt(2.0)
        outputs.append(white @ (combiners.conj().T @ received))
        tx_side = response_tx.conj().T @ probe
        rx_side = white @ (combiners.conj().T @ response_rx)
        # atom (i, j) lives at column i*len(tx_pairs) + j
        blocks.append(np.kron(rx_side, tx_side[None, :]))
    dictionary = np.vstack(blocks)
    observed = np.concatenate(outputs)
    selected, coefficients, _ = _matching_pursuit(dictionary, observed, sparsity)
    gains = coefficients / root_power
    rx_sel = [a // len(tx_pairs) for a in selected]
    tx_sel = [a % len(tx_pairs) for a in selected]
    estimate = (response_rx[:, rx_sel] * gains) @ response_tx[:, tx_sel].conj().T
    # indices name the picked grid atoms, aligned per path (not beams)
    return BaselineResult(
        method="omp",
        training_symbols=n_training,
        channel=estimate,
        tx_indices=tuple(tx_sel),
        rx_indices=tuple(rx_sel),
    )


def location_based_beams(bs, ue_reported, tx_codebook, rx_codebook, dims):
    """Beam alignment from endpoint positions alone.

    Assumes a direct ray between the reported positions, ignoring the actual
    propagation environment, and keeps the codebook beams best aligned with
    that ray on each side. The symbol count covers the single pilot epoch
    needed to measure the effective channel over the selected beams.
    """
    bs = np.asarray(bs, dtype=np.float64)
    ue = np.asarray(ue_reported, dtype=np.float64)
    for name, point in (("bs", bs), ("ue_reported", ue)):
        if point.shape != (3,) or not np.all(np.isfinite(point)):
            raise ValueError(f"{name} must be a finite 3-D point")
    if float(np.linalg.norm(ue - bs)) <= 1e-9:
        raise ValueError("endpoint positions coincide; no direction to aim at")
    if tx_codebook.geometry.size != dims.n_tx:
        raise ValueError(
            f"transmit codebook covers {tx_codebook.geometry.size} antennas, "
            f"dims expect {dims.n_tx}"
        )
    if rx_codebook.geometry.size != dims.n_rx:
        raise ValueError(
            f"receive codebook covers {rx_codebook.geometry.size} antennas, "
            f"dims expect {dims.n_rx}"
        )
    if tx_codebook.n_beams < dims.n_tx_rf or rx_codebook.n_beams < dims.n_rx_rf:
        raise ValueError("codebooks have fewer beams than RF chains to fill")
    aod = direction_to_angles(ue - bs)
    aoa = direction_to_angles(bs - ue)
    tx_target = steering_vector(tx_codebook.geometry, aod)
    rx_target = steering_vector(rx_codebook.geometry, aoa)
    tx_scores = np.abs(tx_codebook.beams.conj().T @ tx_target)
    rx_scores = np.abs(rx_codebook.beams.conj().T @ rx_target)
    tx_sel = _top_indices(tx_scores, dims.n_tx_rf)
    rx_sel = _top_indices(rx_scores, dims.n_rx_rf)
    n_training = dims.n_rx_rf * -(-dims.n_tx_rf // dims.n_rx_rf)
    return BaselineResult(
        method="location",
        training_symbols=n_training,
        tx_rf=tx_codebook.subset(tx_sel),
        rx_rf=rx_codebook.subset(rx_sel),
        tx_indices=tx_sel,
        rx_indices=rx_sel,
    )
