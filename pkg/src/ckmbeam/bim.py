"""Beam sweeping over candidate beam lists and beamforming from the results.

The sweep drives small groups of candidate transmit and receive beams through
the RF chains, one group pair per epoch, and assembles every beam-pair
response into a single measurement matrix. Selection then keeps the strongest
square of that matrix (greedy, with an exhaustive reference), and the digital
stages are built from the measured entries alone, never from the true
channel.
"""

import dataclasses
import itertools
import math

import numpy as np

from .cam import _unitary_pilots
from .hybrid import HybridBeamformer, SearchBudgetError, _baseband_stages
from .linalg import hermitian_inv_sqrt


@dataclasses.dataclass(frozen=True)
class SweepMeasurement:
    """Per-beam-pair sweep responses, rows = receive beams, cols = transmit.

    ``rho`` is the common transmit normalization folded into every entry and
    ``training_symbols`` counts the pilot symbols the sweep consumed.
    """

    observations: np.ndarray
    rho: float
    training_symbols: int

    def __post_init__(self):
        obs = np.asarray(self.observations, dtype=np.complex128)
        if obs.ndim != 2 or obs.shape[0] == 0 or obs.shape[1] == 0:
            raise ValueError(f"observations must be a nonempty matrix, got {obs.shape}")
        if not (self.rho > 0.0 and math.isfinite(self.rho)):
            raise ValueError(f"rho must be positive and finite, got {self.rho}")
        if int(self.training_symbols) != self.training_symbols or self.training_symbols < 1:
            raise ValueError(
                f"training_symbols must be a positive count, got {self.training_symbols}"
            )
        object.__setattr__(self, "observations", obs)
        object.__setattr__(self, "training_symbols", int(self.training_symbols))

    @property
    def n_rx_beams(self):
        return self.observations.shape[0]

    @property
    def n_tx_beams(self):
        return self.observations.shape[1]


def _as_beam_matrix(beams, n_antennas, name):
    mat = np.asarray(beams, dtype=np.complex128)
    if mat.ndim != 2 or mat.shape[0] != n_antennas:
        raise ValueError(f"{name} must be ({n_antennas}, n) beam columns, got {mat.shape}")
    if mat.shape[1] == 0:
        raise ValueError(f"{name} needs at least one beam")
    expected = 1.0 / math.sqrt(n_antennas)
    dev = float(np.max(np.abs(np.abs(mat) - expected)))
    if dev > 1e-12:
        raise ValueError(
            f"{name} entries must have modulus 1/sqrt({n_antennas}) "
            f"(worst deviation {dev:.3e})"
        )
    return mat


def sweep(channel, tx_beams, rx_beams, dims, snr, rng=None):
    """Measure every candidate beam pair, group by group.

    Candidate beams are partitioned into groups of the stream count; each
    group pair costs one epoch of that many pilot symbols. The last, possibly
    short group is zero-padded and its padded measurement slots discarded; its
    per-epoch transmit normalization is rescaled to the common value so every
    assembled entry reads sqrt(snr)*rho*w^H H f plus noise. With ``rng`` None
    the noise term is skipped.
    """
    h = np.asarray(channel, dtype=np.complex128)
    if h.shape != (dims.n_rx, dims.n_tx):
        raise ValueError(f"channel must be {(dims.n_rx, dims.n_tx)}, got {h.shape}")
    f = _as_beam_matrix(tx_beams, dims.n_tx, "tx_beams")
    w = _as_beam_matrix(rx_beams, dims.n_rx, "rx_beams")
    if f.shape[1] < dims.n_tx_rf:
        raise ValueError(
            f"need at least {dims.n_tx_rf} transmit beams, got {f.shape[1]}"
        )
    if w.shape[1] < dims.n_rx_rf:
        raise ValueError(
            f"need at least {dims.n_rx_rf} receive beams, got {w.shape[1]}"
        )
    if not (snr > 0.0 and math.isfinite(snr)):
        raise ValueError(f"snr must be positive and finite, got {snr}")

    group = dims.n_streams
    n_tx_groups = -(-f.shape[1] // group)
    n_rx_groups = -(-w.shape[1] // group)
    rho = 1.0 / math.sqrt(group)
    pilots = _unitary_pilots(group)
    root_power = math.sqrt(snr)
    out = np.zeros((w.shape[1], f.shape[1]), dtype=np.complex128)
    for i in range(n_tx_groups):
        cols = slice(i * group, min((i + 1) * group, f.shape[1]))
        group_f = f[:, cols]
        rho_i = 1.0 / math.sqrt(group_f.shape[1])
        for j in range(n_rx_groups):
            rows = slice(j * group, min((j + 1) * group, w.shape[1]))
            group_w = w[:, rows]
            block = root_power * rho_i * (group_w.conj().T @ h @ group_f)
            if rng is not None:
                noise = (
                    rng.standard_normal((dims.n_rx, group))
                    + 1j * rng.standard_normal((dims.n_rx, group))
                ) / math.sqrt(2.0)
                combined = group_w.conj().T @ noise @ pilots.conj().T
                block = block + combined[:, : group_f.shape[1]]
            out[rows, cols] = (rho / rho_i) * block
    return SweepMeasurement(
        observations=out,
        rho=rho,
        training_symbols=group * n_tx_groups * n_rx_groups,
    )


def _as_measurement_matrix(matrix, n_cols, n_rows):
    m = np.asarray(matrix, dtype=np.complex128)
    if m.ndim != 2:
        raise ValueError(f"measurement matrix must be 2-d, got shape {m.shape}")
    if int(n_cols) != n_cols or n_cols < 1 or int(n_rows) != n_rows or n_rows < 1:
        raise ValueError(f"submatrix sizes must be positive counts, got {n_rows}x{n_cols}")
    if m.shape[0] < n_rows or m.shape[1] < n_cols:
        raise ValueError(
            f"cannot take a {n_rows}x{n_cols} submatrix of a {m.shape[0]}x{m.shape[1]} matrix"
        )
    return m


def _top_indices(values, count):
    """Indices of the largest values, ties to the smaller index, sorted."""
    order = sorted(range(len(values)), key=lambda i: (-values[i], i))
    return tuple(sorted(order[:count]))


def select_submatrix_greedy(matrix, n_cols, n_rows):
    """Strongest beam-pair submatrix by norms: columns first, then rows.

    Keeps the n_cols columns with the largest Euclidean norms, then the n_rows
    rows with the largest norms restricted to those columns. Ties go to the
    smaller index; index tuples come back sorted ascending. The result never
    beats the exhaustive optimum but is linear-time in the matrix size.
    """
    m = _as_measurement_matrix(matrix, n_cols, n_rows)
    power = np.abs(m) ** 2
    cols = _top_indices(power.sum(axis=0), n_cols)
    rows = _top_indices(power[:, cols].sum(axis=1), n_rows)
    return rows, cols, m[np.ix_(rows, cols)]


def select_submatrix_exhaustive(matrix, n_cols, n_rows, budget=1_000_000):
    """Exact maximum-power submatrix by scanning every row/column subset.

    Row subsets are enumerated in the outer loop, both sides lexicographic,
    and only a strictly larger power replaces the incumbent, so ties resolve
    to the lexicographically smallest (rows, cols) pair. Subset pairs beyond
    ``budget`` raise SearchBudgetError.
    """
    m = _as_measurement_matrix(matrix, n_cols, n_rows)
    combos = math.comb(m.shape[0], n_rows) * math.comb(m.shape[1], n_cols)
    if combos > budget:
        raise SearchBudgetError(
            f"{combos} submatrix candidates exceed the search budget of {budget}"
        )
    power = np.abs(m) ** 2
    best_val = -1.0
    best = None
    for rows in itertools.combinations(range(m.shape[0]), n_rows):
        row_sum = power[list(rows), :].sum(axis=0)
        for cols in itertools.combinations(range(m.shape[1]), n_cols):
            val = float(sum(row_sum[c] for c in cols))
            if val > best_val:
                best_val = val
                best = (rows, cols)
    rows, cols = best
    return rows, cols, m[np.ix_(rows, cols)]


def beamformers_from_sweep(measurement, selection, tx_beams, rx_beams, snr):
    """Hybrid beamformer built from sweep measurements alone.

    ``selection`` is (row indices, col indices) as produced by the submatrix
    pickers. The selected measurement square is unscaled into an equivalent
    whitened channel, and the digital stages come from its SVD plus
    water-filling, exactly as when the channel is known. Returns the
    beamformer and its predicted rate.
    """
    rows, cols = tuple(selection[0]), tuple(selection[1])
    if len(rows) == 0 or len(cols) < len(rows):
        raise ValueError(
            f"need at least as many transmit as receive beams, got {len(cols)} and {len(rows)}"
        )
    obs = measurement.observations
    if len(set(rows)) != len(rows) or len(set(cols)) != len(cols):
        raise ValueError("selected beam indices must be distinct")
    if not all(0 <= r < obs.shape[0] for r in rows):
        raise ValueError(f"row indices {rows} outside the measured {obs.shape[0]} beams")
    if not all(0 <= c < obs.shape[1] for c in cols):
        raise ValueError(f"col indices {cols} outside the measured {obs.shape[1]} beams")
    if not (snr > 0.0 and math.isfinite(snr)):
        raise ValueError(f"snr must be positive and finite, got {snr}")
    f = np.asarray(tx_beams, dtype=np.complex128)
    w = np.asarray(rx_beams, dtype=np.complex128)
    f_rf = f[:, list(cols)]
    w_rf = w[:, list(rows)]
    tx_white = hermitian_inv_sqrt(f_rf.conj().T @ f_rf)
    rx_white = hermitian_inv_sqrt(w_rf.conj().T @ w_rf)
    core = (rx_white @ obs[np.ix_(rows, cols)] @ tx_white) / (
        measurement.rho * math.sqrt(snr)
    )
    tx_bb, rx_bb, achieved = _baseband_stages(core, tx_white, rx_white, len(rows), snr)
    bf = HybridBeamformer(
        tx_rf=f_rf, tx_bb=tx_bb, rx_rf=w_rf, rx_bb=rx_bb,
        tx_indices=cols, rx_indices=rows,
    )
    return bf, achieved


def rank_beams(matrix):
    """Transmit and receive beam rankings by measured energy.

    Transmit beams are ordered by descending column norm, receive beams by
    descending row norm, ties to the smaller index.
    """
    m = np.asarray(matrix, dtype=np.complex128)
    if m.ndim != 2:
        raise ValueError(f"measurement matrix must be 2-d, got shape {m.shape}")
    power = np.abs(m) ** 2
    col_norms = power.sum(axis=0)
    row_norms = power.sum(axis=1)
    tx_order = tuple(sorted(range(m.shape[1]), key=lambda i: (-col_norms[i], i)))
    rx_order = tuple(sorted(range(m.shape[0]), key=lambda i: (-row_norms[i], i)))
    return tx_order, rx_order
