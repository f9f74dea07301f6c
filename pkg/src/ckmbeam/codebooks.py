"""DFT-based analog beam codebooks for planar arrays."""

import itertools
import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Codebook:
    """Bank of constant-modulus analog beams, one column per beam."""

    geometry: object
    beams: np.ndarray
    oversampling: int = 1

    def __post_init__(self):
        beams = np.asarray(self.beams, dtype=np.complex128)
        if beams.ndim != 2 or beams.shape[0] != self.geometry.size:
            raise ValueError(
                f"beams must be ({self.geometry.size}, n) for this geometry, "
                f"got {beams.shape}"
            )
        if beams.shape[1] == 0:
            raise ValueError("codebook must contain at least one beam")
        expected = 1.0 / math.sqrt(self.geometry.size)
        if np.max(np.abs(np.abs(beams) - expected)) > 1e-12:
            raise ValueError(
                f"every beam entry must have modulus 1/sqrt({self.geometry.size})"
            )
        object.__setattr__(self, "beams", beams)

    @property
    def n_beams(self):
        return self.beams.shape[1]

    def beam(self, index):
        return self.beams[:, index]

    def subset(self, indices):
        """Matrix of the selected beam columns, in the given order."""
        idx = np.asarray(list(indices), dtype=np.intp)
        return self.beams[:, idx]

    @property
    def fingerprint(self):
        g = self.geometry
        return f"upa{g.n_z}x{g.n_y}sp{g.spacing:.12g}os{self.oversampling}"


def kronecker_dft_codebook(geom, oversampling=1):
    """Kronecker product of per-axis oversampled DFT factors.

    Axis factor entries are exp(2j*pi*m*k/(os*n))/sqrt(n); the beam for index
    pair (k_z, k_y) sits at column k_z*(os*n_y) + k_y. With oversampling 1 the
    codebook is the unitary DFT on each axis.
    """
    if int(oversampling) != oversampling or oversampling < 1:
        raise ValueError(f"oversampling must be a positive integer, got {oversampling}")
    oversampling = int(oversampling)
    fz = _dft_factor(geom.n_z, oversampling)
    fy = _dft_factor(geom.n_y, oversampling)
    return Codebook(geometry=geom, beams=np.kron(fz, fy), oversampling=oversampling)


def _dft_factor(n, oversampling):
    m = np.arange(n)[:, None]
    k = np.arange(oversampling * n)[None, :]
    return np.exp(2j * np.pi * m * k / (oversampling * n)) / math.sqrt(n)


def enumerate_selections(n_beams, subset_size):
    """All subsets of beam indices of the given size, lexicographic order."""
    if subset_size < 1 or subset_size > n_beams:
        raise ValueError(
            f"subset size {subset_size} outside [1, {n_beams}] for this codebook"
        )
    return itertools.combinations(range(n_beams), subset_size)
