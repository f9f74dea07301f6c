"""Planar array geometry, propagation angles, and discrete angle grids."""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class UpaGeometry:
    """Uniform planar array in the z-y plane, spacing in wavelengths."""

    n_z: int
    n_y: int
    spacing: float = 0.5

    def __post_init__(self):
        if self.n_z < 1 or self.n_y < 1:
            raise ValueError(f"array dimensions must be >= 1, got {self.n_z}x{self.n_y}")
        if not (self.spacing > 0.0 and math.isfinite(self.spacing)):
            raise ValueError(f"element spacing must be positive, got {self.spacing}")

    @property
    def size(self):
        return self.n_z * self.n_y


@dataclass(frozen=True)
class AnglePair:
    """Propagation direction: zenith in [0, pi], azimuth in [0, 2*pi)."""

    zenith: float
    azimuth: float

    def __post_init__(self):
        if not (0.0 <= self.zenith <= math.pi):
            raise ValueError(f"zenith {self.zenith} outside [0, pi]")
        if not (0.0 <= self.azimuth < TWO_PI):
            raise ValueError(f"azimuth {self.azimuth} outside [0, 2*pi)")


def direction_to_angles(vec):
    """Angles of a 3-D direction vector (need not be normalized)."""
    v = np.asarray(vec, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm <= 0.0 or not math.isfinite(norm):
        raise ValueError("direction vector must be nonzero and finite")
    zenith = math.acos(min(1.0, max(-1.0, v[2] / norm)))
    azimuth = math.atan2(v[1], v[0]) % TWO_PI
    if azimuth >= TWO_PI:  # guard the wrap at full circle from rounding
        azimuth = 0.0
    return AnglePair(zenith=zenith, azimuth=azimuth)


def steering_vector(geom, angle):
    """Array response of one direction; entries have modulus 1/sqrt(size).

    Element (m, n) of the n_z-by-n_y grid sits at flat index m*n_y + n and
    carries phase 2*pi*spacing*(m*cos(zenith) + n*sin(zenith)*sin(azimuth)).
    """
    out = _kernels.upa_response(
        geom.n_z, geom.n_y, geom.spacing,
        np.array([angle.zenith]), np.array([angle.azimuth]),
    )
    return out[:, 0]


def response_matrix(geom, angles):
    """Stack steering vectors for a sequence of angle pairs, one per column."""
    angles = list(angles)
    if not angles:
        return np.zeros((geom.size, 0), dtype=np.complex128)
    zen = np.array([a.zenith for a in angles])
    az = np.array([a.azimuth for a in angles])
    return _kernels.upa_response(geom.n_z, geom.n_y, geom.spacing, zen, az)


@dataclass(frozen=True)
class AngleGrid:
    """Discrete angle tuples used by map entries and dictionary atoms.

    Zenith points are uniform midpoints (i + 0.5)*pi/count over [0, pi];
    azimuth points are 2*pi*j/count over the full circle.
    """

    rx_zenith_count: int
    rx_azimuth_count: int
    tx_zenith_count: int
    tx_azimuth_count: int

    def __post_init__(self):
        for name in (
            "rx_zenith_count",
            "rx_azimuth_count",
            "tx_zenith_count",
            "tx_azimuth_count",
        ):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @staticmethod
    def for_arrays(tx_geom, rx_geom, refine=1):
        """Counts match the array axes times ``refine``.

        refine > 1 makes cells finer than the array beamwidth, which keeps
        the quantization error of stored tuples below the beam pitch.
        """
        if refine < 1:
            raise ValueError(f"refine must be >= 1, got {refine}")
        return AngleGrid(
            rx_zenith_count=refine * rx_geom.n_z,
            rx_azimuth_count=refine * rx_geom.n_y,
            tx_zenith_count=refine * tx_geom.n_z,
            tx_azimuth_count=refine * tx_geom.n_y,
        )

    def validate_for(self, tx_geom, rx_geom):
        if self.rx_zenith_count * self.rx_azimuth_count < rx_geom.size:
            raise ValueError(
                "receive grid has fewer tuples than receive antennas: "
                f"{self.rx_zenith_count}*{self.rx_azimuth_count} < {rx_geom.size}"
            )
        if self.tx_zenith_count * self.tx_azimuth_count < tx_geom.size:
            raise ValueError(
                "transmit grid has fewer tuples than transmit antennas: "
                f"{self.tx_zenith_count}*{self.tx_azimuth_count} < {tx_geom.size}"
            )

    def rx_zeniths(self):
        return _zenith_points(self.rx_zenith_count)

    def rx_azimuths(self):
        return _azimuth_points(self.rx_azimuth_count)

    def tx_zeniths(self):
        return _zenith_points(self.tx_zenith_count)

    def tx_azimuths(self):
        return _azimuth_points(self.tx_azimuth_count)

    def snap_rx(self, angle):
        return _snap(angle, self.rx_zeniths(), self.rx_azimuths())

    def snap_tx(self, angle):
        return _snap(angle, self.tx_zeniths(), self.tx_azimuths())

    def rx_pairs(self):
        return _all_pairs(self.rx_zeniths(), self.rx_azimuths())

    def tx_pairs(self):
        return _all_pairs(self.tx_zeniths(), self.tx_azimuths())


def _zenith_points(count):
    return (np.arange(count) + 0.5) * (math.pi / count)


def _azimuth_points(count):
    return np.arange(count) * (TWO_PI / count)


def _snap(angle, zeniths, azimuths):
    zi = int(np.argmin(np.abs(zeniths - angle.zenith)))
    raw = np.abs(azimuths - angle.azimuth)
    ai = int(np.argmin(np.minimum(raw, TWO_PI - raw)))
    return AnglePair(zenith=float(zeniths[zi]), azimuth=float(azimuths[ai]))


def _all_pairs(zeniths, azimuths):
    return tuple(
        AnglePair(zenith=float(z), azimuth=float(a)) for z in zeniths for a in azimuths
    )
