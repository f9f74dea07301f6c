"""Geometric multipath channels, the synthetic scene generator, and path I/O.

Channels follow the narrowband geometric model: a channel matrix is
sqrt(M_rx*M_tx) times the gain-weighted sum of receive/transmit steering
outer products. The scene generator replaces external ray tracing with a
line-of-sight ray plus one image-method specular bounce per reflector.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from .arrays import TWO_PI, AnglePair, direction_to_angles, response_matrix

_GEOM_EPS = 1e-9


@dataclass(frozen=True)
class PropagationPath:
    gain: complex
    aoa: AnglePair
    aod: AnglePair


@dataclass(frozen=True)
class PathSet:
    """All propagation paths between the base station and one user location."""

    location: tuple
    paths: tuple

    def __post_init__(self):
        loc = tuple(float(c) for c in self.location)
        if len(loc) != 3 or not all(math.isfinite(c) for c in loc):
            raise ValueError(f"location must be a finite 3-D point, got {self.location}")
        object.__setattr__(self, "location", loc)
        object.__setattr__(self, "paths", tuple(self.paths))

    @property
    def location_array(self):
        return np.asarray(self.location, dtype=np.float64)


def synthesize_channel(path_set, tx_geom, rx_geom):
    """Channel matrix (M_rx x M_tx) for the given paths; zero when none exist."""
    paths = path_set.paths
    if not paths:
        return np.zeros((rx_geom.size, tx_geom.size), dtype=np.complex128)
    a_rx = response_matrix(rx_geom, [p.aoa for p in paths])
    a_tx = response_matrix(tx_geom, [p.aod for p in paths])
    gains = np.array([p.gain for p in paths], dtype=np.complex128)
    gains = gains * math.sqrt(rx_geom.size * tx_geom.size)
    return (a_rx * gains) @ a_tx.conj().T


def nearest_grid_angles(grid, path_set):
    """Snap every path's arrival angle to the receive grid and departure angle
    to the transmit grid (azimuth distance wraps around the circle)."""
    snapped = tuple(
        PropagationPath(
            gain=p.gain,
            aoa=grid.snap_rx(p.aoa),
            aod=grid.snap_tx(p.aod),
        )
        for p in path_set.paths
    )
    return PathSet(location=path_set.location, paths=snapped)


# ---------------------------------------------------------------------------
# synthetic scene
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Rectangle:
    """Finite planar reflector: corner point plus two edge vectors.

    The face normal is cross(edge_u, edge_v); reflections happen only for
    endpoints on the normal side, blockage is two-sided.
    """

    corner: tuple
    edge_u: tuple
    edge_v: tuple
    loss_db: float = 0.0

    def __post_init__(self):
        for name in ("corner", "edge_u", "edge_v"):
            vec = tuple(float(c) for c in getattr(self, name))
            if len(vec) != 3 or not all(math.isfinite(c) for c in vec):
                raise ValueError(f"{name} must be a finite 3-D vector")
            object.__setattr__(self, name, vec)
        if self.loss_db < 0.0:
            raise ValueError(f"reflection loss must be >= 0 dB, got {self.loss_db}")
        if np.linalg.norm(np.cross(self.edge_u, self.edge_v)) <= _GEOM_EPS:
            raise ValueError("edge vectors are parallel; reflector has no area")

    @property
    def normal(self):
        n = np.cross(np.asarray(self.edge_u), np.asarray(self.edge_v))
        return n / np.linalg.norm(n)


@dataclass(frozen=True)
class Box:
    """Axis-aligned region; degenerate axes (lo == hi) are allowed."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(c) for c in self.lo)
        hi = tuple(float(c) for c in self.hi)
        if len(lo) != 3 or len(hi) != 3:
            raise ValueError("box corners must be 3-D points")
        if any(l > h for l, h in zip(lo, hi)):
            raise ValueError(f"box is empty: lo={lo} hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def contains(self, point):
        p = np.asarray(point, dtype=np.float64)
        return bool(
            np.all(p >= np.asarray(self.lo) - _GEOM_EPS)
            and np.all(p <= np.asarray(self.hi) + _GEOM_EPS)
        )

    def sample(self, rng):
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return lo + (hi - lo) * rng.random(3)


@dataclass(frozen=True)
class Scene:
    bs_position: tuple
    wavelength: float
    ue_region: Box
    reflectors: tuple = ()

    def __post_init__(self):
        pos = tuple(float(c) for c in self.bs_position)
        if len(pos) != 3 or not all(math.isfinite(c) for c in pos):
            raise ValueError("bs_position must be a finite 3-D point")
        object.__setattr__(self, "bs_position", pos)
        object.__setattr__(self, "reflectors", tuple(self.reflectors))
        if not (self.wavelength > 0.0 and math.isfinite(self.wavelength)):
            raise ValueError(f"wavelength must be positive, got {self.wavelength}")


def _rect_segment_hit(rect, start, end):
    """Intersection point of the open segment with the reflector, or None."""
    normal = rect.normal
    start = np.asarray(start, dtype=np.float64)
    end = np.asarray(end, dtype=np.float64)
    denom = float(normal @ (end - start))
    if abs(denom) <= _GEOM_EPS * max(1.0, float(np.linalg.norm(end - start))):
        return None
    t = float(normal @ (np.asarray(rect.corner) - start)) / denom
    if t <= _GEOM_EPS or t >= 1.0 - _GEOM_EPS:
        return None
    point = start + t * (end - start)
    w = point - np.asarray(rect.corner)
    u = np.asarray(rect.edge_u)
    v = np.asarray(rect.edge_v)
    # Solve w = s*u + r*v in the plane (edges need not be orthogonal).
    uu, vv, uv = float(u @ u), float(v @ v), float(u @ v)
    det = uu * vv - uv * uv
    wu, wv = float(w @ u), float(w @ v)
    s = (wu * vv - wv * uv) / det
    r = (wv * uu - wu * uv) / det
    tol = 1e-12
    if -tol <= s <= 1.0 + tol and -tol <= r <= 1.0 + tol:
        return point
    return None


def generate_scene_paths(scene, ue_position):
    """Line-of-sight ray (when unblocked) plus one specular bounce per reflector.

    Deterministic and side-effect free. Path gains carry free-space magnitude
    wavelength/(4*pi*d) scaled by the reflector loss and phase exp(-j*2*pi*d/λ).
    """
    ue = np.asarray(ue_position, dtype=np.float64)
    if ue.shape != (3,) or not np.all(np.isfinite(ue)):
        raise ValueError("ue_position must be a finite 3-D point")
    if not scene.ue_region.contains(ue):
        raise ValueError(f"ue_position {tuple(ue)} is outside the scene's user region")
    bs = np.asarray(scene.bs_position, dtype=np.float64)
    lam = scene.wavelength
    paths = []

    d_los = float(np.linalg.norm(ue - bs))
    if d_los <= _GEOM_EPS:
        raise ValueError("user location coincides with the base station")
    blocked = any(_rect_segment_hit(r, bs, ue) is not None for r in scene.reflectors)
    if not blocked:
        paths.append(
            PropagationPath(
                gain=_gain(lam, d_los, 0.0),
                aoa=direction_to_angles(bs - ue),
                aod=direction_to_angles(ue - bs),
            )
        )

    for rect in scene.reflectors:
        normal = rect.normal
        corner = np.asarray(rect.corner)
        side_bs = float(normal @ (bs - corner))
        side_ue = float(normal @ (ue - corner))
        if side_bs <= _GEOM_EPS or side_ue <= _GEOM_EPS:
            continue  # reflection only off the front face
        image = bs - 2.0 * side_bs * normal
        bounce = _rect_segment_hit(rect, image, ue)
        if bounce is None:
            continue
        length = float(np.linalg.norm(bs - bounce) + np.linalg.norm(bounce - ue))
        paths.append(
            PropagationPath(
                gain=_gain(lam, length, rect.loss_db),
                aoa=direction_to_angles(bounce - ue),
                aod=direction_to_angles(bounce - bs),
            )
        )
    return PathSet(location=tuple(ue), paths=tuple(paths))


def _gain(wavelength, length, loss_db):
    mag = (wavelength / (4.0 * math.pi * length)) * 10.0 ** (-loss_db / 20.0)
    ph = -2.0 * math.pi * length / wavelength
    return complex(mag * math.cos(ph), mag * math.sin(ph))


# ---------------------------------------------------------------------------
# path CSV interchange
# ---------------------------------------------------------------------------

PATH_CSV_HEADER = (
    "location_id,x_m,y_m,z_m,gain_re,gain_im,"
    "aoa_zenith_rad,aoa_azimuth_rad,aod_zenith_rad,aod_azimuth_rad"
)


def _fmt(x):
    return format(float(x), ".17g")


def export_paths_csv(path_sets, stream):
    """Write path sets as CSV, one row per path, 17 significant digits."""
    if isinstance(stream, (str, bytes)):
        with open(stream, "w", encoding="utf-8", newline="") as fh:
            return export_paths_csv(path_sets, fh)
    stream.write(PATH_CSV_HEADER + "\n")
    for loc_id, ps in enumerate(path_sets):
        x, y, z = ps.location
        for p in ps.paths:
            row = (
                str(loc_id),
                _fmt(x),
                _fmt(y),
                _fmt(z),
                _fmt(p.gain.real),
                _fmt(p.gain.imag),
                _fmt(p.aoa.zenith),
                _fmt(p.aoa.azimuth),
                _fmt(p.aod.zenith),
                _fmt(p.aod.azimuth),
            )
            stream.write(",".join(row) + "\n")


class PathCsvError(ValueError):
    """Malformed path CSV input; message carries the offending line number."""


def import_paths_csv(stream):
    """Parse a path CSV into PathSets grouped by location id.

    Groups follow first appearance order. Rows with the wrong column count,
    non-numeric fields, out-of-range angles, or inconsistent locations for one
    id are rejected with their line number.
    """
    if isinstance(stream, (str, bytes)):
        with open(stream, "r", encoding="utf-8", newline="") as fh:
            return import_paths_csv(fh)
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise PathCsvError("line 1: empty file, expected header") from None
    if [h.strip() for h in header] != PATH_CSV_HEADER.split(","):
        raise PathCsvError(f"line 1: unexpected header {','.join(header)!r}")
    locations = {}
    groups = {}
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 10:
            raise PathCsvError(f"line {line_no}: expected 10 fields, got {len(row)}")
        loc_id = row[0].strip()
        try:
            values = [float(f) for f in row[1:]]
        except ValueError as exc:
            raise PathCsvError(f"line {line_no}: non-numeric field ({exc})") from None
        if not all(math.isfinite(v) for v in values):
            raise PathCsvError(f"line {line_no}: non-finite field")
        x, y, z, g_re, g_im, aoa_zen, aoa_az, aod_zen, aod_az = values
        for label, zen, az in (("aoa", aoa_zen, aoa_az), ("aod", aod_zen, aod_az)):
            if not (0.0 <= zen <= math.pi):
                raise PathCsvError(
                    f"line {line_no}: {label} zenith {zen!r} outside [0, pi]"
                )
            if not (0.0 <= az < TWO_PI):
                raise PathCsvError(
                    f"line {line_no}: {label} azimuth {az!r} outside [0, 2*pi)"
                )
        loc = (x, y, z)
        if loc_id in locations:
            if locations[loc_id] != loc:
                raise PathCsvError(
                    f"line {line_no}: location id {loc_id!r} maps to {loc}, "
                    f"previously {locations[loc_id]}"
                )
        else:
            locations[loc_id] = loc
            groups[loc_id] = []
        groups[loc_id].append(
            PropagationPath(
                gain=complex(g_re, g_im),
                aoa=AnglePair(zenith=aoa_zen, azimuth=aoa_az),
                aod=AnglePair(zenith=aod_zen, azimuth=aod_az),
            )
        )
    return [
        PathSet(location=locations[k], paths=tuple(groups[k])) for k in groups
    ]
