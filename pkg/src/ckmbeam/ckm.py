"""Channel knowledge map store.

Two map kinds share one database: channel angle maps (CAM) hold per-location
candidate angle tuples with power weights, beam index maps (BIM) hold ranked
codebook indices. Queries pool the K nearest samples with inverse-distance
weighting. Angle tuples are categorical, so pooling merges identical tuples
instead of averaging angles, and beam lists pool through rank-discounted
votes. Databases persist as line-oriented UTF-8 text.
"""

import math
from dataclasses import dataclass

import numpy as np

from .arrays import AngleGrid, AnglePair
from .channels import nearest_grid_angles

_BRUTE_LIMIT = 10_000
_FMT = "%.17g"


class CkmFormatError(ValueError):
    """Persistence stream violates the CKMDB grammar or its declared counts."""


def _as_location(value):
    arr = np.asarray(value, dtype=np.float64).reshape(-1)
    if arr.shape != (3,) or not np.all(np.isfinite(arr)):
        raise ValueError(f"location must be 3 finite coordinates, got {value!r}")
    return (float(arr[0]), float(arr[1]), float(arr[2]))


@dataclass(frozen=True)
class CamCandidate:
    """One stored propagation direction pair with its pooled power weight."""

    aod: AnglePair
    aoa: AnglePair
    weight: float

    def __post_init__(self):
        if not (self.weight >= 0.0 and math.isfinite(self.weight)):
            raise ValueError(f"weight must be finite and nonnegative, got {self.weight}")

    @property
    def angle_key(self):
        return (self.aod.zenith, self.aod.azimuth, self.aoa.zenith, self.aoa.azimuth)


@dataclass(frozen=True)
class CamEntry:
    """Candidate angle tuples for one sampled location, heaviest first."""

    location: tuple
    candidates: tuple

    def __post_init__(self):
        object.__setattr__(self, "location", _as_location(self.location))
        cands = tuple(self.candidates)
        keys = [c.angle_key for c in cands]
        if len(set(keys)) != len(keys):
            raise ValueError("candidate angle tuples must be pairwise distinct")
        weights = [c.weight for c in cands]
        if any(a < b for a, b in zip(weights, weights[1:])):
            raise ValueError("candidate weights must be nonincreasing")
        object.__setattr__(self, "candidates", cands)

    @property
    def location_array(self):
        return np.asarray(self.location, dtype=np.float64)


@dataclass(frozen=True)
class BimEntry:
    """Ranked candidate beam indices for one sampled location."""

    location: tuple
    tx_beams: tuple
    rx_beams: tuple
    tx_fingerprint: str
    rx_fingerprint: str

    def __post_init__(self):
        object.__setattr__(self, "location", _as_location(self.location))
        for name in ("tx_beams", "rx_beams"):
            beams = tuple(int(b) for b in getattr(self, name))
            if any(b < 0 for b in beams):
                raise ValueError(f"{name} indices must be nonnegative")
            if len(set(beams)) != len(beams):
                raise ValueError(f"{name} indices must be distinct")
            object.__setattr__(self, name, beams)

    @property
    def location_array(self):
        return np.asarray(self.location, dtype=np.float64)


class _NeighborIndex:
    """Exact K-nearest lookup over fixed sample locations.

    Brute force vectorized distances up to _BRUTE_LIMIT points; a uniform
    grid-bucket scan with expanding cell rings beyond that. Both return the
    identical neighbor list: candidates are ordered by (distance, insertion
    position) and the ring scan only stops once no unscanned cell can hold a
    closer or tie-breaking point.
    """

    def __init__(self, locations, mode="auto"):
        pts = np.asarray(locations, dtype=np.float64).reshape(-1, 3)
        self.points = pts
        n = pts.shape[0]
        if mode == "auto":
            mode = "brute" if n <= _BRUTE_LIMIT else "buckets"
        self.mode = mode
        if mode == "buckets" and n > 0:
            lo = pts.min(axis=0)
            extent = float(np.max(pts.max(axis=0) - lo))
            cells_per_axis = max(1, round(n ** (1.0 / 3.0)))
            self.cell = extent / cells_per_axis if extent > 0.0 else 1.0
            self.origin = lo
            buckets = {}
            keys = np.floor((pts - lo) / self.cell).astype(np.int64)
            for i, key in enumerate(map(tuple, keys)):
                buckets.setdefault(key, []).append(i)
            self.buckets = buckets
            self.max_key = keys.max(axis=0)
            self.min_key = keys.min(axis=0)

    def nearest(self, query, k):
        q = np.asarray(query, dtype=np.float64).reshape(3)
        n = self.points.shape[0]
        if not (1 <= k <= n):
            raise ValueError(f"neighbor count {k} outside [1, {n}]")
        if self.mode == "brute":
            dists = self._distances(np.arange(n), q)
            order = np.lexsort((np.arange(n), dists))[:k]
            return [int(i) for i in order], [float(dists[i]) for i in order]
        return self._nearest_buckets(q, k)

    def _distances(self, indices, q):
        # one shared expression for both scan modes so ties resolve the same
        diff = self.points[indices] - q
        return np.sqrt((diff * diff).sum(axis=1))

    def _nearest_buckets(self, q, k):
        center = np.floor((q - self.origin) / self.cell).astype(np.int64)
        # once the ring passes every occupied cell the scan saw all points
        ring_limit = int(
            max(np.max(self.max_key - center), np.max(center - self.min_key), 0)
        )
        found = []
        radius = 0
        while True:
            ring_members = []
            for key in self._ring(center, radius):
                ring_members.extend(self.buckets.get(key, ()))
            if ring_members:
                idx = np.asarray(ring_members, dtype=np.int64)
                for d, i in zip(self._distances(idx, q), idx):
                    found.append((float(d), int(i)))
            if len(found) >= k:
                found.sort()
                kth = found[k - 1][0]
                # points beyond ring r sit at distance >= r*cell; strict
                # inequality also protects insertion-order ties at the rim
                if kth < radius * self.cell:
                    break
            if radius >= ring_limit and len(found) == self.points.shape[0]:
                found.sort()
                break
            radius += 1
        top = found[:k]
        return [i for _, i in top], [d for d, _ in top]

    @staticmethod
    def _ring(center, radius):
        cx, cy, cz = (int(v) for v in center)
        if radius == 0:
            yield (cx, cy, cz)
            return
        for dx in range(-radius, radius + 1):
            for dy in range(-radius, radius + 1):
                for dz in range(-radius, radius + 1):
                    if max(abs(dx), abs(dy), abs(dz)) == radius:
                        yield (cx + dx, cy + dy, cz + dz)


@dataclass(frozen=True)
class CkmDatabase:
    """Immutable map store with a spatial index per map kind."""

    cam_entries: tuple = ()
    bim_entries: tuple = ()
    k: int = 3
    grid: AngleGrid = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"neighbor count must be >= 1, got {self.k}")
        cams = tuple(self.cam_entries)
        bims = tuple(self.bim_entries)
        for name, entries in (("cam", cams), ("bim", bims)):
            locs = [e.location for e in entries]
            if len(set(locs)) != len(locs):
                raise ValueError(f"duplicate {name} sample location")
        fps = {(e.tx_fingerprint, e.rx_fingerprint) for e in bims}
        if len(fps) > 1:
            raise ValueError(f"bim entries mix codebook fingerprints: {sorted(fps)}")
        object.__setattr__(self, "cam_entries", cams)
        object.__setattr__(self, "bim_entries", bims)
        object.__setattr__(
            self,
            "_cam_index",
            _NeighborIndex([e.location for e in cams]) if cams else None,
        )
        object.__setattr__(
            self,
            "_bim_index",
            _NeighborIndex([e.location for e in bims]) if bims else None,
        )

    @property
    def kind(self):
        if self.cam_entries and self.bim_entries:
            return "mixed"
        if self.cam_entries:
            return "cam"
        if self.bim_entries:
            return "bim"
        return "mixed"

    @property
    def bim_fingerprints(self):
        if not self.bim_entries:
            return None
        e = self.bim_entries[0]
        return (e.tx_fingerprint, e.rx_fingerprint)


def build_cam_samples(path_sets, grid, max_candidates):
    """Angle-map entries from ray-traced paths, one entry per path set.

    Paths snap to the grid, duplicates merge by summing squared gain
    magnitudes, and each entry keeps the ``max_candidates`` heaviest tuples.
    Weight ties break toward the lexicographically smaller angle tuple.
    """
    if max_candidates < 1:
        raise ValueError(f"max_candidates must be >= 1, got {max_candidates}")
    entries = []
    for ps in path_sets:
        snapped = nearest_grid_angles(grid, ps)
        pool = {}
        for p in snapped.paths:
            key = (p.aod.zenith, p.aod.azimuth, p.aoa.zenith, p.aoa.azimuth)
            pool[key] = pool.get(key, 0.0) + abs(p.gain) ** 2
        ranked = sorted(pool.items(), key=lambda kv: (-kv[1], kv[0]))
        cands = tuple(
            CamCandidate(
                aod=AnglePair(key[0], key[1]),
                aoa=AnglePair(key[2], key[3]),
                weight=w,
            )
            for key, w in ranked[:max_candidates]
        )
        entries.append(CamEntry(location=ps.location, candidates=cands))
    return entries


def build_bim_samples(selections, tx_codebook, rx_codebook, max_tx, max_rx):
    """Beam-index-map entries from per-location ranked selections.

    ``selections`` yields (location, ranked tx indices, ranked rx indices);
    lists are truncated to the maxima, indices checked against the codebooks.
    """
    if max_tx < 1 or max_rx < 1:
        raise ValueError("beam list maxima must be >= 1")
    entries = []
    seen = set()
    for location, tx_beams, rx_beams in selections:
        entry = BimEntry(
            location=location,
            tx_beams=tuple(tx_beams)[:max_tx],
            rx_beams=tuple(rx_beams)[:max_rx],
            tx_fingerprint=tx_codebook.fingerprint,
            rx_fingerprint=rx_codebook.fingerprint,
        )
        if entry.location in seen:
            raise ValueError(f"duplicate sample location {entry.location}")
        seen.add(entry.location)
        if entry.tx_beams and max(entry.tx_beams) >= tx_codebook.n_beams:
            raise ValueError("tx beam index outside the codebook")
        if entry.rx_beams and max(entry.rx_beams) >= rx_codebook.n_beams:
            raise ValueError("rx beam index outside the codebook")
        entries.append(entry)
    return entries


def query_cam(db, query, n_candidates, k=None):
    """Pool the K nearest angle-map samples around ``query``.

    Candidate weights scale by the inverse neighbor distance and identical
    tuples merge; the heaviest ``n_candidates`` survive. A zero-distance hit
    short-circuits to that sample's own candidates.
    """
    if not db.cam_entries:
        raise ValueError("database holds no angle-map samples")
    if n_candidates < 1:
        raise ValueError(f"n_candidates must be >= 1, got {n_candidates}")
    use_k = db.k if k is None else k
    idx, dists = db._cam_index.nearest(query, use_k)
    if dists[0] == 0.0:
        hit = db.cam_entries[idx[0]]
        return CamEntry(location=query, candidates=hit.candidates[:n_candidates])
    pool = {}
    for i, d in zip(idx, dists):
        for cand in db.cam_entries[i].candidates:
            key = cand.angle_key
            pool[key] = pool.get(key, 0.0) + cand.weight / d
    ranked = sorted(pool.items(), key=lambda kv: (-kv[1], kv[0]))
    cands = tuple(
        CamCandidate(
            aod=AnglePair(key[0], key[1]), aoa=AnglePair(key[2], key[3]), weight=w
        )
        for key, w in ranked[:n_candidates]
    )
    return CamEntry(location=query, candidates=cands)


def query_bim(db, query, sizes, k=None):
    """Pool the K nearest beam-index samples around ``query``.

    Each neighbor votes (list length - rank)/distance per beam; merged scores
    rank the beams and the top (sizes[0] tx, sizes[1] rx) survive. Returns
    (entry, shortfall) where shortfall flags fewer pooled distinct beams than
    requested. A zero-distance hit short-circuits to that sample's own lists.
    """
    if not db.bim_entries:
        raise ValueError("database holds no beam-index samples")
    n_tx, n_rx = (int(sizes[0]), int(sizes[1]))
    if n_tx < 1 or n_rx < 1:
        raise ValueError(f"requested beam counts must be >= 1, got {sizes}")
    use_k = db.k if k is None else k
    idx, dists = db._bim_index.nearest(query, use_k)
    tx_fp, rx_fp = db.bim_fingerprints
    if dists[0] == 0.0:
        hit = db.bim_entries[idx[0]]
        tx = hit.tx_beams[:n_tx]
        rx = hit.rx_beams[:n_rx]
    else:
        tx = _borda_pool(
            [db.bim_entries[i].tx_beams for i in idx], dists, n_tx
        )
        rx = _borda_pool(
            [db.bim_entries[i].rx_beams for i in idx], dists, n_rx
        )
    entry = BimEntry(
        location=query,
        tx_beams=tx,
        rx_beams=rx,
        tx_fingerprint=tx_fp,
        rx_fingerprint=rx_fp,
    )
    shortfall = len(tx) < n_tx or len(rx) < n_rx
    return entry, shortfall


def _borda_pool(index_lists, dists, top):
    scores = {}
    for beams, d in zip(index_lists, dists):
        length = len(beams)
        for rank, beam in enumerate(beams):
            scores[beam] = scores.get(beam, 0.0) + (length - rank) / d
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return tuple(beam for beam, _ in ranked[:top])


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def _grid_token(grid):
    if grid is None:
        return "-"
    return "x".join(
        str(v)
        for v in (
            grid.rx_zenith_count,
            grid.rx_azimuth_count,
            grid.tx_zenith_count,
            grid.tx_azimuth_count,
        )
    )


def _parse_grid_token(token):
    if token == "-":
        return None
    parts = token.split("x")
    if len(parts) != 4:
        raise CkmFormatError(f"malformed grid token {token!r}")
    try:
        counts = [int(p) for p in parts]
    except ValueError:
        raise CkmFormatError(f"malformed grid token {token!r}") from None
    return AngleGrid(*counts)


def save(db, stream):
    """Write the database as CKMDB v1 text to a path or text stream."""
    if isinstance(stream, (str, bytes)) or hasattr(stream, "__fspath__"):
        with open(stream, "w", encoding="utf-8", newline="\n") as fh:
            return save(db, fh)
    fps = db.bim_fingerprints
    fp_token = "-" if fps is None else f"{fps[0]}|{fps[1]}"
    count = len(db.cam_entries) + len(db.bim_entries)
    stream.write(
        f"CKMDB v1; kind={db.kind}; grid={_grid_token(db.grid)}; "
        f"codebook_fp={fp_token}; K={db.k}; n={count}\n"
    )
    for e in db.cam_entries:
        parts = ["cam"] + [_FMT % v for v in e.location] + [str(len(e.candidates))]
        for c in e.candidates:
            parts.extend(
                _FMT % v
                for v in (
                    c.aod.zenith,
                    c.aod.azimuth,
                    c.aoa.zenith,
                    c.aoa.azimuth,
                    c.weight,
                )
            )
        stream.write(" ".join(parts) + "\n")
    for e in db.bim_entries:
        parts = (
            ["bim"]
            + [_FMT % v for v in e.location]
            + [str(len(e.tx_beams)), str(len(e.rx_beams))]
            + [str(b) for b in e.tx_beams]
            + [str(b) for b in e.rx_beams]
        )
        stream.write(" ".join(parts) + "\n")


def _parse_float(token, line_no):
    try:
        value = float(token)
    except ValueError:
        raise CkmFormatError(f"line {line_no}: bad number {token!r}") from None
    if not math.isfinite(value):
        raise CkmFormatError(f"line {line_no}: non-finite number {token!r}")
    return value


def _parse_int(token, line_no):
    try:
        return int(token)
    except ValueError:
        raise CkmFormatError(f"line {line_no}: bad integer {token!r}") from None


def load(stream, expect_tx_fingerprint=None, expect_rx_fingerprint=None):
    """Read a CKMDB v1 text database from a path or text stream.

    Optional expected codebook fingerprints guard beam-index maps against use
    with a codebook other than the one they were built from.
    """
    if isinstance(stream, (str, bytes)) or hasattr(stream, "__fspath__"):
        with open(stream, "r", encoding="utf-8") as fh:
            return load(fh, expect_tx_fingerprint, expect_rx_fingerprint)
    header = stream.readline()
    if not header:
        raise CkmFormatError("empty stream")
    fields = {}
    head_parts = header.rstrip("\n").split("; ")
    if head_parts[0] != "CKMDB v1":
        raise CkmFormatError(f"unsupported format header {head_parts[0]!r}")
    for part in head_parts[1:]:
        if "=" not in part:
            raise CkmFormatError(f"malformed header field {part!r}")
        key, _, value = part.partition("=")
        fields[key] = value
    for required in ("kind", "grid", "codebook_fp", "K", "n"):
        if required not in fields:
            raise CkmFormatError(f"header is missing {required}")
    kind = fields["kind"]
    if kind not in ("cam", "bim", "mixed"):
        raise CkmFormatError(f"unknown map kind {fields['kind']!r}")
    grid = _parse_grid_token(fields["grid"])
    k = _parse_int(fields["K"], 1)
    declared = _parse_int(fields["n"], 1)
    fp_token = fields["codebook_fp"]
    if fp_token == "-":
        tx_fp = rx_fp = None
    else:
        tx_fp, sep, rx_fp = fp_token.partition("|")
        if not sep:
            raise CkmFormatError(f"malformed codebook_fp token {fp_token!r}")

    cams = []
    bims = []
    line_no = 1
    for raw in stream:
        line_no += 1
        line = raw.rstrip("\n")
        if not line:
            raise CkmFormatError(f"line {line_no}: blank record line")
        tokens = line.split(" ")
        tag = tokens[0]
        if tag == "cam":
            if kind == "bim":
                raise CkmFormatError(f"line {line_no}: cam record in a bim map")
            if len(tokens) < 5:
                raise CkmFormatError(f"line {line_no}: truncated cam record")
            loc = tuple(_parse_float(t, line_no) for t in tokens[1:4])
            count = _parse_int(tokens[4], line_no)
            expected = 5 + 5 * count
            if len(tokens) != expected:
                raise CkmFormatError(
                    f"line {line_no}: cam record has {len(tokens)} fields, "
                    f"expected {expected}"
                )
            cands = []
            for j in range(count):
                vals = [
                    _parse_float(t, line_no) for t in tokens[5 + 5 * j : 10 + 5 * j]
                ]
                try:
                    cands.append(
                        CamCandidate(
                            aod=AnglePair(vals[0], vals[1]),
                            aoa=AnglePair(vals[2], vals[3]),
                            weight=vals[4],
                        )
                    )
                except ValueError as exc:
                    raise CkmFormatError(f"line {line_no}: {exc}") from None
            try:
                cams.append(CamEntry(location=loc, candidates=tuple(cands)))
            except ValueError as exc:
                raise CkmFormatError(f"line {line_no}: {exc}") from None
        elif tag == "bim":
            if kind == "cam":
                raise CkmFormatError(f"line {line_no}: bim record in a cam map")
            if tx_fp is None:
                raise CkmFormatError(
                    f"line {line_no}: bim record without codebook fingerprints"
                )
            if len(tokens) < 6:
                raise CkmFormatError(f"line {line_no}: truncated bim record")
            loc = tuple(_parse_float(t, line_no) for t in tokens[1:4])
            n_tx = _parse_int(tokens[4], line_no)
            n_rx = _parse_int(tokens[5], line_no)
            expected = 6 + n_tx + n_rx
            if len(tokens) != expected:
                raise CkmFormatError(
                    f"line {line_no}: bim record has {len(tokens)} fields, "
                    f"expected {expected}"
                )
            tx = tuple(_parse_int(t, line_no) for t in tokens[6 : 6 + n_tx])
            rx = tuple(_parse_int(t, line_no) for t in tokens[6 + n_tx :])
            try:
                bims.append(
                    BimEntry(
                        location=loc,
                        tx_beams=tx,
                        rx_beams=rx,
                        tx_fingerprint=tx_fp,
                        rx_fingerprint=rx_fp,
                    )
                )
            except ValueError as exc:
                raise CkmFormatError(f"line {line_no}: {exc}") from None
        else:
            raise CkmFormatError(f"line {line_no}: unknown record tag {tag!r}")
    total = len(cams) + len(bims)
    if total != declared:
        raise CkmFormatError(
            f"header declares {declared} records but the stream holds {total}"
        )
    if bims:
        if expect_tx_fingerprint is not None and tx_fp != expect_tx_fingerprint:
            raise CkmFormatError(
                f"tx codebook fingerprint mismatch: map has {tx_fp!r}, "
                f"expected {expect_tx_fingerprint!r}"
            )
        if expect_rx_fingerprint is not None and rx_fp != expect_rx_fingerprint:
            raise CkmFormatError(
                f"rx codebook fingerprint mismatch: map has {rx_fp!r}, "
                f"expected {expect_rx_fingerprint!r}"
            )
    try:
        return CkmDatabase(
            cam_entries=tuple(cams), bim_entries=tuple(bims), k=k, grid=grid
        )
    except ValueError as exc:
        raise CkmFormatError(str(exc)) from None
