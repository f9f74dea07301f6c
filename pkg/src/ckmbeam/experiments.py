"""Monte-Carlo study driver: scene and map setup, per-method trial
pipelines, and CSV result emission.

A study sweeps transmit array sizes over a fixed scene. For every trial one
user location is drawn, every configured method designs its beamformers from
whatever knowledge it is allowed (perfect channel, map queries, training
symbols), and the achieved rate on the true channel is charged for the
training symbols the method consumed within the coherence block.
"""

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import ckm
from .arrays import AngleGrid, AnglePair, UpaGeometry, response_matrix
from .baselines import location_based_beams, ls_full_estimate, omp_grid_estimate
from .bim import beamformers_from_sweep, rank_beams, select_submatrix_greedy, sweep
from .cam import (
    CamDesignError,
    design_training_beams,
    estimate_gains,
    reconstruct_channel,
    simulate_training,
)
from .channels import Box, Rectangle, Scene, generate_scene_paths, synthesize_channel
from .ckm import CamCandidate
from .codebooks import kronecker_dft_codebook
from .hybrid import SystemDims, optimal_baseband, rate
from .linalg import hermitian_inv_sqrt, water_filling

KNOWN_METHODS = ("optimal", "cam", "bim", "ls", "omp", "location")

RESULT_HEADER = (
    "method,M_t,trial,raw_rate_bpshz,N_tr,effective_rate_bpshz,loc_error_m,seed"
)
SUMMARY_HEADER = "method,M_t,trials,mean_effective_rate_bpshz,stderr_bpshz"

_LN2 = math.log(2.0)


def _field_error(name, problem):
    return ValueError(f'config field "{name}": {problem}')


def demo_scene():
    """Street-strip scene: side walls, ground, a far end wall, and an opaque
    screen that shadows part of the user region.

    The user strip starts close to the base station so departure angles span
    a wide cone; the end wall adds a back-scatter cluster. The screen's
    reflective face points away from the base station, so it only ever blocks
    the direct ray; users behind it see reflections alone.
    """
    return Scene(
        bs_position=(0.0, 0.0, 12.0),
        wavelength=0.01,
        ue_region=Box(lo=(14.0, -24.0, 1.5), hi=(70.0, 24.0, 1.5)),
        reflectors=(
            Rectangle(
                corner=(0.0, 26.0, 0.0),
                edge_u=(80.0, 0.0, 0.0),
                edge_v=(0.0, 0.0, 18.0),
                loss_db=6.0,
            ),
            Rectangle(
                corner=(0.0, -26.0, 0.0),
                edge_u=(0.0, 0.0, 18.0),
                edge_v=(80.0, 0.0, 0.0),
                loss_db=6.0,
            ),
            Rectangle(
                corner=(0.0, -26.0, 0.0),
                edge_u=(80.0, 0.0, 0.0),
                edge_v=(0.0, 52.0, 0.0),
                loss_db=3.0,
            ),
            Rectangle(
                corner=(80.0, -26.0, 0.0),
                edge_u=(0.0, 0.0, 18.0),
                edge_v=(0.0, 52.0, 0.0),
                loss_db=8.0,
            ),
            Rectangle(
                corner=(22.0, -13.0, 0.0),
                edge_u=(0.0, 12.0, 0.0),
                edge_v=(0.0, 0.0, 13.0),
                loss_db=30.0,
            ),
        ),
    )


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated study settings; ``snr`` has no default and must be given."""

    snr: float
    tx_shapes: tuple = ((8, 8), (12, 12), (16, 16))
    rx_shape: tuple = (4, 4)
    n_tx_rf: int = 4
    n_rx_rf: int = 4
    oversampling: int = 1
    block_length: int = 1200
    trials: int = 100
    methods: tuple = KNOWN_METHODS
    cam_paths: int = 40
    bim_tx_beams: int = 20
    bim_rx_beams: int = 10
    neighbors: int = 3
    map_samples: int = 3700
    grid_refine: int = 4
    omp_sparsity: int = 8
    omp_measurements: int = 0
    location_error_m: float = 0.0
    master_seed: int = 0
    train_noise: bool = True
    scene: Scene = None
    output: str = ""

    def __post_init__(self):
        if not (isinstance(self.snr, (int, float)) and not isinstance(self.snr, bool)):
            raise _field_error("snr", f"must be a number, got {self.snr!r}")
        if not (self.snr > 0.0 and math.isfinite(self.snr)):
            raise _field_error("snr", f"must be positive and finite, got {self.snr}")
        object.__setattr__(self, "tx_shapes", self._shapes("tx_shapes"))
        object.__setattr__(self, "rx_shape", self._pair("rx_shape", self.rx_shape))
        for name, low in (
            ("n_tx_rf", 1), ("n_rx_rf", 1), ("oversampling", 1),
            ("block_length", 1), ("trials", 1), ("cam_paths", 1),
            ("bim_tx_beams", 1), ("bim_rx_beams", 1), ("neighbors", 1),
            ("map_samples", 1), ("grid_refine", 1), ("omp_sparsity", 0),
            ("omp_measurements", 0), ("master_seed", 0),
        ):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value:
                raise _field_error(name, f"must be an integer, got {value!r}")
            if value < low:
                raise _field_error(name, f"must be >= {low}, got {value}")
            object.__setattr__(self, name, int(value))
        if self.master_seed >= 2**64:
            raise _field_error("master_seed", "must fit in 64 bits")
        if self.n_rx_rf > self.n_tx_rf:
            raise _field_error(
                "n_rx_rf", f"must not exceed n_tx_rf, got {self.n_rx_rf} > {self.n_tx_rf}"
            )
        for shape in self.tx_shapes:
            if self.n_tx_rf >= shape[0] * shape[1]:
                raise _field_error(
                    "n_tx_rf",
                    f"must be fewer than the {shape[0]}x{shape[1]} array's antennas",
                )
        n_rx = self.rx_shape[0] * self.rx_shape[1]
        if self.n_rx_rf >= n_rx:
            raise _field_error(
                "n_rx_rf", f"must be fewer than the {n_rx} receive antennas"
            )
        if self.bim_tx_beams < self.n_tx_rf:
            raise _field_error(
                "bim_tx_beams", f"must be >= n_tx_rf, got {self.bim_tx_beams}"
            )
        if self.bim_rx_beams < self.n_rx_rf:
            raise _field_error(
                "bim_rx_beams", f"must be >= n_rx_rf, got {self.bim_rx_beams}"
            )
        # beam lists must fit inside the smallest codebook of the sweep
        os2 = self.oversampling**2
        smallest_tx = min(s[0] * s[1] for s in self.tx_shapes) * os2
        if self.bim_tx_beams > smallest_tx:
            raise _field_error(
                "bim_tx_beams", f"exceeds the smallest transmit codebook ({smallest_tx})"
            )
        if self.bim_rx_beams > n_rx * os2:
            raise _field_error(
                "bim_rx_beams", f"exceeds the receive codebook ({n_rx * os2})"
            )
        if not (
            isinstance(self.location_error_m, (int, float))
            and not isinstance(self.location_error_m, bool)
        ):
            raise _field_error(
                "location_error_m", f"must be a number, got {self.location_error_m!r}"
            )
        if not (self.location_error_m >= 0.0 and math.isfinite(self.location_error_m)):
            raise _field_error(
                "location_error_m",
                f"must be >= 0 and finite, got {self.location_error_m}",
            )
        object.__setattr__(self, "location_error_m", float(self.location_error_m))
        methods = tuple(self.methods)
        if not methods:
            raise _field_error("methods", "must name at least one method")
        for m in methods:
            if m not in KNOWN_METHODS:
                raise _field_error(
                    "methods", f"unknown method {m!r}, choose from {KNOWN_METHODS}"
                )
        if len(set(methods)) != len(methods):
            raise _field_error("methods", f"has duplicates: {methods}")
        object.__setattr__(self, "methods", methods)
        if not isinstance(self.train_noise, bool):
            raise _field_error(
                "train_noise", f"must be true or false, got {self.train_noise!r}"
            )
        if self.scene is not None and not isinstance(self.scene, Scene):
            raise _field_error("scene", "must be a scene description or omitted")
        if not isinstance(self.output, str):
            raise _field_error("output", f"must be a path string, got {self.output!r}")

    def _shapes(self, name):
        try:
            shapes = tuple(self._pair(name, s) for s in self.tx_shapes)
        except TypeError:
            raise _field_error(name, f"must be a list of pairs, got {self.tx_shapes!r}")
        if not shapes:
            raise _field_error(name, "must list at least one array shape")
        return shapes

    def _pair(self, name, value):
        try:
            a, b = value
        except (TypeError, ValueError):
            raise _field_error(name, f"expected an (n_z, n_y) pair, got {value!r}")
        for v in (a, b):
            if isinstance(v, bool) or int(v) != v or v < 1:
                raise _field_error(name, f"axis counts must be positive integers, got {value!r}")
        return (int(a), int(b))


_CONFIG_INT_FIELDS = (
    "n_tx_rf", "n_rx_rf", "oversampling", "block_length", "trials",
    "cam_paths", "bim_tx_beams", "bim_rx_beams", "neighbors", "map_samples",
    "grid_refine", "omp_sparsity", "omp_measurements", "master_seed",
)
_CONFIG_FLOAT_FIELDS = ("snr", "location_error_m")
_CONFIG_KEYS = frozenset(
    _CONFIG_INT_FIELDS
    + _CONFIG_FLOAT_FIELDS
    + ("tx_shapes", "rx_shape", "methods", "train_noise", "scene", "output")
)


def _vector3(name, value):
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise _field_error(name, f"must be a 3-number list, got {value!r}")
    out = []
    for v in value:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise _field_error(name, f"must be a 3-number list, got {value!r}")
        out.append(float(v))
    return tuple(out)


def _scene_from_mapping(data):
    if not isinstance(data, dict):
        raise _field_error("scene", f"must be an object, got {data!r}")
    allowed = {"bs_position", "wavelength", "ue_region", "reflectors"}
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise _field_error("scene", f"unknown keys {unknown}")
    for required in ("bs_position", "wavelength", "ue_region"):
        if required not in data:
            raise _field_error("scene", f"is missing {required!r}")
    region = data["ue_region"]
    if not isinstance(region, dict) or set(region) != {"lo", "hi"}:
        raise _field_error("scene.ue_region", 'must be {"lo": [...], "hi": [...]}')
    reflectors = []
    for i, r in enumerate(data.get("reflectors", ())):
        if not isinstance(r, dict):
            raise _field_error(f"scene.reflectors[{i}]", "must be an object")
        extra = sorted(set(r) - {"corner", "edge_u", "edge_v", "loss_db"})
        if extra:
            raise _field_error(f"scene.reflectors[{i}]", f"unknown keys {extra}")
        for required in ("corner", "edge_u", "edge_v"):
            if required not in r:
                raise _field_error(f"scene.reflectors[{i}]", f"is missing {required!r}")
        reflectors.append(
            Rectangle(
                corner=_vector3(f"scene.reflectors[{i}].corner", r["corner"]),
                edge_u=_vector3(f"scene.reflectors[{i}].edge_u", r["edge_u"]),
                edge_v=_vector3(f"scene.reflectors[{i}].edge_v", r["edge_v"]),
                loss_db=float(r.get("loss_db", 0.0)),
            )
        )
    return Scene(
        bs_position=_vector3("scene.bs_position", data["bs_position"]),
        wavelength=float(data["wavelength"]),
        ue_region=Box(
            lo=_vector3("scene.ue_region.lo", region["lo"]),
            hi=_vector3("scene.ue_region.hi", region["hi"]),
        ),
        reflectors=tuple(reflectors),
    )


def load_config(source):
    """Experiment settings from a JSON file, stream, or mapping.

    Unknown keys are rejected by name; every field failure names the field.
    """
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    elif hasattr(source, "read"):
        data = json.load(source)
    else:
        data = source
    if not isinstance(data, dict):
        raise ValueError(f"config must be a JSON object, got {type(data).__name__}")
    unknown = sorted(set(data) - _CONFIG_KEYS)
    if unknown:
        raise ValueError(f"config has unknown fields: {unknown}")
    if "snr" not in data:
        raise ValueError('config is missing required field "snr"')
    kwargs = {}
    for name in _CONFIG_INT_FIELDS:
        if name in data:
            value = data[name]
            if isinstance(value, bool) or not isinstance(value, int):
                raise _field_error(name, f"must be an integer, got {value!r}")
            kwargs[name] = value
    for name in _CONFIG_FLOAT_FIELDS:
        if name in data:
            value = data[name]
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise _field_error(name, f"must be a number, got {value!r}")
            kwargs[name] = float(value)
    if "tx_shapes" in data:
        kwargs["tx_shapes"] = data["tx_shapes"]
    if "rx_shape" in data:
        kwargs["rx_shape"] = data["rx_shape"]
    if "methods" in data:
        methods = data["methods"]
        if not isinstance(methods, (list, tuple)) or not all(
            isinstance(m, str) for m in methods
        ):
            raise _field_error("methods", f"must be a list of names, got {methods!r}")
        kwargs["methods"] = tuple(methods)
    if "train_noise" in data:
        if not isinstance(data["train_noise"], bool):
            raise _field_error(
                "train_noise", f"must be true or false, got {data['train_noise']!r}"
            )
        kwargs["train_noise"] = data["train_noise"]
    if "scene" in data and data["scene"] is not None:
        kwargs["scene"] = _scene_from_mapping(data["scene"])
    if "output" in data:
        if not isinstance(data["output"], str):
            raise _field_error("output", f"must be a path string, got {data['output']!r}")
        kwargs["output"] = data["output"]
    return ExperimentConfig(**kwargs)


@dataclass(frozen=True)
class TrialRecord:
    """One method's outcome on one user draw."""

    method: str
    n_tx: int
    trial: int
    raw_rate: float
    training_symbols: int
    effective_rate: float
    loc_error_m: float
    seed: int

    def __post_init__(self):
        if not self.method:
            raise ValueError("method tag must be nonempty")
        if self.n_tx < 1:
            raise ValueError(f"n_tx must be >= 1, got {self.n_tx}")
        if self.trial < 0:
            raise ValueError(f"trial index must be >= 0, got {self.trial}")
        if not (math.isfinite(self.raw_rate) and self.raw_rate >= 0.0):
            raise ValueError(f"raw rate must be finite and >= 0, got {self.raw_rate}")
        if self.training_symbols < 0:
            raise ValueError(
                f"training symbols must be >= 0, got {self.training_symbols}"
            )
        if not (0.0 <= self.effective_rate <= self.raw_rate):
            raise ValueError(
                f"effective rate {self.effective_rate} outside [0, {self.raw_rate}]"
            )
        if not (math.isfinite(self.loc_error_m) and self.loc_error_m >= 0.0):
            raise ValueError(
                f"location error must be finite and >= 0, got {self.loc_error_m}"
            )
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must fit in 64 bits, got {self.seed}")


def finish_trial(method, n_tx, trial, raw_rate, training_symbols, block_length,
                 loc_error_m, seed):
    """Record with the post-training rate.

    Training that does not fit the coherence block leaves no payload symbols,
    so the effective rate is zero; otherwise it is the raw rate scaled by the
    remaining fraction of the block.
    """
    if training_symbols <= block_length:
        # min() guards the one-ulp overshoot of the full-block round trip
        effective = min(
            raw_rate, raw_rate * (block_length - training_symbols) / block_length
        )
    else:
        effective = 0.0
    return TrialRecord(
        method=method,
        n_tx=n_tx,
        trial=trial,
        raw_rate=raw_rate,
        training_symbols=training_symbols,
        effective_rate=effective,
        loc_error_m=loc_error_m,
        seed=seed,
    )


def draw_location_error(mean_m, rng):
    """Horizontal offset with Rayleigh magnitude averaging ``mean_m`` meters."""
    if not (mean_m >= 0.0 and math.isfinite(mean_m)):
        raise ValueError(f"mean error must be >= 0 and finite, got {mean_m}")
    if mean_m == 0.0:
        return np.zeros(3)
    scale = mean_m / math.sqrt(math.pi / 2.0)
    radius = rng.rayleigh(scale)
    angle = rng.uniform(0.0, 2.0 * math.pi)
    return np.array([radius * math.cos(angle), radius * math.sin(angle), 0.0])


# ---------------------------------------------------------------------------
# per-array-size setup
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ArraySetup:
    """Geometry, codebooks, and maps for one transmit array size."""

    dims: SystemDims
    tx_geom: UpaGeometry
    rx_geom: UpaGeometry
    tx_codebook: object
    rx_codebook: object
    grid: AngleGrid
    cam_db: object = None
    cam_atlas: tuple = ()
    bim_db: object = None
    tx_match: object = None
    rx_match: object = None


def _candidate_atlas(entries):
    """Every angle tuple in the map, ranked by total weight across samples."""
    pool = {}
    for e in entries:
        for c in e.candidates:
            pool[c.angle_key] = pool.get(c.angle_key, 0.0) + c.weight
    ranked = sorted(pool.items(), key=lambda kv: (-kv[1], kv[0]))
    return tuple(key for key, _ in ranked)


@dataclass(frozen=True)
class _SideMatch:
    """How one side's grid cells and exact beam directions line up."""

    pairs: tuple
    index: dict
    cell_beam: np.ndarray
    cell_share: np.ndarray
    beam_dirs: tuple


def _beam_directions(geom, oversampling):
    """Exact pointing direction of every codebook beam; None when the beam's
    spatial frequency falls outside the visible disc."""
    period = 1.0 / geom.spacing
    dirs = []
    for kz in range(oversampling * geom.n_z):
        u = (kz / (oversampling * geom.n_z)) / geom.spacing % period
        if u > period / 2.0:
            u -= period
        for ky in range(oversampling * geom.n_y):
            v = (ky / (oversampling * geom.n_y)) / geom.spacing % period
            if v > period / 2.0:
                v -= period
            if u * u + v * v > 1.0 + 1e-12:
                dirs.append(None)
                continue
            zenith = math.acos(max(-1.0, min(1.0, u)))
            sin_zen = math.sin(zenith)
            if sin_zen < 1e-12:
                dirs.append(AnglePair(zenith, 0.0) if abs(v) < 1e-9 else None)
                continue
            azimuth = math.asin(max(-1.0, min(1.0, v / sin_zen)))
            if azimuth < 0.0:
                azimuth += 2.0 * math.pi
            dirs.append(AnglePair(zenith=zenith, azimuth=azimuth))
    return tuple(dirs)


def _beam_match(codebook, pairs):
    pairs = tuple(pairs)
    resp = response_matrix(codebook.geometry, pairs)
    share = np.abs(resp.conj().T @ codebook.beams) ** 2
    cell_beam = np.argmax(share, axis=1)
    cell_share = share[np.arange(share.shape[0]), cell_beam]
    return _SideMatch(
        pairs=pairs,
        index={p: i for i, p in enumerate(pairs)},
        cell_beam=cell_beam,
        cell_share=cell_share,
        beam_dirs=_beam_directions(codebook.geometry, codebook.oversampling),
    )


def _group_patterns(n_streams, n_groups):
    """Local (tx slot, rx slot) pairs per rotation group, plus per-side slot
    counts. Earlier groups get strictly higher per-beam atom counts, so the
    score ranking cannot interleave beams of different groups."""
    s = n_streams
    patterns = []
    for g in range(n_groups - 1):
        degree = s - g
        patterns.append((s, s, tuple(
            (i, (i + t) % s) for i in range(s) for t in range(degree)
        )))
    if n_groups == 1:
        return patterns
    # tail group: one rx slot is left to whatever junk beam ranks there
    edges = []
    for j in range(s - 1):
        for t in range(s - 2):
            edges.append(((j + t) % s, j))
    patterns.append((s, s - 1, tuple(edges)))
    return patterns


def _structured_candidates(entry, atlas, count, setup):
    """Candidate list whose sounding schedule illuminates every atom exactly
    once, pinned to ceil(count / n_streams^2) epochs.

    Every training epoch points both arrays at one rank group of beams, so
    only atoms whose transmit and receive beams sit in the same group are
    measured. All atoms are therefore placed on exact beam directions, where
    beam scores become exact per-beam atom counts: queried tuples map to
    their dominant beam pair and keep their weights, fabricated atoms (zero
    weight) complete each group's bipartite slot pattern, and strictly
    decreasing atom counts across groups pin each group to its own rotation
    position. Returns None when the geometry cannot support the structure.
    """
    dims = setup.dims
    s = dims.n_streams
    n_groups = -(-count // (s * s))
    tx_m, rx_m = setup.tx_match, setup.rx_match
    patterns = _group_patterns(s, n_groups)
    total = sum(len(p[2]) for p in patterns)
    if total < (n_groups - 1) * s * s + 1 or not patterns[-1][2]:
        return None
    tx_visible = [b for b, d in enumerate(tx_m.beam_dirs) if d is not None]
    rx_visible = [b for b, d in enumerate(rx_m.beam_dirs) if d is not None]
    if len(tx_visible) < sum(p[0] for p in patterns):
        return None
    if len(rx_visible) < sum(p[1] for p in patterns):
        return None

    pool = []
    seen = set()
    for c in entry.candidates:
        key = (c.aod, c.aoa)
        if key not in seen:
            seen.add(key)
            pool.append((c.aod, c.aoa, c.weight))
    for key in atlas:
        aod = AnglePair(key[0], key[1])
        aoa = AnglePair(key[2], key[3])
        if (aod, aoa) not in seen:
            seen.add((aod, aoa))
            pool.append((aod, aoa, 0.0))

    edges = {}
    tx_weight = {}
    rx_weight = {}
    for aod, aoa, w in pool:
        ti = tx_m.index.get(aod)
        ri = rx_m.index.get(aoa)
        if ti is None or ri is None:
            continue
        bt = int(tx_m.cell_beam[ti])
        br = int(rx_m.cell_beam[ri])
        if tx_m.beam_dirs[bt] is None or rx_m.beam_dirs[br] is None:
            continue
        tx_weight[bt] = tx_weight.get(bt, 0.0) + w
        rx_weight[br] = rx_weight.get(br, 0.0) + w
        edges[(bt, br)] = edges.get((bt, br), 0.0) + w
    ranked_edges = sorted(edges.items(), key=lambda kv: (-kv[1], kv[0]))

    tx_slots = [{} for _ in patterns]
    rx_slots = [{} for _ in patterns]
    claimed = [{} for _ in patterns]
    tx_used = set()
    rx_used = set()

    def embed(g, bt, br, weight):
        n_t, n_r, pat = patterns[g]
        slot_t = tx_slots[g].get(bt)
        slot_r = rx_slots[g].get(br)
        if slot_t is None and (bt in tx_used or len(tx_slots[g]) >= n_t):
            return False
        if slot_r is None and (br in rx_used or len(rx_slots[g]) >= n_r):
            return False
        free_t = [i for i in range(n_t) if i not in tx_slots[g].values()]
        free_r = [j for j in range(n_r) if j not in rx_slots[g].values()]
        for (i, j) in pat:
            if (i, j) in claimed[g]:
                continue
            if slot_t is None and i not in free_t:
                continue
            if slot_t is not None and i != slot_t:
                continue
            if slot_r is None and j not in free_r:
                continue
            if slot_r is not None and j != slot_r:
                continue
            if slot_t is None:
                tx_slots[g][bt] = i
                tx_used.add(bt)
            if slot_r is None:
                rx_slots[g][br] = j
                rx_used.add(br)
            claimed[g][(i, j)] = weight
            return True
        return False

    for (bt, br), w in ranked_edges:
        for g in range(n_groups):
            if embed(g, bt, br, w):
                break

    def fill_side(slots, used, visible, weight_by_beam, counts):
        ranked = sorted(
            (b for b in visible if b not in used),
            key=lambda b: (-weight_by_beam.get(b, 0.0), b),
        )
        it = iter(ranked)
        for g, need in enumerate(counts):
            while len(slots[g]) < need:
                beam = next(it)
                free = [i for i in range(need) if i not in slots[g].values()]
                slots[g][beam] = free[0]
                used.add(beam)

    fill_side(tx_slots, tx_used, tx_visible, tx_weight, [p[0] for p in patterns])
    fill_side(rx_slots, rx_used, rx_visible, rx_weight, [p[1] for p in patterns])

    cands = []
    for g, (n_t, n_r, pat) in enumerate(patterns):
        beam_t = {i: b for b, i in tx_slots[g].items()}
        beam_r = {j: b for b, j in rx_slots[g].items()}
        for (i, j) in sorted(pat, key=lambda e: (-claimed[g].get(e, 0.0), e)):
            bt, br = beam_t[i], beam_r[j]
            cands.append(CamCandidate(
                aod=tx_m.beam_dirs[bt],
                aoa=rx_m.beam_dirs[br],
                weight=claimed[g].get((i, j), 0.0),
            ))
    return cands


def _atlas_pad(entry, atlas, count):
    """Top up a queried candidate list to ``count`` tuples from the atlas."""
    cands = list(entry.candidates[:count])
    have = {c.angle_key for c in cands}
    for key in atlas:
        if len(cands) >= count:
            break
        if key in have:
            continue
        cands.append(
            CamCandidate(
                aod=AnglePair(key[0], key[1]),
                aoa=AnglePair(key[2], key[3]),
                weight=0.0,
            )
        )
    return cands


def _pad_candidates(entry, setup, count):
    """Final candidate list for one query: beam-structured when the geometry
    allows it, plain atlas fill otherwise."""
    dims = setup.dims
    if (
        dims.n_tx_rf == dims.n_streams
        and dims.n_rx_rf == dims.n_streams
        and dims.n_streams >= 3
        and setup.tx_match is not None
    ):
        cands = _structured_candidates(entry, setup.cam_atlas, count, setup)
        if cands is not None:
            return cands
    return _atlas_pad(entry, setup.cam_atlas, count)


def build_array_setup(cfg, shape, path_sets):
    """Codebooks, grid, and the maps the configured methods need."""
    tx_geom = UpaGeometry(shape[0], shape[1])
    rx_geom = UpaGeometry(cfg.rx_shape[0], cfg.rx_shape[1])
    dims = SystemDims(tx_geom.size, rx_geom.size, cfg.n_tx_rf, cfg.n_rx_rf)
    tx_codebook = kronecker_dft_codebook(tx_geom, cfg.oversampling)
    rx_codebook = kronecker_dft_codebook(rx_geom, cfg.oversampling)
    grid = AngleGrid.for_arrays(tx_geom, rx_geom)
    cam_db = None
    atlas = ()
    tx_match = None
    rx_match = None
    if "cam" in cfg.methods:
        # map cells finer than the beam pitch, so each stored tuple lands on
        # the same codebook beam as the path it quantizes
        map_grid = AngleGrid.for_arrays(tx_geom, rx_geom, cfg.grid_refine)
        entries = ckm.build_cam_samples(path_sets, map_grid, cfg.cam_paths)
        cam_db = ckm.CkmDatabase(cam_entries=entries, k=cfg.neighbors, grid=map_grid)
        atlas = _candidate_atlas(entries)
        tx_match = _beam_match(tx_codebook, map_grid.tx_pairs())
        rx_match = _beam_match(rx_codebook, map_grid.rx_pairs())
    bim_db = None
    if "bim" in cfg.methods:
        selections = []
        for ps in path_sets:
            h = synthesize_channel(ps, tx_geom, rx_geom)
            coupling = rx_codebook.beams.conj().T @ h @ tx_codebook.beams
            tx_order, rx_order = rank_beams(coupling)
            selections.append(
                (ps.location, tx_order[: cfg.bim_tx_beams], rx_order[: cfg.bim_rx_beams])
            )
        entries = ckm.build_bim_samples(
            selections, tx_codebook, rx_codebook, cfg.bim_tx_beams, cfg.bim_rx_beams
        )
        bim_db = ckm.CkmDatabase(bim_entries=entries, k=cfg.neighbors, grid=grid)
    return ArraySetup(
        dims=dims,
        tx_geom=tx_geom,
        rx_geom=rx_geom,
        tx_codebook=tx_codebook,
        rx_codebook=rx_codebook,
        grid=grid,
        cam_db=cam_db,
        cam_atlas=atlas,
        bim_db=bim_db,
        tx_match=tx_match,
        rx_match=rx_match,
    )


# ---------------------------------------------------------------------------
# method pipelines
# ---------------------------------------------------------------------------


def _fixed_rate(channel, bf, snr):
    """Rate a fixed beamformer pair actually achieves on a channel."""
    w = bf.rx_rf @ bf.rx_bb
    white = hermitian_inv_sqrt(w.conj().T @ w)
    eff = white @ (w.conj().T @ np.asarray(channel, dtype=np.complex128) @ bf.tx_rf)
    return rate(eff, bf.input_covariance, snr)


def _design_from_estimate(estimate, setup, snr):
    """Analog selection plus digital stages designed from a channel estimate."""
    coupling = setup.rx_codebook.beams.conj().T @ estimate @ setup.tx_codebook.beams
    rows, cols, _ = select_submatrix_greedy(
        coupling, setup.dims.n_tx_rf, setup.dims.n_rx_rf
    )
    bf, _ = optimal_baseband(
        estimate, setup.tx_codebook.subset(cols), setup.rx_codebook.subset(rows), snr
    )
    return bf


def _run_optimal(cfg, setup, h_true):
    # fully digital water-filled bound over the stream count, no training
    sv = np.linalg.svd(h_true, compute_uv=False)[: setup.dims.n_streams]
    if np.any(sv > 0.0):
        shares = water_filling(sv, cfg.snr).shares
        raw = float(np.sum(np.log1p(cfg.snr * shares * sv * sv)) / _LN2)
    else:
        raw = 0.0
    return raw, 0


def _run_cam(cfg, setup, h_true, reported, noise_rng):
    entry = ckm.query_cam(setup.cam_db, reported, cfg.cam_paths)
    cands = _pad_candidates(entry, setup, cfg.cam_paths)
    streams = setup.dims.n_streams
    try:
        plan = design_training_beams(
            cands, setup.tx_codebook, setup.rx_codebook, setup.dims
        )
    except CamDesignError:
        # charge the scheduled budget, deliver nothing
        scheduled = -(-len(cands) // streams**2) * streams
        return 0.0, scheduled
    outputs = simulate_training(plan, h_true, cfg.snr, noise_rng)
    gains = estimate_gains(plan, outputs, cfg.snr).gains
    estimate = reconstruct_channel(plan, gains)
    bf = _design_from_estimate(estimate, setup, cfg.snr)
    return _fixed_rate(h_true, bf, cfg.snr), plan.training_symbols


def _run_bim(cfg, setup, h_true, reported, noise_rng):
    entry, _ = ckm.query_bim(
        setup.bim_db, reported, (cfg.bim_tx_beams, cfg.bim_rx_beams)
    )
    tx_beams = setup.tx_codebook.subset(entry.tx_beams)
    rx_beams = setup.rx_codebook.subset(entry.rx_beams)
    meas = sweep(h_true, tx_beams, rx_beams, setup.dims, cfg.snr, noise_rng)
    rows, cols, _ = select_submatrix_greedy(
        meas.observations, setup.dims.n_tx_rf, setup.dims.n_rx_rf
    )
    bf, _ = beamformers_from_sweep(meas, (rows, cols), tx_beams, rx_beams, cfg.snr)
    return _fixed_rate(h_true, bf, cfg.snr), meas.training_symbols


def _run_ls(cfg, setup, h_true, noise_rng):
    result = ls_full_estimate(h_true, setup.dims, cfg.snr, noise_rng)
    bf = _design_from_estimate(result.channel, setup, cfg.snr)
    return _fixed_rate(h_true, bf, cfg.snr), result.training_symbols


def _run_omp(cfg, setup, h_true, rng, noise_rng):
    measurements = cfg.omp_measurements if cfg.omp_measurements > 0 else None
    result = omp_grid_estimate(
        h_true,
        setup.grid,
        setup.tx_geom,
        setup.rx_geom,
        cfg.omp_sparsity,
        measurements,
        setup.dims,
        cfg.snr,
        rng,
        noise_rng,
    )
    bf = _design_from_estimate(result.channel, setup, cfg.snr)
    return _fixed_rate(h_true, bf, cfg.snr), result.training_symbols


def _run_location(cfg, setup, scene, h_true, reported, noise_rng):
    result = location_based_beams(
        scene.bs_position, reported, setup.tx_codebook, setup.rx_codebook, setup.dims
    )
    tx_sel = setup.tx_codebook.subset(result.tx_indices)
    rx_sel = setup.rx_codebook.subset(result.rx_indices)
    meas = sweep(h_true, tx_sel, rx_sel, setup.dims, cfg.snr, noise_rng)
    selection = (
        tuple(range(setup.dims.n_rx_rf)),
        tuple(range(setup.dims.n_tx_rf)),
    )
    bf, _ = beamformers_from_sweep(meas, selection, tx_sel, rx_sel, cfg.snr)
    return _fixed_rate(h_true, bf, cfg.snr), result.training_symbols


def run_trial(cfg, setup, scene, shape_index, trial, ue_true, error):
    """All configured methods on one user draw, in configuration order."""
    ps = generate_scene_paths(scene, ue_true)
    h_true = synthesize_channel(ps, setup.tx_geom, setup.rx_geom)
    reported = np.asarray(ue_true, dtype=np.float64) + error
    loc_error = float(np.linalg.norm(error))
    records = []
    for m_idx, method in enumerate(cfg.methods):
        ss = np.random.SeedSequence(
            [cfg.master_seed, 2, shape_index, trial, m_idx]
        )
        seed = int(ss.generate_state(1)[0])
        rng = np.random.default_rng(ss)
        noise_rng = rng if cfg.train_noise else None
        if method == "optimal":
            raw, n_tr = _run_optimal(cfg, setup, h_true)
        elif method == "cam":
            raw, n_tr = _run_cam(cfg, setup, h_true, reported, noise_rng)
        elif method == "bim":
            raw, n_tr = _run_bim(cfg, setup, h_true, reported, noise_rng)
        elif method == "ls":
            raw, n_tr = _run_ls(cfg, setup, h_true, noise_rng)
        elif method == "omp":
            raw, n_tr = _run_omp(cfg, setup, h_true, rng, noise_rng)
        else:
            raw, n_tr = _run_location(cfg, setup, scene, h_true, reported, noise_rng)
        records.append(
            finish_trial(
                method, setup.dims.n_tx, trial, raw, n_tr,
                cfg.block_length, loc_error, seed,
            )
        )
    return records


def _distinct_locations(region, count, rng):
    # map stores reject duplicate sample locations
    seen = set()
    out = []
    while len(out) < count:
        point = tuple(float(c) for c in region.sample(rng))
        if point in seen:
            continue
        seen.add(point)
        out.append(point)
    return out


def run_experiment(cfg, threads=1):
    """Full study over array sizes, methods, and trials.

    Deterministic for a fixed master seed regardless of ``threads``. Writes
    the records as CSV when the config names an output path.
    """
    if threads < 1:
        raise ValueError(f"threads must be >= 1, got {threads}")
    scene = cfg.scene if cfg.scene is not None else demo_scene()
    path_sets = []
    if "cam" in cfg.methods or "bim" in cfg.methods:
        map_rng = np.random.default_rng(np.random.SeedSequence([cfg.master_seed, 0]))
        locations = _distinct_locations(scene.ue_region, cfg.map_samples, map_rng)
        path_sets = [generate_scene_paths(scene, loc) for loc in locations]
    trial_rng = np.random.default_rng(np.random.SeedSequence([cfg.master_seed, 1]))
    ue_true = [scene.ue_region.sample(trial_rng) for _ in range(cfg.trials)]
    errors = [
        draw_location_error(cfg.location_error_m, trial_rng)
        for _ in range(cfg.trials)
    ]
    records = []
    for s_idx, shape in enumerate(cfg.tx_shapes):
        setup = build_array_setup(cfg, shape, path_sets)

        def work(trial):
            return run_trial(
                cfg, setup, scene, s_idx, trial, ue_true[trial], errors[trial]
            )

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                chunks = list(pool.map(work, range(cfg.trials)))
        else:
            chunks = [work(t) for t in range(cfg.trials)]
        for chunk in chunks:
            records.extend(chunk)
    if cfg.output:
        write_records_csv(records, cfg.output)
    return records


# ---------------------------------------------------------------------------
# results CSV and summaries
# ---------------------------------------------------------------------------


def _g17(value):
    return format(float(value), ".17g")


def write_records_csv(records, stream):
    """Trial records as CSV with 17-significant-digit rates."""
    if isinstance(stream, (str, bytes)) or hasattr(stream, "__fspath__"):
        with open(stream, "w", encoding="utf-8", newline="\n") as fh:
            return write_records_csv(records, fh)
    stream.write(RESULT_HEADER + "\n")
    for r in records:
        row = (
            r.method,
            str(r.n_tx),
            str(r.trial),
            _g17(r.raw_rate),
            str(r.training_symbols),
            _g17(r.effective_rate),
            _g17(r.loc_error_m),
            str(r.seed),
        )
        stream.write(",".join(row) + "\n")


class ResultCsvError(ValueError):
    """Malformed results CSV; the message carries the offending line."""


def read_records_csv(stream):
    """Parse a results CSV back into trial records."""
    if isinstance(stream, (str, bytes)) or hasattr(stream, "__fspath__"):
        with open(stream, "r", encoding="utf-8") as fh:
            return read_records_csv(fh)
    header = stream.readline().rstrip("\n")
    if header != RESULT_HEADER:
        raise ResultCsvError(f"line 1: unexpected header {header!r}")
    records = []
    for line_no, raw in enumerate(stream, start=2):
        line = raw.rstrip("\n")
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 8:
            raise ResultCsvError(f"line {line_no}: expected 8 fields, got {len(parts)}")
        try:
            records.append(
                TrialRecord(
                    method=parts[0],
                    n_tx=int(parts[1]),
                    trial=int(parts[2]),
                    raw_rate=float(parts[3]),
                    training_symbols=int(parts[4]),
                    effective_rate=float(parts[5]),
                    loc_error_m=float(parts[6]),
                    seed=int(parts[7]),
                )
            )
        except ValueError as exc:
            raise ResultCsvError(f"line {line_no}: {exc}") from None
    return records


@dataclass(frozen=True)
class SummaryRow:
    method: str
    n_tx: int
    trials: int
    mean_effective_rate: float
    stderr: float


def summarize(records):
    """Mean effective rate per (method, array size) with standard errors."""
    if not records:
        raise ValueError("need at least one record to summarize")
    groups = {}
    for r in records:
        groups.setdefault((r.method, r.n_tx), []).append(r.effective_rate)
    rows = []
    for method, n_tx in sorted(groups):
        values = np.asarray(groups[(method, n_tx)], dtype=np.float64)
        n = values.size
        stderr = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        rows.append(
            SummaryRow(
                method=method,
                n_tx=n_tx,
                trials=n,
                mean_effective_rate=float(values.mean()),
                stderr=stderr,
            )
        )
    return rows


def write_summary_csv(rows, stream):
    if isinstance(stream, (str, bytes)) or hasattr(stream, "__fspath__"):
        with open(stream, "w", encoding="utf-8", newline="\n") as fh:
            return write_summary_csv(rows, fh)
    stream.write(SUMMARY_HEADER + "\n")
    for row in rows:
        stream.write(
            ",".join(
                (
                    row.method,
                    str(row.n_tx),
                    str(row.trials),
                    _g17(row.mean_effective_rate),
                    _g17(row.stderr),
                )
            )
            + "\n"
        )
