"""Hot numeric kernels with compiled and pure-numpy twins.

Two spots in the toolkit are dominated by per-element or per-iteration Python
overhead rather than BLAS time: planar-array response assembly (called for
every map sample and every training design) and the exhaustive RF selection
search (up to 10^6 candidate pairs, each a small eigendecomposition plus a
water-filling solve). Both live here twice: a numba ``@njit`` version and a
plain numpy version. The compiled path is the default whenever numba imports;
setting ``CKMBEAM_NO_NUMBA=1`` forces the numpy path. Twin pairs implement the
same algorithm so either backend returns the same selections and allocations
up to floating-point noise.
"""

import itertools
import math
import os

import numpy as np

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - environment without numba
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


_ENV_FLAG = "CKMBEAM_NO_NUMBA"


def numba_active():
    """True when the compiled twins are selected for dispatch."""
    if not HAS_NUMBA:
        return False
    return os.environ.get(_ENV_FLAG, "").strip() in ("", "0")


def active_backend():
    return "numba" if numba_active() else "numpy"


# ---------------------------------------------------------------------------
# water-filling core
#
# Shared by both backends (tiny vectors, scalar arithmetic only), so the two
# dispatch paths produce bit-identical allocations.
# ---------------------------------------------------------------------------


def _waterfill_source(gains):
    # gains[i] = snr * sigma_i^2, nonnegative. Returns (rho, water level).
    n = gains.shape[0]
    rho = np.zeros(n, np.float64)
    lo = 0.0
    have = False
    for i in range(n):
        if gains[i] > 0.0:
            inv = 1.0 / gains[i]
            if not have or inv < lo:
                lo = inv
                have = True
    if not have:
        return rho, 0.0
    width = 1.0
    hi = lo + width
    for _ in range(200):
        s = 0.0
        for i in range(n):
            if gains[i] > 0.0:
                d = hi - 1.0 / gains[i]
                if d > 0.0:
                    s += d
        if s >= 1.0:
            break
        width *= 2.0
        hi = lo + width
    mu = 0.5 * (lo + hi)
    for _ in range(500):
        mu = 0.5 * (lo + hi)
        s = 0.0
        for i in range(n):
            if gains[i] > 0.0:
                d = mu - 1.0 / gains[i]
                if d > 0.0:
                    s += d
        if abs(s - 1.0) <= 1e-12:
            break
        if s < 1.0:
            lo = mu
        else:
            hi = mu
    # Pin the simplex constraint exactly: solve the water level in closed form
    # on the active set the bisection bracketed, keeping the bisection value
    # if the closed form would flip the set.
    count = 0
    inv_sum = 0.0
    for i in range(n):
        if gains[i] > 0.0 and mu > 1.0 / gains[i]:
            count += 1
            inv_sum += 1.0 / gains[i]
    if count > 0:
        mu_exact = (1.0 + inv_sum) / count
        s = 0.0
        for i in range(n):
            if gains[i] > 0.0:
                d = mu_exact - 1.0 / gains[i]
                if d > 0.0:
                    s += d
        if abs(s - 1.0) <= 1e-12:
            mu = mu_exact
    for i in range(n):
        if gains[i] > 0.0:
            d = mu - 1.0 / gains[i]
            if d > 0.0:
                rho[i] = d
    return rho, mu


_waterfill_jit = njit(cache=True)(_waterfill_source)


def waterfill(gains):
    """Split one unit of power over channels with effective gains ``gains``.

    ``gains[i]`` is the SNR-scaled squared singular value. Returns the power
    shares (zeros when every gain is zero) and the water level.
    """
    g = np.ascontiguousarray(gains, dtype=np.float64)
    if numba_active():
        return _waterfill_jit(g)
    return _waterfill_source(g)


# ---------------------------------------------------------------------------
# planar-array response assembly
# ---------------------------------------------------------------------------


def _upa_response_source(n_z, n_y, spacing, zeniths, azimuths):
    count = zeniths.shape[0]
    total = n_z * n_y
    out = np.empty((total, count), np.complex128)
    scale = 1.0 / math.sqrt(total)
    two_pi_d = 2.0 * math.pi * spacing
    phase_z = np.empty(n_z, np.complex128)
    phase_y = np.empty(n_y, np.complex128)
    for col in range(count):
        step_z = two_pi_d * math.cos(zeniths[col])
        step_y = two_pi_d * math.sin(zeniths[col]) * math.sin(azimuths[col])
        # phases factor over the two axes: n_z + n_y sin/cos pairs per
        # column instead of n_z * n_y
        for m in range(n_z):
            ph = m * step_z
            phase_z[m] = complex(math.cos(ph), math.sin(ph))
        for n in range(n_y):
            ph = n * step_y
            phase_y[n] = scale * complex(math.cos(ph), math.sin(ph))
        for m in range(n_z):
            zc = phase_z[m]
            row = m * n_y
            for n in range(n_y):
                out[row + n, col] = zc * phase_y[n]
    return out


_upa_response_jit = njit(cache=True)(_upa_response_source)


def _upa_response_numpy(n_z, n_y, spacing, zeniths, azimuths):
    two_pi_d = 2.0 * np.pi * spacing
    step_z = two_pi_d * np.cos(zeniths)
    step_y = two_pi_d * np.sin(zeniths) * np.sin(azimuths)
    phase_z = np.exp(1j * np.outer(np.arange(n_z), step_z))
    phase_y = np.exp(1j * np.outer(np.arange(n_y), step_y))
    total = n_z * n_y
    out = (phase_z[:, None, :] * phase_y[None, :, :]).reshape(total, -1)
    out /= math.sqrt(total)
    return out


def upa_response(n_z, n_y, spacing, zeniths, azimuths):
    """Response matrix of an n_z-by-n_y planar array, one column per angle.

    Element (m, n) sits at row m*n_y + n and carries phase
    2*pi*spacing*(m*cos(zenith) + n*sin(zenith)*sin(azimuth)) with positive
    sign; every entry has modulus 1/sqrt(n_z*n_y).
    """
    zen = np.ascontiguousarray(zeniths, dtype=np.float64)
    az = np.ascontiguousarray(azimuths, dtype=np.float64)
    if zen.shape != az.shape or zen.ndim != 1:
        raise ValueError("zenith and azimuth arrays must be 1-D and equal length")
    if numba_active():
        return _upa_response_jit(int(n_z), int(n_y), float(spacing), zen, az)
    return _upa_response_numpy(int(n_z), int(n_y), float(spacing), zen, az)


# ---------------------------------------------------------------------------
# exhaustive RF selection search
# ---------------------------------------------------------------------------


def _next_combination_source(sel, n):
    k = sel.shape[0]
    i = k - 1
    while i >= 0 and sel[i] == i + n - k:
        i -= 1
    if i < 0:
        return False
    sel[i] += 1
    for j in range(i + 1, k):
        sel[j] = sel[j - 1] + 1
    return True


_next_combination_jit = njit(cache=True)(_next_combination_source)


def _conjt_source(a):
    rows, cols = a.shape
    out = np.empty((cols, rows), np.complex128)
    for i in range(rows):
        for j in range(cols):
            out[j, i] = a[i, j].conjugate()
    return out


_conjt_jit = njit(cache=True)(_conjt_source)


def _inv_sqrt_flag_source(a):
    # Inverse matrix square root of a Hermitian PSD matrix, with a validity
    # flag instead of an exception so the compiled search can surface the
    # offending eigenvalue.
    vals, vecs = np.linalg.eigh(a)
    k = vals.shape[0]
    top = vals[k - 1]
    if top <= 0.0 or vals[0] <= 1e-12 * top:
        return np.empty((0, 0), np.complex128), False, vals[0]
    scaled = vecs.copy()
    for j in range(k):
        f = 1.0 / math.sqrt(vals[j])
        for i in range(k):
            scaled[i, j] = scaled[i, j] * f
    return scaled @ _conjt_jit(vecs), True, 0.0


def _inv_sqrt_flag_numpy(a):
    vals, vecs = np.linalg.eigh(a)
    top = float(vals[-1])
    if top <= 0.0 or float(vals[0]) <= 1e-12 * top:
        return np.empty((0, 0), np.complex128), False, float(vals[0])
    return (vecs * (vals**-0.5)) @ vecs.conj().T, True, 0.0


_inv_sqrt_flag_jit = njit(cache=True)(_inv_sqrt_flag_source)


def _search_source(coupling, rx_gram, tx_gram, k_tx, k_rx, snr):
    n_rx = rx_gram.shape[0]
    n_tx = tx_gram.shape[0]
    best_rate = -1.0
    best_tx = np.zeros(k_tx, np.int64)
    best_rx = np.zeros(k_rx, np.int64)
    status = 0
    bad_eig = 0.0
    ln2 = math.log(2.0)
    tx_gram_sub = np.empty((k_tx, k_tx), np.complex128)
    rx_gram_sub = np.empty((k_rx, k_rx), np.complex128)
    block = np.empty((k_rx, k_tx), np.complex128)
    tx_sel = np.arange(k_tx)
    while True:
        for a in range(k_tx):
            for b in range(k_tx):
                tx_gram_sub[a, b] = tx_gram[tx_sel[a], tx_sel[b]]
        tx_white, ok, ev = _inv_sqrt_flag_jit(tx_gram_sub)
        if not ok:
            status = 1
            bad_eig = ev
            break
        rx_sel = np.arange(k_rx)
        inner_fail = False
        while True:
            for a in range(k_rx):
                for b in range(k_rx):
                    rx_gram_sub[a, b] = rx_gram[rx_sel[a], rx_sel[b]]
            rx_white, ok2, ev2 = _inv_sqrt_flag_jit(rx_gram_sub)
            if not ok2:
                status = 2
                bad_eig = ev2
                inner_fail = True
                break
            for a in range(k_rx):
                for b in range(k_tx):
                    block[a, b] = coupling[rx_sel[a], tx_sel[b]]
            ht = rx_white @ (block @ tx_white)
            hh = ht @ _conjt_jit(ht)
            s2 = np.linalg.eigvalsh(hh)
            gains = np.empty(k_rx, np.float64)
            for i in range(k_rx):
                g = snr * s2[i]
                gains[i] = g if g > 0.0 else 0.0
            rho, _ = _waterfill_jit(gains)
            r = 0.0
            for i in range(k_rx):
                if rho[i] > 0.0:
                    r += math.log(1.0 + gains[i] * rho[i]) / ln2
            if r > best_rate:
                best_rate = r
                for i in range(k_tx):
                    best_tx[i] = tx_sel[i]
                for i in range(k_rx):
                    best_rx[i] = rx_sel[i]
            if not _next_combination_jit(rx_sel, n_rx):
                break
        if inner_fail or not _next_combination_jit(tx_sel, n_tx):
            break
    return best_tx, best_rx, best_rate, status, bad_eig


_search_jit = njit(cache=True)(_search_source) if HAS_NUMBA else None


def _search_numpy(coupling, rx_gram, tx_gram, k_tx, k_rx, snr):
    n_rx = rx_gram.shape[0]
    n_tx = tx_gram.shape[0]
    best_rate = -1.0
    best_tx = np.zeros(k_tx, np.int64)
    best_rx = np.zeros(k_rx, np.int64)
    ln2 = math.log(2.0)
    rx_combos = list(itertools.combinations(range(n_rx), k_rx))
    rx_whites = []
    for rx_sel in rx_combos:
        idx = np.asarray(rx_sel)
        white, ok, ev = _inv_sqrt_flag_numpy(rx_gram[np.ix_(idx, idx)])
        if not ok:
            return best_tx, best_rx, best_rate, 2, ev
        rx_whites.append(white)
    for tx_sel in itertools.combinations(range(n_tx), k_tx):
        tx_idx = np.asarray(tx_sel)
        tx_white, ok, ev = _inv_sqrt_flag_numpy(tx_gram[np.ix_(tx_idx, tx_idx)])
        if not ok:
            return best_tx, best_rx, best_rate, 1, ev
        for rx_pos, rx_sel in enumerate(rx_combos):
            rx_idx = np.asarray(rx_sel)
            ht = rx_whites[rx_pos] @ coupling[np.ix_(rx_idx, tx_idx)] @ tx_white
            s2 = np.linalg.eigvalsh(ht @ ht.conj().T)
            gains = np.where(s2 > 0.0, snr * s2, 0.0)
            rho, _ = _waterfill_source(gains)
            active = rho > 0.0
            r = float(np.sum(np.log(1.0 + gains[active] * rho[active])) / ln2)
            if r > best_rate:
                best_rate = r
                best_tx = tx_idx.astype(np.int64)
                best_rx = rx_idx.astype(np.int64)
    return best_tx, best_rx, best_rate, 0, 0.0


def search_selection_pairs(coupling, rx_gram, tx_gram, k_tx, k_rx, snr):
    """Exhaustively score every (tx subset, rx subset) RF selection pair.

    ``coupling`` is the full-codebook response W^H H F, ``rx_gram``/``tx_gram``
    the codebook Gram matrices. Enumeration is lexicographic with the transmit
    subset as the outer loop; ties keep the first maximum. Returns
    (tx indices, rx indices, rate, status, offending eigenvalue) where status
    1/2 marks a singular transmit/receive sub-Gram.
    """
    c = np.ascontiguousarray(coupling, dtype=np.complex128)
    gw = np.ascontiguousarray(rx_gram, dtype=np.complex128)
    gf = np.ascontiguousarray(tx_gram, dtype=np.complex128)
    if numba_active():
        return _search_jit(c, gw, gf, int(k_tx), int(k_rx), float(snr))
    return _search_numpy(c, gw, gf, int(k_tx), int(k_rx), float(snr))


def warm_up():
    """Trigger JIT compilation of every compiled twin on toy inputs."""
    if not numba_active():
        return
    upa_response(2, 2, 0.5, np.array([1.0]), np.array([0.5]))
    eye2 = np.eye(2, dtype=np.complex128)
    search_selection_pairs(eye2, 2.0 * eye2, 3.0 * eye2, 1, 1, 1.0)
