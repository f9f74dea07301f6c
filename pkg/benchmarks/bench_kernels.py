"""Times the jit kernels against their pure-numpy twins.

Run from the repository root:

    python3 benchmarks/bench_kernels.py

The script re-invokes itself once per backend so that each child process
imports the package under the right CKMBEAM_NO_NUMBA setting, then prints a
side-by-side table. Pass --backend to time one backend and emit JSON.
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def bench_upa_response(reps):
    from ckmbeam import _kernels

    rng = np.random.default_rng(1)
    zeniths = rng.uniform(0.3, np.pi / 2.0, size=4096)
    azimuths = rng.uniform(-np.pi / 3.0, np.pi / 3.0, size=4096)
    _kernels.upa_response(16, 16, 0.5, zeniths[:4], azimuths[:4])
    start = time.perf_counter()
    for _ in range(reps):
        _kernels.upa_response(16, 16, 0.5, zeniths, azimuths)
    return (time.perf_counter() - start) / reps


def bench_selection_search(reps):
    from ckmbeam import _kernels
    from ckmbeam.arrays import UpaGeometry
    from ckmbeam.codebooks import kronecker_dft_codebook

    tx = kronecker_dft_codebook(UpaGeometry(2, 6)).beams
    rx = kronecker_dft_codebook(UpaGeometry(2, 4)).beams
    rng = np.random.default_rng(2)
    h = rng.standard_normal((8, 12)) + 1j * rng.standard_normal((8, 12))
    coupling = rx.conj().T @ h @ tx
    tx_gram = tx.conj().T @ tx
    rx_gram = rx.conj().T @ rx
    # 220 transmit subsets x 56 receive subsets per call
    _kernels.search_selection_pairs(coupling, rx_gram, tx_gram, 3, 3, 100.0)
    start = time.perf_counter()
    for _ in range(reps):
        _kernels.search_selection_pairs(coupling, rx_gram, tx_gram, 3, 3, 100.0)
    return (time.perf_counter() - start) / reps


def bench_waterfill(reps):
    from ckmbeam import _kernels

    rng = np.random.default_rng(3)
    gains = rng.uniform(0.1, 50.0, size=(reps, 8))
    _kernels.waterfill(gains[0])
    start = time.perf_counter()
    for row in gains:
        _kernels.waterfill(row)
    return (time.perf_counter() - start) / reps


BENCHES = (
    ("upa_response", bench_upa_response, 20),
    ("selection_search", bench_selection_search, 3),
    ("waterfill", bench_waterfill, 20_000),
)


def run_backend(scale):
    from ckmbeam import _kernels

    timings = {}
    for name, fn, reps in BENCHES:
        timings[name] = fn(max(1, int(reps * scale)))
    return {"backend": _kernels.active_backend(), "timings": timings}


def child_result(use_numba, scale):
    env = dict(os.environ)
    if use_numba:
        env.pop("CKMBEAM_NO_NUMBA", None)
    else:
        env["CKMBEAM_NO_NUMBA"] = "1"
    cmd = [sys.executable, os.path.abspath(__file__), "--backend", "--scale", str(scale)]
    out = subprocess.run(cmd, env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--backend", action="store_true",
                        help="time the current backend only and print JSON")
    parser.add_argument("--scale", type=float, default=1.0,
                        help="multiply every repetition count (default 1.0)")
    args = parser.parse_args(argv)
    if args.backend:
        print(json.dumps(run_backend(args.scale)))
        return 0
    fast = child_result(True, args.scale)
    slow = child_result(False, args.scale)
    print(f"backends: {fast['backend']} vs {slow['backend']}")
    print(f"{'kernel':<18} {fast['backend']:>12} {slow['backend']:>12} {'speedup':>9}")
    for name, _, _ in BENCHES:
        a = fast["timings"][name]
        b = slow["timings"][name]
        print(f"{name:<18} {a * 1e3:>10.3f}ms {b * 1e3:>10.3f}ms {b / a:>8.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
