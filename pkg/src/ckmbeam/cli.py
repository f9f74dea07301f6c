"""Command line front end: run studies, build map databases, inspect results.

Subcommands:
  run         execute a configured study and write the trial records CSV
  build-map   sample a scene and persist a CAM or BIM database
  import-paths  validate an external path CSV and report what it holds
  summarize   aggregate a records CSV into per-method mean effective rates
"""

import argparse
import dataclasses
import sys

import numpy as np

from . import ckm
from .channels import (
    PathCsvError,
    export_paths_csv,
    generate_scene_paths,
    import_paths_csv,
)
from .experiments import (
    ResultCsvError,
    build_array_setup,
    demo_scene,
    load_config,
    read_records_csv,
    run_experiment,
    summarize,
    write_summary_csv,
    _distinct_locations,
)


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="ckmbeam",
        description="Map-aided hybrid beamforming studies for mmWave massive MIMO.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a configured study")
    run_p.add_argument("--config", required=True, help="JSON config file")
    run_p.add_argument("--out", required=True, help="records CSV destination")
    run_p.add_argument("--seed", type=int, default=None,
                       help="override the config master seed")
    run_p.add_argument("--threads", type=int, default=1,
                       help="concurrent trials per array size")

    map_p = sub.add_parser("build-map", help="build and save a map database")
    map_p.add_argument("--kind", required=True, choices=("cam", "bim"))
    map_p.add_argument("--samples", required=True, type=int,
                       help="number of map sample locations")
    map_p.add_argument("--out", required=True, help="database destination")
    map_p.add_argument("--config", default=None,
                       help="JSON config for scene and array settings")
    map_p.add_argument("--shape", default=None, metavar="ZxY",
                       help="transmit array shape, e.g. 16x16 (default: first "
                            "configured shape)")

    imp_p = sub.add_parser("import-paths", help="validate an external path CSV")
    imp_p.add_argument("csv", help="path CSV file")
    imp_p.add_argument("--out", default=None,
                       help="re-export the parsed paths to this CSV")

    sum_p = sub.add_parser("summarize", help="aggregate a records CSV")
    sum_p.add_argument("csv", help="records CSV from a run")
    sum_p.add_argument("--out", default=None, help="write the table as CSV")
    return parser


def _print_summary(rows, stream):
    stream.write(
        f"{'method':<10s} {'M_t':>5s} {'trials':>6s} "
        f"{'mean_eff_rate':>13s} {'stderr':>8s}\n"
    )
    for r in rows:
        stream.write(
            f"{r.method:<10s} {r.n_tx:>5d} {r.trials:>6d} "
            f"{r.mean_effective_rate:>13.4f} {r.stderr:>8.4f}\n"
        )


def _cmd_run(args, stdout):
    cfg = load_config(args.config)
    updates = {"output": args.out}
    if args.seed is not None:
        updates["master_seed"] = args.seed
    cfg = dataclasses.replace(cfg, **updates)
    records = run_experiment(cfg, threads=args.threads)
    stdout.write(f"{len(records)} records -> {args.out}\n")
    _print_summary(summarize(records), stdout)
    return 0


def _parse_shape(text):
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise ValueError(f"shape must look like 16x16, got {text!r}")
    return (int(parts[0]), int(parts[1]))


def _cmd_build_map(args, stdout):
    if args.samples < 1:
        raise ValueError(f"--samples must be >= 1, got {args.samples}")
    if args.config is not None:
        cfg = load_config(args.config)
    else:
        # map construction never touches the transmit power
        cfg = load_config({"snr": 1.0})
    shape = _parse_shape(args.shape) if args.shape else cfg.tx_shapes[0]
    cfg = dataclasses.replace(
        cfg,
        tx_shapes=(shape,),
        methods=(args.kind,),
        map_samples=args.samples,
    )
    scene = cfg.scene if cfg.scene is not None else demo_scene()
    rng = np.random.default_rng(np.random.SeedSequence([cfg.master_seed, 0]))
    locations = _distinct_locations(scene.ue_region, args.samples, rng)
    path_sets = [generate_scene_paths(scene, loc) for loc in locations]
    setup = build_array_setup(cfg, shape, path_sets)
    db = setup.cam_db if args.kind == "cam" else setup.bim_db
    ckm.save(db, args.out)
    entries = db.cam_entries if args.kind == "cam" else db.bim_entries
    stdout.write(
        f"{args.kind} database: {len(entries)} samples, "
        f"tx {shape[0]}x{shape[1]} -> {args.out}\n"
    )
    return 0


def _cmd_import_paths(args, stdout):
    path_sets = import_paths_csv(args.csv)
    n_paths = sum(len(ps.paths) for ps in path_sets)
    stdout.write(f"{len(path_sets)} locations, {n_paths} paths\n")
    if args.out:
        export_paths_csv(path_sets, args.out)
        stdout.write(f"normalized copy -> {args.out}\n")
    return 0


def _cmd_summarize(args, stdout):
    rows = summarize(read_records_csv(args.csv))
    if args.out:
        write_summary_csv(rows, args.out)
    _print_summary(rows, stdout)
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "build-map": _cmd_build_map,
    "import-paths": _cmd_import_paths,
    "summarize": _cmd_summarize,
}


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args, sys.stdout)
    except (ValueError, OSError, PathCsvError, ResultCsvError,
            ckm.CkmFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
