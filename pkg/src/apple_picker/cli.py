"""Command-line entry point: ``pick``, ``synth``, ``evaluate`` and ``bench``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from .config import PRESETS, Config, load_config_file, load_preset
from .micrograph_io import read_box, write_mrc, write_picks

log = logging.getLogger("apple_picker")

# flag dest -> Config field
_PICK_FLAGS = {
    "particle_size": "particle_size",
    "query_size": "query_size",
    "container_size": "container_size",
    "tau1": "tau1",
    "tau2": "tau2",
    "bin": "bin_factor",
    "crop": "border_crop",
    "threshold_divisor": "threshold_divisor",
    "svm_bandwidth": "svm_bandwidth",
    "svm_slack": "svm_slack",
    "min_pixels": "min_pixels",
    "max_pixels": "max_pixels",
    "min_diameter": "min_diameter",
    "max_diameter": "max_diameter",
    "erosion_radius": "erosion_radius",
    "min_distance": "min_center_distance",
    "out_format": "out_format",
    "threads": "threads",
    "ctf_sidecar": "ctf_sidecar",
    "overlay": "overlay",
    "save_scores": "save_scores",
}


def _add_pick_options(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("picking")
    g.add_argument("--particle-size", type=int, help="particle diameter in original pixels")
    g.add_argument("--query-size", type=int, help="query window size n in binned pixels (even)")
    g.add_argument("--container-size", type=int)
    g.add_argument("--tau1", type=float, help="percent of top queries used as particle examples")
    g.add_argument("--tau2", type=float, help="percent of top queries that may hold particles")
    g.add_argument("--bin", type=int, help="binning factor")
    g.add_argument("--crop", type=int, help="border crop in original pixels")
    g.add_argument("--threshold-divisor", type=float)
    g.add_argument("--svm-bandwidth", type=float)
    g.add_argument("--svm-slack", type=float)
    g.add_argument("--min-pixels", type=float, help="smallest cluster kept (binned pixels)")
    g.add_argument("--max-pixels", type=float, help="largest cluster kept (binned pixels)")
    g.add_argument("--min-diameter", type=float, help="diameter filter lower bound (original pixels)")
    g.add_argument("--max-diameter", type=float, help="diameter filter upper bound (original pixels)")
    g.add_argument("--erosion-radius", type=float, help="erosion disk radius (binned pixels)")
    g.add_argument("--min-distance", type=float, help="minimum pick separation (original pixels)")
    g.add_argument("--out-format", choices=("box", "star"))
    g.add_argument("--threads", type=int)
    g.add_argument("--ctf-sidecar", help="CTF key=value file, or a directory of <stem>.ctf files")
    g.add_argument("--overlay", action="store_const", const=True, default=None,
                   help="write a PNG overlay and a PGM mask per micrograph")
    g.add_argument("--save-scores", action="store_const", const=True, default=None,
                   help="write the per-query score grid as CSV")
    g.add_argument("--preset", choices=PRESETS)
    g.add_argument("--config", help="TOML or INI settings file")


def build_config(args: argparse.Namespace, base: Config | None = None) -> Config:
    """Defaults, then preset, then config file, then explicit flags."""
    cfg = base or Config()
    if getattr(args, "preset", None):
        cfg = cfg.updated(load_preset(args.preset))
    if getattr(args, "config", None):
        cfg = cfg.updated(load_config_file(args.config))
    flags = {}
    for dest, name in _PICK_FLAGS.items():
        value = getattr(args, dest, None)
        if value is not None:
            flags[name] = value
    return cfg.updated(flags)


def _cmd_pick(args) -> int:
    from .pipeline import run

    cfg = build_config(args).validate()
    reports = run(cfg, args.inputs, args.out_dir)
    ok = sum(r.status == "ok" for r in reports)
    for r in reports:
        if r.status == "ok":
            print(f"{r.path}\t{r.picks} picks\t{r.seconds:.1f} s")
        else:
            print(f"{r.path}\tFAILED\t{r.error}", file=sys.stderr)
    if ok == len(reports):
        return 0
    return 2 if ok == 0 else 1


def _cmd_synth(args) -> int:
    from .synth import generate, write_truth_csv

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for seed in range(args.seed, args.seed + args.count):
        m, truth = generate(args.width, args.height, args.num_particles, args.diameter, args.snr, seed)
        stem = out / f"synth_{seed:04d}"
        write_mrc(m, stem.with_suffix(".mrc"))
        write_truth_csv(truth, stem.with_suffix(".csv"))
        print(stem.with_suffix(".mrc"))
    return 0


def _cmd_evaluate(args) -> int:
    from .synth import evaluate, read_truth_csv, write_eval_report

    truth = read_truth_csv(args.truth)
    picks = read_box(args.picks)
    radius = args.match_radius if args.match_radius is not None else truth.particle_diameter / 4.0
    result = evaluate(picks, truth, radius)
    out = Path(args.report) if args.report else Path(args.picks).with_suffix(".eval.csv")
    print(write_eval_report(result, out, out.with_suffix(".txt")))
    return 0


def _cmd_bench(args) -> int:
    from .pipeline import pick_micrograph
    from .plotting import save_benchmark_figure, save_overlay
    from .synth import benchmark_config, evaluate, generate

    cfg = build_config(args, benchmark_config(args.diameter)).validate()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    radius = args.match_radius if args.match_radius is not None else args.diameter / 4.0
    rows = []
    for seed in range(args.seed, args.seed + args.count):
        m, truth = generate(args.width, args.height, args.num_particles, args.diameter, args.snr, seed)
        outcome = pick_micrograph(m, cfg)
        res = evaluate(outcome.picks, truth, radius)
        write_picks(outcome.picks, out / f"bench_{seed:04d}.{cfg.out_format}", cfg.out_format)
        if cfg.overlay:
            save_overlay(outcome, out / f"bench_{seed:04d}_overlay.png", truth=truth)
        rows.append({"seed": seed, "precision": res.precision, "recall": res.recall,
                     "error": res.mean_localization_error, "picks": res.n_picks,
                     "seconds": outcome.timings["total"]})
        print(f"seed {seed}\tP {res.precision:.3f}\tR {res.recall:.3f}\t"
              f"err {res.mean_localization_error:.2f}\t{outcome.timings['total']:.1f} s")
    with open(out / "bench.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    save_benchmark_figure(rows, out / "bench.png")
    print(f"mean\tP {np.mean([r['precision'] for r in rows]):.3f}\t"
          f"R {np.mean([r['recall'] for r in rows]):.3f}")
    return 0


def _add_synth_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--width", type=int, default=1024)
    p.add_argument("--height", type=int, default=1024)
    p.add_argument("--num-particles", type=int, default=40)
    p.add_argument("--diameter", type=int, default=40)
    p.add_argument("--snr", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=1, help="number of consecutive seeds")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="apple-picker", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pick", help="pick particles in MRC micrographs")
    p.add_argument("inputs", nargs="+", help="MRC files")
    p.add_argument("-o", "--out-dir", default="picks")
    _add_pick_options(p)
    p.set_defaults(func=_cmd_pick)

    s = sub.add_parser("synth", help="write synthetic micrographs with ground truth")
    _add_synth_options(s)
    s.add_argument("-o", "--out-dir", default="synthetic")
    s.set_defaults(func=_cmd_synth)

    e = sub.add_parser("evaluate", help="score a box file against ground truth")
    e.add_argument("picks")
    e.add_argument("truth")
    e.add_argument("--match-radius", type=float, help="default: a quarter of the particle diameter")
    e.add_argument("--report", help="CSV report path (a .txt summary is written next to it)")
    e.set_defaults(func=_cmd_evaluate)

    b = sub.add_parser("bench", help="pick and score synthetic micrographs over several seeds")
    _add_synth_options(b)
    b.add_argument("-o", "--out-dir", default="bench")
    b.add_argument("--match-radius", type=float)
    _add_pick_options(b)
    b.set_defaults(func=_cmd_bench, count=10)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
