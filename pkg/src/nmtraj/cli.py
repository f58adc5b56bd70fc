"""Command-line runner: ``nmtraj run`` and ``nmtraj batch``.

Exit status: 0 success, 2 invalid configuration, 3 numerical fault
(window overflow, probability budget exceeded, failed batch worker).
"""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigurationError, NumericalFault
from .experiments import MODES, execute, load_config

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

# flag name -> dotted config key
_FLAGS = {
    "mode": "mode",
    "gamma": "physics.gamma", "omega": "physics.omega_rabi", "kappa": "physics.kappa",
    "nu": "physics.nu", "band_width": "physics.band_width", "band_centers": "physics.band_centers",
    "t_m": "physics.t_m", "dt": "physics.dt", "prism_method": "physics.prism_method",
    "duration": "run.duration", "target_detections": "run.target_detections",
    "max_duration": "run.max_duration", "n_trajectories": "run.n_trajectories", "seed": "run.seed",
    "trace_stride": "run.trace_stride", "n_workers": "run.n_workers",
    "max_in_window": "run.max_in_window", "shorten_above": "run.shorten_above",
    "on_excess": "run.on_excess", "n_max": "run.n_max",
    "t_max": "analysis.t_max", "n_bins": "analysis.n_bins", "input": "analysis.inputs",
    "reference": "analysis.reference", "out_dir": "io.out_dir",
}


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nmtraj", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "run one configuration"),
                        ("batch", "run n_trajectories independent trajectories and aggregate")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--mode", choices=MODES)
        for flag in ("gamma", "omega", "kappa", "nu", "band_width", "t_m", "dt", "duration",
                     "max_duration", "t_max"):
            p.add_argument("--" + flag.replace("_", "-"), dest=flag, type=float)
        p.add_argument("--band-centers", dest="band_centers", type=float, nargs="+")
        p.add_argument("--on-excess", dest="on_excess", choices=("raise", "rescale"),
                       help="policy when per-step detection probabilities sum above one")
        p.add_argument("--prism-method", dest="prism_method", choices=("firls", "window"))
        for flag in ("target_detections", "n_trajectories", "seed", "trace_stride", "n_workers",
                     "max_in_window", "shorten_above", "n_max", "n_bins"):
            p.add_argument("--" + flag.replace("_", "-"), dest=flag, type=int)
        p.add_argument("--input", action="append", help="detections file (analyze/compare)")
        p.add_argument("--reference", action="append",
                       help="comma-separated detections files forming one reference realisation")
        p.add_argument("--out-dir", dest="out_dir")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    over = {}
    for flag, key in _FLAGS.items():
        val = getattr(args, flag, None)
        if val is None:
            continue
        if flag == "reference":
            val = [v.split(",") for v in val]
        over[key] = val
    try:
        cfg = load_config(args.config, over)
        if args.command == "batch" and cfg.run["n_trajectories"] < 1:
            raise ConfigurationError("run.n_trajectories: must be >= 1")
        summary = execute(cfg)
    except ConfigurationError as exc:
        print(f"nmtraj: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFault as exc:
        print(f"nmtraj: numerical fault: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except FileNotFoundError as exc:
        print(f"nmtraj: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"nmtraj: {cfg.mode} done -> {cfg.out_dir}")
    if "detections" in summary:
        print(f"  detections: {summary['detections']['total']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
