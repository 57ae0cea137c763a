"""Command line interface: ``slowmap simulate|scan-dt|scan-sigma|embed|reproduce``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import ConfigurationError, SlowmapError
from .experiment import PRESETS, ExperimentConfig, default_dt_grid, reproduce, run_experiment

EXIT_CONFIG = 2
EXIT_PIPELINE = 1


def _preset_help() -> str:
    return "\n".join(f"  {name}  {desc}" for name, (desc, _) in PRESETS.items())


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON file mirroring ExperimentConfig")
    common.add_argument("--seed", type=int, help="trajectory and burst seed")
    common.add_argument("--metric", choices=["euclidean", "mahalanobis"])
    common.add_argument("--delta-t", type=float, help="burst horizon")
    common.add_argument("--sigma2", type=float, help="kernel scale sigma^2 (default: auto)")
    common.add_argument("--q", type=int, help="samples per burst")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--record-timing", action="store_true",
                        help="add wall-clock time to summary.json (breaks byte-reproducibility)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="slowmap",
        description="Recover slow variables of multiscale SDE data with "
                    "burst-estimated Mahalanobis diffusion maps.",
        epilog="presets for 'reproduce':\n" + _preset_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="simulate and write trajectory.csv")
    sub.add_parser("scan-dt", parents=[common], help="covariance norm vs burst horizon")
    sub.add_parser("scan-sigma", parents=[common], help="Mahalanobis vs Euclidean distance scan")
    sub.add_parser("embed", parents=[common], help="diffusion-map embedding")
    rep = sub.add_parser("reproduce", parents=[common], help="run a figure preset",
                         epilog="presets:\n" + _preset_help(),
                         formatter_class=argparse.RawDescriptionHelpFormatter)
    rep.add_argument("preset", choices=sorted(PRESETS))
    return parser


def _overrides(args) -> dict:
    o = {}
    if args.seed is not None:
        o["trajectory.seed"] = args.seed
    if args.metric is not None:
        o["metric"] = args.metric
    if args.delta_t is not None:
        o["burst.delta_t"] = args.delta_t
    if args.sigma2 is not None:
        o["dmaps.sigma2"] = args.sigma2
    if args.q is not None:
        o["burst.q"] = args.q
    return o


def _load_config(args) -> ExperimentConfig:
    if args.config is None:
        cfg = ExperimentConfig()
    else:
        try:
            raw = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigurationError(f"cannot read config {args.config}: {err}") from None
        cfg = ExperimentConfig.from_dict(raw)
    cfg = cfg.replace(**_overrides(args)) if _overrides(args) else cfg
    if args.out is not None:
        cfg = cfg.replace(out=str(args.out))
    if cfg.out is None:
        cfg = cfg.replace(out="slowmap-out")
    return cfg


def _run(args) -> None:
    if args.command == "reproduce":
        if args.config is not None:
            raise ConfigurationError("reproduce presets take no --config")
        out = args.out or Path("slowmap-out") / args.preset
        ov = _overrides(args)
        seed = ov.pop("trajectory.seed", 0)
        reproduce(args.preset, out, seed=seed, record_timing=args.record_timing, overrides=ov)
        print(out)
        return
    cfg = _load_config(args)
    if args.command == "simulate":
        run_experiment(cfg, embed=False, sigma_scan=False, record_timing=args.record_timing)
    elif args.command == "scan-dt":
        if cfg.scans.dt_grid is None:
            cfg = cfg.replace(**{"scans.dt_grid": default_dt_grid()})
        run_experiment(cfg, embed=False, sigma_scan=False, record_timing=args.record_timing)
    elif args.command == "scan-sigma":
        run_experiment(cfg, embed=False, sigma_scan=True, record_timing=args.record_timing)
    elif args.command == "embed":
        run_experiment(cfg, embed=True, record_timing=args.record_timing)
    print(cfg.out)


def _one_line(err) -> str:
    return " ".join(str(err).split())


def _origin(err) -> str:
    """Name of the innermost slowmap module in the traceback."""
    name = "slowmap"
    tb = err.__traceback__
    pkg = Path(__file__).parent
    while tb is not None:
        f = Path(tb.tb_frame.f_code.co_filename)
        if f.parent == pkg:
            name = f.stem
        tb = tb.tb_next
    return name


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _run(args)
    except ConfigurationError as err:
        print(f"error: config: {_one_line(err)}", file=sys.stderr)
        return EXIT_CONFIG
    except SlowmapError as err:
        print(f"error: {_origin(err)}: {type(err).__name__}: {_one_line(err)}", file=sys.stderr)
        return EXIT_PIPELINE
    return 0


if __name__ == "__main__":
    sys.exit(main())
