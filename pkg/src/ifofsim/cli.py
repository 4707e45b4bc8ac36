"""Command-line entry point.

    ifofsim profiles [--show NAME]
    ifofsim validate-config CONFIG
    ifofsim run  [--profile P | --config F] [--snr 21] [--ues 1] [--length 40] ...
    ifofsim sweep [--profile P | --config F] [--workers 8] [--out DIR] ...
"""

from __future__ import annotations

import argparse
import json
import sys

from ifofsim.errors import ConfigError, SimulationError
from ifofsim.harness.config import (load_config, load_profile, profile_names, profile_text,
                                    with_overrides)
from ifofsim.harness.outputs import emit_outputs
from ifofsim.harness.pipeline import Point
from ifofsim.harness.sweep import run_sweep


def _add_common(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group()
    src.add_argument("--profile", default=None, help="named profile (see `profiles`)")
    src.add_argument("--config", default=None, help="TOML configuration file")
    p.add_argument("--seed", type=int, default=None, help="override the master seed")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--ideal-fh", action="store_true", help="bypass the optical link")
    p.add_argument("--workers", type=int, default=None, help="worker processes")
    p.add_argument("--no-plots", action="store_true", help="write the CSV only")


def _load(args):
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = load_profile(args.profile or "desk")
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["output_dir"] = args.out
    if args.workers is not None:
        changes["workers"] = args.workers
    if args.no_plots:
        changes["plots"] = False
    if args.ideal_fh:
        changes["ideal_fh"] = [True]
    return with_overrides(cfg, **changes) if changes else cfg


def _summary(result) -> str:
    lines = []
    for r in result.reports:
        tag = "ideal FH" if r.ideal_fh else f"{r.length_km:g} km"
        sinr = " ".join(f"{s:.2f}" for s in r.eff_sinr_db())
        lines.append(f"snr={r.snr_db:g} dB ues={r.n_ues} {tag} drop={r.drop}: "
                     f"cell {r.cell_rate_bps / 1e9:.4f} Gb/s, eff SINR [{sinr}] dB, "
                     f"pre-MIMO {r.pre_mimo_sinr_db:.2f} dB")
    for f in result.failures:
        lines.append(f"FAILED {f.point}: {f.error}")
    return "\n".join(lines)


def cmd_profiles(args) -> int:
    if args.show:
        print(profile_text(args.show), end="")
    else:
        for name in profile_names():
            print(name)
    return 0


def cmd_validate(args) -> int:
    cfg = load_config(args.path)
    n = len(cfg.sweep.snr_db) * len(cfg.sweep.n_ues) * len(cfg.sweep.length_km) \
        * len(cfg.sweep.ideal_fh) * cfg.sweep.n_drops
    print(f"ok: profile={cfg.profile} points={n} hash={cfg.digest()}")
    return 0


def cmd_run(args) -> int:
    cfg = _load(args)
    ax = cfg.sweep
    point = Point(args.snr if args.snr is not None else ax.snr_db[0],
                  args.ues if args.ues is not None else ax.n_ues[0],
                  args.length if args.length is not None else ax.length_km[0],
                  args.drop, args.ideal_fh or ax.ideal_fh[0])
    result = run_sweep(cfg, workers=1, points=[point])
    print(_summary(result))
    for path in emit_outputs(result, cfg.output_dir, cfg.plots, stem="run"):
        print(f"wrote {path}")
    if args.json and result.reports:
        r = result.reports[0]
        print(json.dumps({"meta": r.meta, "cell_rate_bps": r.cell_rate_bps}, default=float))
    return 1 if result.failures else 0


def cmd_sweep(args) -> int:
    cfg = _load(args)
    result = run_sweep(cfg)
    print(_summary(result))
    for path in emit_outputs(result, cfg.output_dir, cfg.plots):
        print(f"wrote {path}")
    return 1 if result.failures else 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ifofsim",
                                 description="IF-over-fiber massive-MIMO fronthaul simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("profiles", help="list the named profiles")
    p.add_argument("--show", metavar="NAME", help="print a profile's TOML")
    p.set_defaults(func=cmd_profiles)

    p = sub.add_parser("validate-config", help="parse and cross-check a config file")
    p.add_argument("path")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="simulate a single point")
    _add_common(p)
    p.add_argument("--snr", type=float, default=None, help="received SNR (dB)")
    p.add_argument("--ues", type=int, default=None, help="number of UEs")
    p.add_argument("--length", type=float, default=None, help="fiber length (km)")
    p.add_argument("--drop", type=int, default=0, help="drop index")
    p.add_argument("--json", action="store_true", help="also print run metadata as JSON")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run the configured sweep")
    _add_common(p)
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, SimulationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
