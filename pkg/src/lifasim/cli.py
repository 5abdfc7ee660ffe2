"""Command-line entry point.

Every subcommand loads an optional YAML config, applies its flags, writes
the resolved config next to its outputs and exits 0.  A failing stage exits
2 with the stage name on stderr; a bad config exits 3.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .config import RunConfig, load_config, parse_config
from .errors import ConfigurationError, StageError
from .report import RunReport, emit_plot_data, enabled_stages, run_experiment, run_stages

OUTPUT_ENV = "LIFASIM_OUTPUT_DIR"
EXIT_STAGE = 2
EXIT_CONFIG = 3

log = logging.getLogger("lifasim")

# subcommand -> stages it runs
COMMANDS = {
    "build": ("build",),
    "place": ("placement",),
    "fault-bench": ("faults",),
    "membench": ("memory",),
    "route-bench": ("routing",),
    "energy-bench": ("energy",),
}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lifasim", description="Neuron-astrocyte SNN fault-tolerance simulator")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("-c", "--config", type=Path, help="YAML run configuration")
        sp.add_argument("-o", "--output-dir", type=Path, help=f"output directory (env {OUTPUT_ENV} wins)")
        sp.add_argument("-v", "--verbose", action="store_true")
        return sp

    common(sub.add_parser("build", help="build the configured network and save it"))
    common(sub.add_parser("place", help="run astrocyte placement on the surrogate task"))
    fb = common(sub.add_parser("fault-bench", help="paired with/without repair fault campaign"))
    fb.add_argument("--faults", type=int, help="faults per trial (n_r)")
    fb.add_argument("--fault-seed", type=int, help="base seed for fault plans")
    fb.add_argument("--fault-scope", help="whole, cluster=C, layer=L or cluster=C,layer=L")
    common(sub.add_parser("membench", help="Hopfield capacity sweep"))
    common(sub.add_parser("route-bench", help="mesh routing under node faults"))
    eb = common(sub.add_parser("energy-bench", help="ARR on/off energy comparison"))
    eb.add_argument("--arr", choices=["off", "account", "dynamics"])
    ra = common(sub.add_parser("run-all", help="every enabled stage plus plot data"))
    ra.add_argument("--arr", choices=["off", "account", "dynamics"])
    ep = sub.add_parser("export-plots", help="plot CSVs from saved reports")
    ep.add_argument("reports", nargs="+", type=Path, help="report.json files or run directories")
    ep.add_argument("-o", "--output-dir", type=Path)
    ep.add_argument("-v", "--verbose", action="store_true")
    return p


def _resolve(args) -> tuple[RunConfig, Path]:
    cfg = load_config(args.config) if args.config else parse_config({})
    updates: dict = {}
    if getattr(args, "faults", None) is not None:
        updates.setdefault("faults", {})["n_r"] = args.faults
    if getattr(args, "fault_seed", None) is not None:
        updates.setdefault("faults", {})["plan_seed"] = args.fault_seed
    if getattr(args, "fault_scope", None) is not None:
        updates.setdefault("faults", {})["scope"] = args.fault_scope
    if getattr(args, "arr", None) is not None:
        updates.setdefault("energy", {})["arr"] = args.arr
    if updates:
        data = cfg.model_dump()
        for section, values in updates.items():
            data[section].update(values)
        cfg = parse_config(data)
    out = os.environ.get(OUTPUT_ENV) or args.output_dir or cfg.output_dir
    return cfg, Path(out)


def _export(args) -> int:
    reports = []
    for path in args.reports:
        f = path / "report.json" if path.is_dir() else path
        reports.append(RunReport.from_json(f.read_text()))
    first = args.reports[0] if args.reports[0].is_dir() else args.reports[0].parent
    out = Path(os.environ.get(OUTPUT_ENV) or args.output_dir or first / "plots")
    for written in emit_plot_data(reports, out):
        print(written)
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "export-plots":
            return _export(args)
        cfg, out = _resolve(args)
        if args.command == "run-all":
            log.info("stages: %s", ", ".join(enabled_stages(cfg)))
            run_experiment(cfg, out)
        else:
            run_stages(cfg, COMMANDS[args.command], out)
    except ConfigurationError as exc:
        print(f"lifasim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"lifasim: stage '{exc.stage}' failed: {exc.cause!r}", file=sys.stderr)
        return EXIT_STAGE
    print(out / "summary.json")
    return 0


if __name__ == "__main__":
    sys.exit(main())
