"""birefsim command line: simulate, sweep, route, fit, presets."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import yaml

from . import __version__
from .config import PRESETS, ConfigError, load_config, serialize

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

log = logging.getLogger("birefsim")


def _scenario_args(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="scenario YAML file")
    p.add_argument("--preset", help="start from a bundled preset (see 'presets list')")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config field, e.g. system.kappa_mhz=2.0 (repeatable)")
    p.add_argument("--out", type=Path, help="output directory (default runs/<scenario name>)")
    p.add_argument("--plots", action="store_true", help="also write PNG figures")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="birefsim", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one scenario")
    _scenario_args(p)

    p = sub.add_parser("sweep", help="run the scenario's sweep section, one run per value")
    _scenario_args(p)
    p.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    p.add_argument("--parameter", help="config path to sweep (replaces the scenario's sweep)")
    p.add_argument("--values", help="comma-separated values for --parameter")

    p = sub.add_parser("route", help="routing fraction against QWP angle")
    _scenario_args(p)
    p.add_argument("--angles", metavar="START:STOP:STEP", help="angle grid in degrees")
    p.add_argument("--birefringence", choices=("on", "off", "both"), default="both")

    p = sub.add_parser("fit", help="fit a double Lorentzian to a transmission scan")
    p.add_argument("scan", type=Path, help="CSV with header detuning_mhz,transmission")
    p.add_argument("--out", type=Path, help="directory for fit.csv and fit.txt")
    p.add_argument("--plots", action="store_true")
    p.add_argument("--per-peak-widths", action="store_true", help="fit each peak with its own width")

    p = sub.add_parser("presets", help="list or show bundled presets")
    p.add_argument("action", choices=("list", "show"))
    p.add_argument("name", nargs="?")
    return parser


def _scenario(args, extra=()):
    return load_config(args.config, args.preset, list(args.overrides) + list(extra))


def _out(args, scenario) -> Path:
    return args.out if args.out is not None else Path("runs") / scenario.name


def cmd_simulate(args) -> int:
    from .runner import run

    scenario = _scenario(args)
    out = _out(args, scenario)
    manifest = run(scenario, out, args.plots)
    print(f"{scenario.name}: wrote {len(manifest.outputs)} files to {out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .runner import sweep

    extra = []
    if args.parameter or args.values:
        if not (args.parameter and args.values):
            raise ConfigError("--parameter and --values go together")
        values = [yaml.safe_load(v) for v in args.values.split(",")]
        extra = [("sweep", {"parameter": args.parameter, "values": values})]
    scenario = _scenario(args, extra)
    if scenario.sweep is None:
        raise ConfigError("sweep: scenario has no sweep section (use --parameter/--values)")
    if args.workers < 1:
        raise ConfigError("--workers must be at least 1")
    out = _out(args, scenario)
    manifest = sweep(scenario, out, args.workers, args.plots)
    print(f"{scenario.name}: {manifest.status}; summary in {out / 'sweep_summary.csv'}")
    return EXIT_OK if manifest.status == "ok" else EXIT_NUMERIC


def cmd_route(args) -> int:
    from .runner import run

    routing = {"birefringence": {"on": [True], "off": [False], "both": [True, False]}[args.birefringence]}
    if args.angles:
        try:
            start, stop, step = (float(x) for x in args.angles.split(":"))
        except ValueError:
            raise ConfigError(f"--angles: expected START:STOP:STEP, got {args.angles!r}") from None
        routing.update(start_deg=start, stop_deg=stop, step_deg=step, angles_deg=None)
    extra = [("outputs.routing", routing), ("outputs.wavepacket_qwp_deg", []),
             ("outputs.basis_fluxes", False), ("outputs.oscillation", None)]
    scenario = _scenario(args, extra)
    out = _out(args, scenario)
    run(scenario, out, args.plots)
    print(f"{scenario.name}: routing curves in {out}")
    return EXIT_OK


def cmd_fit(args) -> int:
    from .characterization import fit_transmission, ingest_scan

    scan = ingest_scan(args.scan)
    fit = fit_transmission(scan, per_peak_widths=args.per_peak_widths)
    print(fit.report(), end="")
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "fit.txt").write_text(fit.report())
        (args.out / "fit.csv").write_text(fit.csv_header() + "\n" + fit.csv_row() + "\n")
        if args.plots:
            from .plotting import fit_figure

            fit_figure(args.out / "fit.png", scan, fit)
    return EXIT_OK


def cmd_presets(args) -> int:
    if args.action == "list":
        width = max(map(len, PRESETS))
        for name, data in PRESETS.items():
            print(f"{name:<{width}}  {data.get('description', '')}")
        return EXIT_OK
    if args.name is None:
        raise ConfigError("presets show: name a preset")
    print(serialize(load_config(preset=args.name)), end="")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "sweep": cmd_sweep, "route": cmd_route,
            "fit": cmd_fit, "presets": cmd_presets}


def main(argv=None) -> int:
    from .characterization import FitError, ScanFormatError
    from .runner import NumericFailure

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ScanFormatError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericFailure, FitError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
