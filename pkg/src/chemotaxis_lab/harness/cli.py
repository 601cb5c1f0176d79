"""Command-line entry point ``chemotaxis-lab``.

Exit codes: 0 success, 2 an invariant or assertion failed, 1 operational
error (bad configuration, unreadable files, solver breakdown).
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from ..dynamics import SimulationError
from . import experiments
from .config import ConfigError, RunConfig, load_config, save_config

EXIT_OK, EXIT_ERROR, EXIT_INVARIANT = 0, 1, 2

SUBCOMMANDS = {
    "simulate": "simulate",
    "energy-check": "energy_check",
    "stationary": "stationary",
    "theta-probe": "theta_probe",
    "sweep": "threshold_sweep",
}


def default_config(experiment: str) -> RunConfig:
    """Built-in configuration for each subcommand when ``--config`` is absent."""
    cfg = RunConfig(experiment=experiment)
    if experiment == "energy_check":
        return cfg.replace(**{"grid.n": 128, "step.dt": 4e-4, "step.t_end": 0.2})
    if experiment == "stationary":
        return cfg.replace(**{"grid": {"kind": "rect", "lx": 2.0, "ly": 0.5, "nx": 64,
                                       "ny": 16}})
    if experiment == "theta_probe":
        return cfg.replace(**{"grid": {"kind": "polar", "radius": 1.0, "nr": 256,
                                       "ntheta": 256},
                              "init.kind": "theta_eta", "init.mass": 1.2 * 4.0 * math.pi})
    if experiment == "threshold_sweep":
        return cfg.replace(**{"step.dt": 1e-3, "step.output_every": 100,
                              "step.resolution_fraction": 0.5,
                              "sweep.masses": [4.0 * math.pi, 16.0 * math.pi]})
    return cfg


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}") from exc


def _grid_override(grid: dict, n: int) -> dict:
    if n < 2:
        raise ConfigError("--grid-n must be at least 2")
    g = dict(grid)
    if g["kind"] == "radial":
        g["n"] = n
    elif g["kind"] == "polar":
        g["nr"] = g["ntheta"] = n
    else:
        g["nx"] = n
        g["ny"] = max(1, round(n * g.get("ly", 1.0) / g.get("lx", 1.0)))
    return g


def apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    ch: dict = {}
    if args.out is not None:
        ch["out_dir"] = args.out
    if args.dt is not None:
        ch["step.dt"] = args.dt
    if args.t_end is not None:
        ch["sweep.horizon" if cfg.experiment == "threshold_sweep" else "step.t_end"] = args.t_end
    if args.grid_n is not None:
        ch["grid"] = _grid_override(cfg.grid, args.grid_n)
    if args.mass is not None:
        masses = _floats(args.mass)
        if cfg.experiment == "threshold_sweep":
            ch["sweep.masses"] = masses
        elif len(masses) != 1:
            raise ConfigError("--mass takes a single value except for sweep")
        else:
            ch["init.mass"] = masses[0]
    if args.eta is not None:
        etas = _floats(args.eta)
        if cfg.experiment == "theta_probe":
            ch["probe.etas"] = etas
        elif len(etas) != 1:
            raise ConfigError("--eta takes a single value except for theta-probe")
        else:
            ch["init.eta"] = etas[0]
    if args.variant is not None:
        ch["model.variant"] = args.variant
    if args.seed is not None:
        ch["seed"] = args.seed
    return cfg.replace(**ch) if ch else cfg


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chemotaxis-lab",
                                description="Chemotaxis with indirect signal production.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path, help="JSON RunConfig")
        s.add_argument("--out", help="output directory")
        s.add_argument("--dt", type=float)
        s.add_argument("--t-end", type=float, help="final time (sweep: horizon)")
        s.add_argument("--grid-n", type=int, help="cells per direction")
        s.add_argument("--mass", help="total mass M (sweep: comma-separated list)")
        s.add_argument("--eta", help="concentration scale (theta-probe: comma-separated list)")
        s.add_argument("--variant", choices=("a1", "tw", "twd"))
        s.add_argument("--seed", type=int)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    experiment = SUBCOMMANDS[args.command]
    try:
        if args.config is not None:
            cfg = load_config(args.config)
            if cfg.experiment != experiment:
                cfg = cfg.replace(experiment=experiment)
        else:
            cfg = default_config(experiment)
        cfg = apply_overrides(cfg, args)
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_config(cfg, out / "config.json")
        result = experiments.run_experiment(cfg)
    except SimulationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # solver breakdown and other operational failures
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    for msg in result.failures:
        print(f"FAIL {msg}", file=sys.stderr)
    print(f"{args.command}: {'ok' if result.ok else 'FAILED'} ({cfg.out_dir}, "
          f"config {cfg.hash()[:12]})")
    return EXIT_OK if result.ok else EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
