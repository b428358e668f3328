"""Command-line entry point: ``mpqkd <rate|sweep|optimize|mc-validate|verify>``."""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .channel import build_click_model
from .config import (DEFAULT_ORIGINS, ConfigError, ScenarioConfig, config_to_flat,
                     dumps_config, load_config, loads_config)
from .decoy import ChernoffError, estimate_asymptotic, estimate_finite, pair_choice_probs
from .entanglement import run_all
from .keyrate import asymptotic_key_rate, finite_key_rate
from .montecarlo import compare_with_analytic, run_monte_carlo
from .pairing import COUNT_KEYS, analytic_pair_counts
from .sweep import (FIGURES, SweepSpec, default_distances, figure_specs, optimize_p_save,
                    run_sweep)

VERIFY_TOL = 1e-12
MC_COUNT_SIGMA = 5.0
MC_PAIRING_SIGMA = 3.0


# --------------------------------------------------------------------------
# output helpers


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def write_json(path: Path, data) -> None:
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    """Everything needed to rerun a command and check its outputs."""

    command: str
    argv: list[str]
    config: dict
    config_text: str
    version: str = __version__
    seeds: list[int] = field(default_factory=list)
    started: str = field(default_factory=_now)
    finished: str = ""
    outputs: list[str] = field(default_factory=list)

    def write(self, out_dir: Path) -> Path:
        self.finished = _now()
        path = out_dir / f"{self.command}.manifest.json"
        write_json(path, asdict(self))
        return path


def load_scenario(path: str | None) -> ScenarioConfig:
    """Read a config file, or the config snapshot inside a run manifest."""
    if path is None:
        return ScenarioConfig().validate()
    if path.endswith(".json"):
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if "config_text" not in data:
            raise ConfigError(path, "JSON input must be a run manifest with a config snapshot")
        return loads_config(data["config_text"])
    return load_config(path)


def _apply_overrides(scenario: ScenarioConfig, args) -> ScenarioConfig:
    if getattr(args, "mode", None):
        scenario = replace(scenario, mode=args.mode)
    if getattr(args, "strategy", None):
        scenario = scenario.with_strategy(kind=args.strategy)
    if getattr(args, "p_save", None) is not None:
        scenario = scenario.with_strategy(p_save=args.p_save)
    if getattr(args, "distance", None) is not None:
        scenario = scenario.at_distance(args.distance)
    return scenario.validate()


def _estimate(scenario, table):
    probs = pair_choice_probs(scenario)
    if scenario.mode == "asymptotic":
        bounds = estimate_asymptotic(table, probs, scenario)
        return bounds, asymptotic_key_rate(bounds, table, scenario.N, scenario.f)
    bounds = estimate_finite(table, probs, scenario)
    return bounds, finite_key_rate(bounds, table, scenario.eps, scenario.N, scenario.f)


def _write_counts_csv(path: Path, tables: dict) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["count", *tables])
        for key in (*COUNT_KEYS, "n_tot"):
            writer.writerow([key, *(repr(float(getattr(t, key))) for t in tables.values())])


# --------------------------------------------------------------------------
# subcommands


def cmd_rate(args, scenario, manifest, out_dir) -> int:
    click_model = build_click_model(scenario)
    table = analytic_pair_counts(scenario, click_model)
    bounds, result = _estimate(scenario, table)
    print(f"distance {scenario.link.total_distance:g} km, {scenario.mode}, "
          f"{scenario.strategy.kind} (p_save={scenario.strategy.p_save:g})")
    print(f"R = {result.R:.6e}  feasible={result.feasible}  E_z={result.E_z:.4g}  "
          f"n11_lower={result.n11_z_lower:.6g}  e11x_upper={result.e11_x_upper:.4g}")
    path = out_dir / "rate.json"
    write_json(path, {"click_model": click_model.as_dict(), "counts": table.as_dict(),
                      "bounds": bounds.as_dict(), "key_rate": result.as_dict()})
    manifest.outputs.append(path.name)
    return 0


def _parse_grid(text: str) -> list[float]:
    try:
        start, stop, step = (float(x) for x in text.split(":"))
    except ValueError:
        raise ConfigError("--grid", f"expected START:STOP:STEP, got {text!r}") from None
    if step <= 0 or stop < start:
        raise ConfigError("--grid", "need STEP > 0 and STOP >= START")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [start + step * i for i in range(count)]


def cmd_sweep(args, scenario, manifest, out_dir) -> int:
    if args.distance is not None:
        grid = [float(args.distance)]
    elif args.grid:
        grid = _parse_grid(args.grid)
    else:
        grid = default_distances()
    strategies = (args.strategy,) if args.strategy else ("original", "flexible")
    if args.figure:
        specs = figure_specs(args.figure, scenario, grid)
    else:
        values = [float(v) for v in args.values.split(",")] if args.values else []
        specs = [SweepSpec(grid, scenario, args.variable, values, strategies,
                           optimize=not args.fixed_p_save, name="sweep")]
    failures = 0
    for spec in specs:
        result = run_sweep(spec)
        csv_path = out_dir / f"{spec.name}.csv"
        csv_path.write_text(result.to_csv(), encoding="utf-8")
        json_path = out_dir / f"{spec.name}.json"
        write_json(json_path, result.as_dict())
        manifest.outputs += [csv_path.name, json_path.name]
        bad = [p for p in result.points if p.error]
        failures += len(bad)
        for p in bad:
            print(f"warning: {spec.name} {p.strategy} at {p.distance_km:g} km failed: {p.error}",
                  file=sys.stderr)
        print(f"{spec.name}: {len(result.points)} points -> {csv_path}")
    return 1 if failures else 0


def cmd_optimize(args, scenario, manifest, out_dir) -> int:
    best = optimize_p_save(scenario)
    print(f"distance {scenario.link.total_distance:g} km, {scenario.mode}: "
          f"p_save* = {best.p_save:.6g}, R* = {best.R:.6e}")
    path = out_dir / "optimize.json"
    write_json(path, {"p_save": best.p_save, "R": best.R, "key_rate": best.result.as_dict()})
    manifest.outputs.append(path.name)
    return 0


def cmd_mc_validate(args, scenario, manifest, out_dir) -> int:
    seed = args.seed
    manifest.seeds.append(seed)
    run = run_monte_carlo(scenario, seed, args.rounds, tagged=args.tagged)
    rows = compare_with_analytic(run, scenario)
    expected = analytic_pair_counts(replace(scenario, N=float(args.rounds)),
                                    build_click_model(scenario))
    ok = True
    print(f"{'quantity':16s} {'expected':>14s} {'observed':>14s} {'z':>7s}")
    for row in rows:
        limit = MC_COUNT_SIGMA if row.name in COUNT_KEYS else MC_PAIRING_SIGMA
        good = not (abs(row.z) > limit)
        ok &= good
        print(f"{row.name:16s} {row.expected:14.6g} {row.observed:14.6g} {row.z:+7.2f}"
              f"{'' if good else '  <-- out of range'}")
    csv_path = out_dir / "mc_counts.csv"
    _write_counts_csv(csv_path, {"analytic_expected": expected, "mc_observed": run.table})
    json_path = out_dir / "mc_validate.json"
    write_json(json_path, {
        "seed": seed, "rounds": run.rounds, "tagged": args.tagged,
        "observed": run.table.as_dict(), "expected": expected.as_dict(),
        "true_n11_z": run.true_n11_z,
        "comparison": [dict(asdict(r), z=r.z) for r in rows], "passed": ok,
    })
    manifest.outputs += [csv_path.name, json_path.name]
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


def cmd_verify(args, scenario, manifest, out_dir) -> int:
    results = run_all()
    ok = True
    for name, dev in results.items():
        good = dev < VERIFY_TOL
        ok &= good
        print(f"{name:45s} {dev:.3e}  {'ok' if good else 'FAIL'}")
    path = out_dir / "verify.json"
    write_json(path, {"tolerance": VERIFY_TOL, "deviations": results, "passed": ok})
    manifest.outputs.append(path.name)
    return 0 if ok else 1


COMMANDS = {
    "rate": cmd_rate,
    "sweep": cmd_sweep,
    "optimize": cmd_optimize,
    "mc-validate": cmd_mc_validate,
    "verify": cmd_verify,
}


# --------------------------------------------------------------------------
# parser


def explain_defaults() -> str:
    cfg = ScenarioConfig()
    lines = ["# default scenario", dumps_config(cfg).rstrip(), "", "# origins"]
    lines += [f"{key:22s} {origin}" for key, origin in DEFAULT_ORIGINS.items()]
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario file (section.key = value lines) or a run manifest")
    common.add_argument("--distance", type=float, help="total Alice-Bob distance in km")
    common.add_argument("--mode", choices=("asymptotic", "finite"))
    common.add_argument("--strategy", choices=("original", "flexible"))
    common.add_argument("--p-save", type=float, dest="p_save")
    common.add_argument("--out-dir", default="mpqkd-out", help="directory for JSON/CSV outputs")

    parser = argparse.ArgumentParser(prog="mpqkd", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--explain-defaults", action="store_true",
                        help="print every default parameter and where it comes from")
    sub = parser.add_subparsers(dest="command")

    sub.add_parser("rate", parents=[common], help="key rate at one scenario point")

    sweep = sub.add_parser("sweep", parents=[common], help="distance / parameter sweep to CSV")
    sweep.add_argument("--figure", choices=FIGURES, help="bundled figure preset")
    sweep.add_argument("--grid", help="distance grid START:STOP:STEP in km (default 0:600:5)")
    sweep.add_argument("--variable", choices=("distance", "N", "l", "p_save"), default="distance")
    sweep.add_argument("--values", help="comma-separated values of the swept variable")
    sweep.add_argument("--fixed-p-save", action="store_true",
                       help="use the configured p_save instead of optimizing it")

    sub.add_parser("optimize", parents=[common], help="optimal p_save at one point")

    mc = sub.add_parser("mc-validate", parents=[common], help="Monte Carlo against analytic counts")
    mc.add_argument("--rounds", type=float, default=1e7)
    mc.add_argument("--seed", type=int, default=0)
    mc.add_argument("--tagged", action="store_true", help="photon-number tagged sampler")

    sub.add_parser("verify", parents=[common], help="entanglement-scheme algebra checks")
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.explain_defaults:
        print(explain_defaults())
        return 0
    if args.command is None:
        parser.print_help(sys.stderr)
        return 2
    if args.command == "mc-validate":
        if args.rounds != int(args.rounds) or args.rounds < 1:
            parser.error("--rounds must be a positive integer")
        args.rounds = int(args.rounds)

    try:
        scenario = _apply_overrides(load_scenario(args.config), args)
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        manifest = RunManifest(command=args.command, argv=argv,
                               config=config_to_flat(scenario), config_text=dumps_config(scenario))
        status = COMMANDS[args.command](args, scenario, manifest, out_dir)
        path = manifest.write(out_dir)
        print(f"manifest: {path}")
        return status
    except (ConfigError, ChernoffError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
