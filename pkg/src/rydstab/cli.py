"""Command-line entry point: ``rydstab <subcommand>``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
The default output directory is ``$RYDSTAB_OUT`` or ``./rydstab_out``.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import analysis, repro, scenario
from .dynamics import NumericalError
from .pulses import aa_phase, predicted_delta_phi, solve_compensation, verify_closure
from .tables import FringeTable, fmt, write_rows

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
OUT_ENV = "RYDSTAB_OUT"


def default_out() -> Path:
    return Path(os.environ.get(OUT_ENV, "rydstab_out"))


def _emit(obj, fmt_: str) -> None:
    if fmt_ == "json":
        print(json.dumps(obj, indent=2, sort_keys=True, default=scenario._json_default))
    else:
        for k, v in obj.items():
            print(f"{k},{fmt(v) if not isinstance(v, str) else v}")


def cmd_run(args) -> int:
    cfg = scenario.load_config(args.config)
    cfg = scenario.apply_overrides(cfg, args.seed, args.shots, args.mode)
    result = scenario.run_scenario(cfg)
    out = Path(args.out) if args.out else Path(cfg.get("output", {}).get("dir", default_out()))
    fmt_ = args.format or cfg.get("output", {}).get("format", "csv")
    for p in scenario.write_bundle(result, out, fmt_):
        print(p)
    for line in result.log:
        print(line, file=sys.stderr)
    return EXIT_OK


def write_repro(res: repro.ReproResult, out: Path, fmt_: str) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    written = []
    report = {"figure": res.figure, "config": res.config, "config_hash": scenario.config_hash(res.config),
              "seed": res.config.get("run", {}).get("seed", 0), "versions": scenario.versions(),
              "scalars": res.scalars}
    if fmt_ == "csv":
        for name, (header, rows) in res.tables.items():
            p = out / f"{name}.csv"
            write_rows(p, header, rows)
            written.append(p)
    else:
        report["tables"] = {name: {"header": h, "rows": [[x if isinstance(x, str) else float(fmt(x))
                                                          for x in r] for r in rows]}
                            for name, (h, rows) in res.tables.items()}
    p = out / f"{res.figure}_report.json"
    p.write_text(json.dumps(scenario.jsonable(report), indent=2, sort_keys=True, default=scenario._json_default) + "\n")
    written.append(p)
    return written


def cmd_repro(args) -> int:
    if args.figure not in repro.REPRO_IDS:
        print(f"unknown figure id {args.figure!r}; valid ids: {', '.join(repro.REPRO_IDS)}",
              file=sys.stderr)
        return EXIT_CONFIG
    res = repro.run_repro(args.figure, seed=args.seed, shots=args.shots)
    out = Path(args.out) if args.out else default_out() / args.figure
    for p in write_repro(res, out, args.format or "csv"):
        print(p)
    for k, v in sorted(res.scalars.items()):
        print(f"{k} = {v}", file=sys.stderr)
    return EXIT_OK


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def cmd_sweep(args) -> int:
    cfg = scenario.load_config(args.config)
    cfg = scenario.apply_overrides(cfg, args.seed, args.shots, args.mode)
    values = [_parse_value(v) for v in args.values.split(",") if v.strip()] if args.values else []
    header, rows = scenario.sweep(cfg, args.param, values)
    out = Path(args.out) if args.out else default_out()
    out.mkdir(parents=True, exist_ok=True)
    name = args.param.replace(".", "_")
    if (args.format or "csv") == "csv":
        p = out / f"sweep_{name}.csv"
        write_rows(p, header, rows)
    else:
        p = out / f"sweep_{name}.json"
        p.write_text(json.dumps([dict(zip(header, r)) for r in rows], indent=2,
                                default=scenario._json_default) + "\n")
    print(p)
    return EXIT_OK


def cmd_solve_comp(args) -> int:
    try:
        sol = solve_compensation(args.v, args.n)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    d = predicted_delta_phi(sol.delta, sol.omega, args.v, args.n)
    _emit({"v_mhz": args.v, "n": args.n, "delta_mhz": sol.delta, "omega_mhz": sol.omega,
           "duration_us": sol.duration, "closure_residual_mhz": verify_closure(sol.delta, sol.omega, args.v, args.n),
           "delta_phi_over_pi": d / math.pi}, args.format or "csv")
    return EXIT_OK


def cmd_aa_phase(args) -> int:
    try:
        phi = aa_phase(args.delta, args.omega)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _emit({"delta_mhz": args.delta, "omega_mhz": args.omega, "aa_phase_rad": phi,
           "aa_phase_over_pi": phi / math.pi}, args.format or "csv")
    return EXIT_OK


def cmd_fit(args) -> int:
    try:
        table = FringeTable.from_csv(Path(args.csv))
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {args.csv}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if table.shots is not None and args.bootstrap > 0:
        fit = analysis.bootstrap(table, resamples=args.bootstrap, seed=args.seed or 0).fit
    else:
        fit = analysis.fit_table(table)
    rows = fit.report()
    if (args.format or "json") == "json":
        print(json.dumps({"fit": rows, "phase_defined": fit.phase_defined, "clipped": fit.clipped},
                         indent=2, default=scenario._json_default))
    else:
        print(write_rows(None, ["parameter", "value", "xi_b", "xi_f", "xi_total"],
                         [[r["parameter"], r["value"], r["xi_b"], r["xi_f"], r["xi_total"]] for r in rows]),
              end="")
    return EXIT_OK


def cmd_validate(args) -> int:
    scenario.load_config(args.config)
    print(f"{args.config}: ok")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int)
    common.add_argument("--shots", type=int)
    common.add_argument("--mode", choices=["unitary", "lindblad", "mc"])
    common.add_argument("--out", help="output directory (default: $RYDSTAB_OUT or ./rydstab_out)")
    common.add_argument("--format", choices=["csv", "json"])

    p = argparse.ArgumentParser(prog="rydstab", description="Dual-species Rydberg stabilizer readout toolkit")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("run", parents=[common], help="run a scenario config")
    s.add_argument("config")
    s.set_defaults(func=cmd_run)
    s = sub.add_parser("repro", parents=[common], help="reproduce a figure's data tables")
    s.add_argument("figure", help=", ".join(repro.REPRO_IDS))
    s.set_defaults(func=cmd_repro)
    s = sub.add_parser("sweep", parents=[common], help="sweep one config parameter")
    s.add_argument("config")
    s.add_argument("--param", required=True, help="dotted path, e.g. gate.v")
    s.add_argument("--values", required=True, help="comma-separated values")
    s.set_defaults(func=cmd_sweep)
    s = sub.add_parser("solve-comp", parents=[common], help="compensated pulse for V and n")
    s.add_argument("--v", type=float, required=True, help="interaction in MHz")
    s.add_argument("--n", type=int, default=1, help="loops of the interacting branch")
    s.set_defaults(func=cmd_solve_comp)
    s = sub.add_parser("aa-phase", parents=[common], help="geometric phase of one closed loop")
    s.add_argument("--delta", type=float, required=True, help="detuning in MHz")
    s.add_argument("--omega", type=float, required=True, help="Rabi frequency in MHz")
    s.set_defaults(func=cmd_aa_phase)
    s = sub.add_parser("fit", parents=[common], help="fit a fringe CSV")
    s.add_argument("csv")
    s.add_argument("--bootstrap", type=int, default=300, help="resamples (0 disables)")
    s.set_defaults(func=cmd_fit)
    s = sub.add_parser("validate", parents=[common], help="schema-check a config")
    s.add_argument("config")
    s.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except scenario.ConfigError as exc:
        print(f"config error:\n{exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, np.linalg.LinAlgError, analysis.BootstrapError) as exc:
        print(f"numerical failure in {args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
