"""Command-line entry point: ``csa-pricing {generate,solve,nis,sweep}``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .evo_game import ConfigurationError, SolverConfig
from .scenario import ScenarioError, build_base_case, dumps, generate, load_config, load_scenario, scenario_to_dict
from .sweeps import SWEEP_KINDS, nis_record, run_sweep, solve_record, sweep_csv_rows

log = logging.getLogger("csa_pricing")


class CliError(Exception):
    pass


def _write_atomic(path: str | Path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _read_json(path: str | Path, what: str) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise CliError(f"{what} not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise CliError(f"{what} {path} is not valid JSON: {exc}") from None


def _solver_config(path: str | None, jobs: int | None = None, seed: int | None = None) -> SolverConfig:
    cfg = SolverConfig.from_dict(_read_json(path, "solver config")) if path else SolverConfig()
    if jobs is not None:
        cfg = replace(cfg, jobs=jobs)
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    return cfg


def _load_scenario(path: str):
    if not Path(path).exists():
        raise CliError(f"scenario not found: {path}")
    return load_scenario(path)


def _csv_text(header: list[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def cmd_generate(args) -> int:
    cfg = load_config(args.config) if args.config and args.config != "base" else build_base_case()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    scenario = generate(cfg)
    _write_atomic(args.out, dumps(scenario_to_dict(scenario)))
    log.info("wrote %d EVs, %d stations to %s", len(scenario.evs), len(scenario.stations), args.out)
    return 0


def cmd_solve(args) -> int:
    scenario = _load_scenario(args.scenario)
    cfg = _solver_config(args.solver_config, args.jobs, args.seed)
    record, result = solve_record(scenario, cfg)
    record["seed"] = cfg.seed
    if args.trajectory:
        rows = []
        evo = result.upper.evolution
        for gen, (fits, shares) in enumerate(evo.trajectory, start=1):
            for aid, f, x in zip(evo.alliance_ids, fits, shares):
                rows += [[gen, aid, h, repr(float(x[h])), repr(float(f[h]))] for h in range(len(x))]
        _write_atomic(args.trajectory, _csv_text(["generation", "alliance_id", "strategy_index", "share", "fitness"], rows))
    text = dumps(record)
    if args.out:
        _write_atomic(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_nis(args) -> int:
    scenario = _load_scenario(args.scenario)
    result = _read_json(args.result, "result")
    try:
        prices = np.array([float(result["station_prices"][st.id]) for st in scenario.stations])
    except (KeyError, TypeError) as exc:
        raise CliError(f"result {args.result} lacks equilibrium prices ({exc})") from None
    cfg = _solver_config(args.solver_config)
    samples = args.samples if args.samples is not None else cfg.nis_samples
    report = nis_record(scenario, prices, cfg, samples, args.seed)
    text = dumps(report)
    if args.out:
        _write_atomic(args.out, text)
    print(f"NIS = {report['nis']:.6f}")
    for a in report["alliances"]:
        print(f"  {a['id']}: ESS payoff {a['ess_payoff']:.4f}, best sampled {a['best_sampled_payoff']:.4f}, "
              f"gap {a['best_response_gap']:.4f}")
    return 0


def cmd_sweep(args) -> int:
    if args.kind not in SWEEP_KINDS:
        raise CliError(f"unknown sweep kind {args.kind!r}; choose from {', '.join(SWEEP_KINDS)}")
    try:
        factors = [float(x) for x in args.factors.split(",") if x.strip()]
    except ValueError:
        raise CliError(f"bad factor list {args.factors!r}") from None
    if not factors or any(not f > 0 for f in factors):
        raise CliError("factors must be a non-empty list of positive numbers")
    if args.kind == "theta" and not args.misperceiver:
        raise CliError("theta sweep requires --misperceiver")
    scenario = _load_scenario(args.scenario)
    cfg = _solver_config(args.solver_config)
    records = run_sweep(args.kind, factors, scenario, cfg, args.misperceiver, args.jobs)
    csv_path = args.csv or str(Path(args.out).with_suffix(".csv"))
    _write_atomic(csv_path, _csv_text(["factor", "alliance_id", "avg_price", "profit", "peak_load_kw"],
                                      sweep_csv_rows(records)))
    _write_atomic(args.out, dumps(records))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="csa-pricing", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="sample a synthetic scenario")
    p.add_argument("--config", help="generator config JSON (omit or 'base' for the base case)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", help="run the two-stage evolutionary game")
    p.add_argument("--scenario", required=True)
    p.add_argument("--solver-config")
    p.add_argument("--out")
    p.add_argument("--trajectory", help="CSV of upper-stage shares and fitness per generation")
    p.add_argument("--jobs", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("nis", help="no-regret index of solved prices over sampled deviations")
    p.add_argument("--scenario", required=True)
    p.add_argument("--result", required=True)
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--solver-config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_nis)

    p = sub.add_parser("sweep", help="solve across a list of factors")
    p.add_argument("--kind", required=True)
    p.add_argument("--factors", required=True, help="comma-separated, e.g. 0.5,1,2,4")
    p.add_argument("--scenario", required=True)
    p.add_argument("--solver-config")
    p.add_argument("--out", required=True)
    p.add_argument("--csv", help="summary CSV path (default: --out with .csv suffix)")
    p.add_argument("--misperceiver", help="alliance id whose theta belief is swept (theta kind)")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("CSA_LOG", "WARNING").upper()
    if not isinstance(logging.getLevelName(level), int):
        level = "WARNING"
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ScenarioError, ConfigurationError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
