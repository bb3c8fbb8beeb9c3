"""Solve runs and sensitivity sweeps producing JSON-ready result records."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from typing import Any, Sequence

import numpy as np

from .domain import DrContract, Scenario, ThetaBelief
from .evo_game import EvolutionResult, SolverConfig, TwoStageResult, nis, solve_two_stage
from .payoff import PayoffModel
from .scenario import ScenarioError, config_from_dict, generate
from .travel import provider_from_dict

log = logging.getLogger(__name__)

SWEEP_KINDS = ("demand", "theta", "dr-fil", "dr-pp")


def _evolution_summary(evo: EvolutionResult) -> dict:
    return {
        "generations": evo.generations,
        "converged": evo.converged,
        "chosen": list(evo.chosen),
        "support": [list(s) for s in evo.support],
        "max_share": [float(x.max()) for x in evo.shares],
    }


def run_record(scenario: Scenario, result: TwoStageResult, truth: PayoffModel,
               factor: float | None = None, kind: str | None = None) -> dict[str, Any]:
    """Flatten a two-stage result into the documented result document.

    ``profit`` is the payoff each alliance expects under its own belief;
    ``realized_profit`` and peak loads are evaluated by ``truth``, the same
    scenario under the true theta distribution.
    """
    real = truth.breakdown(result.prices, peaks=True)
    alliances = []
    for k, a in enumerate(scenario.alliances):
        m = truth.members[k]
        alliances.append({
            "id": a.id,
            "mean_price": float(result.prices[m].mean()),
            "profit": float(result.payoffs[k]),
            "realized_profit": float(real.profit[k]),
            "charging_income": float(real.charging_income[k]),
            "grid_cost": float(real.grid_cost[k]),
            "dr_income": float(real.dr_income[k]),
            "peak_load_kw": float(real.peak_kw[k]),
        })
    return {
        "kind": kind,
        "factor": factor,
        "station_prices": {st.id: float(p) for st, p in zip(scenario.stations, result.prices)},
        "mean_price": float(result.prices.mean()),
        "alliances": alliances,
        "peak_load_kw": float(real.peak_kw.sum()),
        "convergence": {"lower": _evolution_summary(result.lower.evolution),
                        "upper": _evolution_summary(result.upper.evolution)},
        "nis": None,
    }


def solve_record(scenario: Scenario, cfg: SolverConfig, factor: float | None = None,
                 kind: str | None = None, truth_scenario: Scenario | None = None) -> tuple[dict, TwoStageResult]:
    provider = provider_from_dict(cfg.travel)
    model = PayoffModel(scenario, provider, z=cfg.z, discretization=cfg.discretization)
    result = solve_two_stage(scenario, provider, cfg, model=model)
    if truth_scenario is None:
        truth_scenario = scenario.replace(theta_beliefs={})
    truth = PayoffModel(truth_scenario, provider, z=cfg.z, discretization=cfg.discretization)
    return run_record(scenario, result, truth, factor, kind), result


def nis_record(scenario: Scenario, prices: np.ndarray, cfg: SolverConfig, samples: int, seed: int) -> dict:
    model = PayoffModel(scenario, provider_from_dict(cfg.travel), z=cfg.z, discretization=cfg.discretization)
    rep = nis(model, prices, samples, seed)
    return {
        "nis": rep.nis,
        "samples": samples,
        "seed": seed,
        "alliances": [
            {"id": aid, "ess_payoff": float(e), "best_sampled_payoff": float(b),
             "best_response_gap": float(b - e), "no_better_fraction": float(f)}
            for aid, e, b, f in zip(model.alliance_ids, rep.ess_payoffs, rep.best_payoffs, rep.no_better_fraction)
        ],
    }


def sweep_scenario(kind: str, factor: float, scenario: Scenario, misperceiver: str | None = None) -> Scenario:
    """The scenario a sweep point is solved on."""
    if kind == "demand":
        if scenario.generator is None:
            raise ScenarioError("demand sweep needs a scenario carrying its generator config")
        cfg = config_from_dict(scenario.generator)
        return generate(replace(cfg, demand_multiplier=cfg.demand_multiplier * factor))
    if kind == "theta":
        if misperceiver is None:
            raise ValueError("theta sweep needs a misperceiving alliance")
        scenario.alliance(misperceiver)
        truth = scenario.theta_truth
        beliefs = dict(scenario.theta_beliefs)
        beliefs[misperceiver] = ThetaBelief(mu=factor, sigma=truth.sigma, z=truth.z)
        return scenario.replace(theta_beliefs=beliefs)
    if kind in ("dr-fil", "dr-pp"):
        alliances = []
        for a in scenario.alliances:
            dr = a.dr
            if kind == "dr-fil":
                # The prepaid incentive is proportional to the contracted firm level.
                dr = DrContract(dr.fil_kw * factor, dr.penalty_price, dr.prepaid_incentive * factor, True)
            else:
                dr = DrContract(dr.fil_kw, dr.penalty_price * factor, dr.prepaid_incentive, True)
            alliances.append(replace(a, dr=dr))
        return scenario.replace(alliances=tuple(alliances))
    raise ValueError(f"unknown sweep kind {kind!r}; expected one of {SWEEP_KINDS}")


def _sweep_point(args) -> dict:
    kind, factor, scenario, cfg, misperceiver = args
    point = sweep_scenario(kind, factor, scenario, misperceiver)
    truth = point.replace(theta_beliefs={}) if kind == "theta" else point
    record, _ = solve_record(point, cfg, factor, kind, truth_scenario=truth)
    log.info("sweep %s factor %g done", kind, factor)
    return record


def run_sweep(kind: str, factors: Sequence[float], scenario: Scenario, cfg: SolverConfig,
              misperceiver: str | None = None, jobs: int = 1) -> list[dict]:
    """One result record per factor, in the order given, whatever the completion order."""
    if kind not in SWEEP_KINDS:
        raise ValueError(f"unknown sweep kind {kind!r}; expected one of {SWEEP_KINDS}")
    if any(not f > 0 for f in factors):
        raise ValueError("sweep factors must be positive")
    tasks = [(kind, float(f), scenario, cfg, misperceiver) for f in factors]
    if jobs <= 1:
        return [_sweep_point(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_sweep_point, tasks))


def sweep_csv_rows(records: Sequence[dict]) -> list[list]:
    """``factor,alliance_id,avg_price,profit,peak_load_kw`` rows; profit is the realized one."""
    rows = []
    for rec in records:
        for a in rec["alliances"]:
            rows.append([rec["factor"], a["id"], a["mean_price"], a["realized_profit"], rec["peak_load_kw"]])
    return rows
