"""Two-stage evolutionary pricing game between charging-station alliances.

Each alliance is a population whose members play price vectors from a finite
strategy set. Payoffs of every strategy combination are tabulated once, then
population shares evolve under a discrete replicator map until they settle.
The lower stage spreads strategies over the whole price range; the upper
stage searches around the lower-stage winner.
"""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .domain import MarketConfig, Scenario
from .payoff import DISCRETIZATIONS, PayoffModel
from .travel import TravelProvider

log = logging.getLogger(__name__)

# Substream ids under a user seed; keeps each random purpose independent.
STREAM_LOWER, STREAM_UPPER, STREAM_NIS = 1, 2, 3


class ConfigurationError(ValueError):
    pass


def substream(seed: int, *path: int) -> np.random.Generator:
    return np.random.default_rng([seed, *path])


@dataclass(frozen=True)
class SolverConfig:
    lower_groups: int = 13
    upper_count: int = 16
    deviation_range: float = 0.2
    max_generations: int = 500
    tol: float = 1e-6
    support_threshold: float = 0.01
    z: int | None = None
    discretization: str = "mean"
    seed: int = 0
    nis_samples: int = 1000
    jobs: int = 1
    travel: Mapping | None = None

    @classmethod
    def from_dict(cls, d: Mapping) -> "SolverConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown solver config keys: {sorted(unknown)}")
        cfg = cls(**d)
        if cfg.upper_count < 2 or cfg.lower_groups < 2:
            raise ConfigurationError("strategy sets need at least 2 strategies")
        if cfg.deviation_range < 0 or cfg.max_generations < 1 or cfg.tol <= 0:
            raise ConfigurationError("deviation_range >= 0, max_generations >= 1 and tol > 0 required")
        if cfg.discretization not in DISCRETIZATIONS:
            raise ConfigurationError(f"discretization must be one of {DISCRETIZATIONS}")
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class StrategySet:
    """``strategies[k]`` is an ``(H_k, n_k)`` array: one price row per strategy of alliance ``k``."""

    alliance_ids: tuple[str, ...]
    strategies: tuple[np.ndarray, ...]

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(s.shape[0] for s in self.strategies)


@dataclass
class EvolutionResult:
    alliance_ids: tuple[str, ...]
    shares: list[np.ndarray]
    chosen: tuple[int, ...]
    support: tuple[tuple[int, ...], ...]
    # One entry per generation: (fitness vectors before the step, shares after it).
    trajectory: list[tuple[list[np.ndarray], list[np.ndarray]]] = field(repr=False)
    generations: int
    converged: bool


def build_lower_strategy_sets(market: MarketConfig, alliance_sizes: Mapping[str, int],
                              group_count: int | Mapping[str, int], rng_seed: int) -> StrategySet:
    """One strategy per price group; every station price drawn uniformly from that group.

    The optional prices are split into ``group_count`` consecutive groups of
    equal size, so the count must divide the number of optional prices.
    """
    grid = np.array(market.price_grid())
    ids = tuple(alliance_sizes)
    out = []
    for k, aid in enumerate(ids):
        h = group_count[aid] if isinstance(group_count, Mapping) else group_count
        if h < 1 or grid.size % h:
            raise ConfigurationError(f"{grid.size} optional prices cannot be split into {h} equal groups")
        groups = grid.reshape(h, grid.size // h)
        rng = substream(rng_seed, STREAM_LOWER, k)
        n = alliance_sizes[aid]
        picks = rng.integers(0, groups.shape[1], size=(h, n))
        out.append(np.take_along_axis(groups, picks, axis=1))
    return StrategySet(ids, tuple(out))


def build_upper_strategy_sets(lower_ess: Mapping[str, np.ndarray], deviation_range: float,
                              count: int | Mapping[str, int], market: MarketConfig,
                              rng_seed: int) -> StrategySet:
    """The lower-stage winner plus ``count - 1`` uniform perturbations of it, clamped to the price bounds."""
    ids = tuple(lower_ess)
    out = []
    for k, aid in enumerate(ids):
        h = count[aid] if isinstance(count, Mapping) else count
        if h < 2:
            raise ConfigurationError("upper strategy sets need count >= 2")
        base = np.asarray(lower_ess[aid], dtype=float)
        rng = substream(rng_seed, STREAM_UPPER, k)
        noise = rng.uniform(-deviation_range, deviation_range, size=(h - 1, base.size))
        perturbed = np.clip(base[None, :] + noise, market.grid_price, market.price_max)
        out.append(np.vstack([base[None, :], perturbed]))
    return StrategySet(ids, tuple(out))


def assemble_prices(sets: StrategySet, combo: Sequence[int], members: Sequence[np.ndarray],
                    station_count: int) -> np.ndarray:
    prices = np.empty(station_count)
    for k, h in enumerate(combo):
        prices[members[k]] = sets.strategies[k][h]
    return prices


def compute_payoff_tensor(sets: StrategySet, model: PayoffModel, jobs: int = 1) -> np.ndarray:
    """Payoffs of every alliance under every strategy combination.

    Returns an array of shape ``(K, H_1, ..., H_K)``. Entries are independent,
    so they may be evaluated concurrently; each lands at its own index.
    """
    if tuple(model.alliance_ids) != sets.alliance_ids:
        raise ConfigurationError("strategy set and payoff model disagree on alliance order")
    sizes = sets.sizes
    tensor = np.empty((len(sizes), *sizes))
    n_st = model.choice.energy.shape[1]
    combos = list(itertools.product(*(range(h) for h in sizes)))

    def work(chunk):
        for combo in chunk:
            tensor[(slice(None), *combo)] = model.payoffs(assemble_prices(sets, combo, model.members, n_st))

    if jobs <= 1:
        work(combos)
    else:
        chunks = [combos[i::jobs] for i in range(jobs)]
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(work, chunks))
    if not np.all(np.isfinite(tensor)):
        raise FloatingPointError("payoff tensor has non-finite entries")
    return tensor


def uniform_population(sizes: Sequence[int]) -> list[np.ndarray]:
    return [np.full(h, 1.0 / h) for h in sizes]


def combination_probability(pop: Sequence[np.ndarray], k: int, opponents: Sequence[int]) -> float:
    """Probability that the other alliances jointly play ``opponents`` (alliance ``k`` skipped)."""
    others = [x for l, x in enumerate(pop) if l != k]
    if len(others) != len(opponents):
        raise ValueError("one opponent index per other alliance required")
    prob = 1.0
    for x, h in zip(others, opponents):
        prob *= x[h]
    return float(prob)


def fitness(tensor: np.ndarray, pop: Sequence[np.ndarray], k: int) -> np.ndarray:
    """Expected payoff of each strategy of alliance ``k`` against the opponents' populations."""
    t = np.moveaxis(tensor[k], k, 0)
    # Contract opponents from the last axis backwards: fixed order, reproducible sums.
    for l in reversed([l for l in range(len(pop)) if l != k]):
        t = t @ pop[l]
    return t


def average_fitness(fit: np.ndarray, shares: np.ndarray) -> float:
    return float(np.dot(fit, shares))


def shift_fitness(f: np.ndarray) -> np.ndarray:
    """Fitness moved to be strictly positive: ``f - min(f) + eps``, order unchanged."""
    f = np.asarray(f, dtype=float)
    return f - np.min(f) + 1e-6 * max(1.0, abs(float(np.max(f))))


def replicator_map(x: np.ndarray, shifted: np.ndarray) -> np.ndarray:
    """Discrete replicator map ``x * F / (x . F)`` for positive fitness ``F``."""
    w = x * shifted
    total = w.sum()
    if not total > 0:
        raise FloatingPointError("population collapsed to zero total share")
    return w / total


def replicator_step(pop: Sequence[np.ndarray], fits: Sequence[np.ndarray]) -> list[np.ndarray]:
    """One generation for every alliance.

    Fitness is shifted first so the map stays defined for zero or negative
    profits, which DR penalties can produce.
    """
    return [replicator_map(x, shift_fitness(f)) for x, f in zip(pop, fits)]


def evolve(tensor: np.ndarray, alliance_ids: Sequence[str] | None = None,
           initial: Sequence[np.ndarray] | None = None, max_generations: int = 500,
           tol: float = 1e-6, support_threshold: float = 0.01) -> EvolutionResult:
    sizes = tensor.shape[1:]
    ids = tuple(alliance_ids) if alliance_ids is not None else tuple(str(k) for k in range(len(sizes)))
    pop = [np.array(x, dtype=float) for x in initial] if initial is not None else uniform_population(sizes)
    trajectory = []
    converged = False
    gen = 0
    while gen < max_generations:
        fits = [fitness(tensor, pop, k) for k in range(len(sizes))]
        new = replicator_step(pop, fits)
        gen += 1
        trajectory.append((fits, new))
        change = max(float(np.max(np.abs(a - b))) for a, b in zip(new, pop))
        pop = new
        if change < tol:
            converged = True
            break
    chosen = tuple(int(np.argmax(x)) for x in pop)
    support = tuple(tuple(int(h) for h in np.flatnonzero(x > support_threshold)) for x in pop)
    log.debug("evolution stopped after %d generations (converged=%s)", gen, converged)
    return EvolutionResult(ids, pop, chosen, support, trajectory, gen, converged)


@dataclass
class StageResult:
    sets: StrategySet
    tensor: np.ndarray
    evolution: EvolutionResult

    def chosen_prices(self) -> dict[str, np.ndarray]:
        return {aid: self.sets.strategies[k][h]
                for k, (aid, h) in enumerate(zip(self.sets.alliance_ids, self.evolution.chosen))}


@dataclass
class TwoStageResult:
    lower: StageResult
    upper: StageResult
    prices: np.ndarray
    payoffs: np.ndarray


def solve_stage(sets: StrategySet, model: PayoffModel, cfg: SolverConfig) -> StageResult:
    tensor = compute_payoff_tensor(sets, model, cfg.jobs)
    evo = evolve(tensor, sets.alliance_ids, max_generations=cfg.max_generations, tol=cfg.tol,
                 support_threshold=cfg.support_threshold)
    return StageResult(sets, tensor, evo)


def solve_two_stage(scenario: Scenario, provider: TravelProvider, cfg: SolverConfig = SolverConfig(),
                    rng_seed: int | None = None, model: PayoffModel | None = None) -> TwoStageResult:
    """Lower stage over the full price range, then an upper stage around its winner."""
    seed = cfg.seed if rng_seed is None else rng_seed
    model = model or PayoffModel(scenario, provider, z=cfg.z, discretization=cfg.discretization)
    sizes = {a.id: len(a.station_ids) for a in scenario.alliances}
    lower = solve_stage(build_lower_strategy_sets(scenario.market, sizes, cfg.lower_groups, seed), model, cfg)
    upper_sets = build_upper_strategy_sets(lower.chosen_prices(), cfg.deviation_range, cfg.upper_count,
                                           scenario.market, seed)
    upper = solve_stage(upper_sets, model, cfg)
    n_st = len(scenario.stations)
    prices = assemble_prices(upper.sets, upper.evolution.chosen, model.members, n_st)
    return TwoStageResult(lower, upper, prices, model.payoffs(prices))


@dataclass
class NisReport:
    nis: float
    ess_payoffs: np.ndarray
    best_payoffs: np.ndarray
    # Fraction of sampled deviations paying no more than the ESS (+1e-6), per alliance.
    no_better_fraction: np.ndarray
    sampled_payoffs: list[np.ndarray] = field(repr=False)


def nis(model: PayoffModel, ess_prices: np.ndarray, samples: int, rng_seed: int,
        market: MarketConfig | None = None) -> NisReport:
    """No-regret index over randomly sampled unilateral deviations.

    For each alliance the sample holds the equilibrium strategy itself plus
    ``samples - 1`` price vectors drawn uniformly from the price grid, while
    every other alliance keeps its equilibrium prices.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    market = market or model.scenario.market
    grid = np.array(market.price_grid())
    ess_prices = np.asarray(ess_prices, dtype=float)
    base = model.payoffs(ess_prices)
    best = base.copy()
    frac = np.ones(len(base))
    sampled = []
    for k, members in enumerate(model.members):
        rng = substream(rng_seed, STREAM_NIS, k)
        draws = grid[rng.integers(0, grid.size, size=(samples - 1, members.size))]
        vals = np.empty(samples - 1)
        for s, row in enumerate(draws):
            p = ess_prices.copy()
            p[members] = row
            vals[s] = model.payoffs(p)[k]
        sampled.append(vals)
        if vals.size:
            best[k] = max(base[k], float(vals.max()))
            frac[k] = float(np.mean(vals <= base[k] + 1e-6))
    return NisReport(float(base.sum() / best.sum()), base, best, frac, sampled)
