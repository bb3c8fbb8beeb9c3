"""Expected alliance profit: charging income + demand-response income - grid cost.

Stations do not know each driver's time sensitivity, only a distribution of
it, so choice probabilities are averaged over a discretized theta
distribution before they enter the income terms.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from .domain import Alliance, DrContract, EvRequest, Scenario, Station, ThetaBelief
from .ev_choice import ChoiceModel, energy_demand, pair_power_kw
from .travel import TravelProvider, wait_time

PRICE_TOL = 1e-9


class PriceBoundsError(ValueError):
    pass


@dataclass(frozen=True)
class ThetaDiscretization:
    values: np.ndarray
    probs: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        probs = np.asarray(self.probs, dtype=float)
        if values.shape != probs.shape or values.ndim != 1 or values.size == 0:
            raise ValueError("values and probs must be equal-length non-empty vectors")
        if np.any(values <= 0) or np.any(np.diff(values) <= 0):
            raise ValueError("values must be positive and strictly ascending")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
            raise ValueError("probs must be non-negative and sum to 1")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "probs", probs)


def truncated_theta(belief: ThetaBelief):
    """Frozen scipy distribution of theta, normal truncated to (0, inf)."""
    return stats.truncnorm(-belief.mu / belief.sigma, np.inf, loc=belief.mu, scale=belief.sigma)


DISCRETIZATIONS = ("mean", "quantile")


def discretize_theta(belief: ThetaBelief, z: int | None = None, method: str = "mean") -> ThetaDiscretization:
    """Typical theta values and their probabilities.

    ``"mean"`` splits the distribution into ``Z`` equal-mass bins and
    represents each bin by its conditional mean, which keeps the mixture's
    mean exact and converges quadratically in ``Z``.

    ``"quantile"`` places values at quantile levels ``(2z-1)/(2Z)`` and gives
    value ``z`` the CDF mass of ``(v_{z-1}, v_z]``, the last bin running to
    infinity. It weights upper values more and converges only linearly.
    """
    z = belief.z if z is None else z
    if z < 1:
        raise ValueError("z must be >= 1")
    dist = truncated_theta(belief)
    if method == "quantile":
        values = dist.ppf((2 * np.arange(1, z + 1) - 1) / (2 * z))
        cdf = np.concatenate([[0.0], dist.cdf(values[:-1]), [1.0]])
        return ThetaDiscretization(values, np.diff(cdf))
    if method != "mean":
        raise ValueError(f"unknown discretization {method!r}; expected one of {DISCRETIZATIONS}")
    edges = np.concatenate([[0.0], dist.ppf(np.arange(1, z) / z), [np.inf]])
    # Bins lie inside the truncation, so the untruncated normal's partial moments apply.
    a = (edges - belief.mu) / belief.sigma
    mass = np.diff(stats.norm.cdf(a))
    values = belief.mu + belief.sigma * -np.diff(stats.norm.pdf(a)) / mass
    return ThetaDiscretization(values, mass / mass.sum())


def check_prices(prices: Mapping[str, float], scenario: Scenario) -> None:
    lo, hi = scenario.market.grid_price, scenario.market.price_max
    for st in scenario.stations:
        if st.id not in prices:
            raise PriceBoundsError(f"no price for station {st.id!r}")
        p = prices[st.id]
        if not (lo - PRICE_TOL <= p <= hi + PRICE_TOL):
            raise PriceBoundsError(f"price {p} for station {st.id!r} outside [{lo}, {hi}]")


def price_array(prices: Mapping[str, float], scenario: Scenario) -> np.ndarray:
    check_prices(prices, scenario)
    return np.array([prices[st.id] for st in scenario.stations], dtype=float)


def choice_expectation(ev: EvRequest, prices: Mapping[str, float], scenario: Scenario,
                       disc: ThetaDiscretization, provider: TravelProvider) -> np.ndarray:
    """Probability row over stations plus the postpone option, theta integrated out."""
    single = scenario.replace(evs=(ev,))
    model = ChoiceModel(single, provider)
    return model.sigma(price_array(prices, scenario), disc.values, disc.probs)[0]


def charging_income(members: Sequence[int], prices: np.ndarray, sigma: np.ndarray,
                    energy: np.ndarray) -> float:
    m = np.asarray(members, dtype=int)
    return float(np.sum(energy[:, m] * sigma[:, m] * prices[m][None, :]))


def grid_cost(members: Sequence[int], sigma: np.ndarray, energy: np.ndarray, grid_price: float) -> float:
    m = np.asarray(members, dtype=int)
    return float(np.sum(energy[:, m] * sigma[:, m]) * grid_price)


@dataclass(frozen=True)
class PowerProfile:
    """Piecewise-constant power draw as ``(start_h, end_h, kw)`` segments from now (t = 0)."""

    segments: tuple[tuple[float, float, float], ...] = ()

    def at(self, t: float) -> float:
        return sum(kw for start, end, kw in self.segments if start <= t <= end)


def ev_power_profile(ev: EvRequest, station: Station, provider: TravelProvider,
                     prices: Mapping[str, float] | None = None) -> PowerProfile:
    """Power draw if ``ev`` goes to ``station``: full power from arrival until its energy is in.

    Prices are accepted for interface symmetry; arrival time and energy do not
    depend on them.
    """
    energy = energy_demand(ev, station)
    if energy <= 0:
        return PowerProfile()
    q = pair_power_kw(ev, station)
    arrive = provider.drive_time(ev.position, station.position, ev.id, station.id) + wait_time(station)
    return PowerProfile(((arrive, arrive + energy / q, q),))


def current_power_profiles(station: Station) -> list[PowerProfile]:
    """EVs already plugged in keep charging at pile power until their remaining time runs out."""
    return [PowerProfile(((0.0, r, station.pile_power_kw),)) for r in station.charging_remaining_h if r > 0]


def _peak(starts: np.ndarray, ends: np.ndarray, weights: np.ndarray) -> float:
    """Max over t of the weighted count of closed intervals covering t."""
    if starts.size == 0:
        return 0.0
    times = np.concatenate([starts, ends])
    # Starts sort before ends at equal times: intervals are closed.
    kind = np.concatenate([np.zeros(starts.size), np.ones(ends.size)])
    order = np.lexsort((kind, times))
    delta = np.concatenate([weights, -weights])[order]
    return max(0.0, float(np.max(np.cumsum(delta))))


def max_dr_demand(prospective: Iterable[tuple[PowerProfile, float]],
                  current: Iterable[PowerProfile] = ()) -> float:
    """Peak expected demand of an alliance.

    ``prospective`` pairs each possible (EV, member station) profile with the
    probability that the EV picks that station; ``current`` profiles belong to
    EVs already charging and count in full. The total is a step function, so
    scanning segment boundaries in time order finds the peak exactly.
    """
    starts, ends, weights = [], [], []
    for profile, prob in prospective:
        for s, e, kw in profile.segments:
            starts.append(s), ends.append(e), weights.append(kw * prob)
    for profile in current:
        for s, e, kw in profile.segments:
            starts.append(s), ends.append(e), weights.append(kw)
    return _peak(np.array(starts, dtype=float), np.array(ends, dtype=float), np.array(weights, dtype=float))


def dr_income(dr: DrContract, q_max_dr: float) -> float:
    if not dr.enabled:
        return 0.0
    return dr.prepaid_incentive - dr.penalty_price * max(q_max_dr - dr.fil_kw, 0.0)


class _PeakScanner:
    """Sorted segment boundaries of one alliance, reweighted per price vector.

    Arrival times and durations do not depend on prices, so the event order is
    fixed and only the expected weights change between evaluations.
    """

    def __init__(self, model: ChoiceModel, members: np.ndarray, stations: Sequence[Station]):
        n = model.energy.shape[0]
        arrive = model.time[:, members]
        dur = model.energy[:, members] / model.power[:, members]
        self.cells = (np.repeat(np.arange(n), members.size), np.tile(members, n))
        self.kw = model.power[:, members].ravel()
        cur = [(r, stations[j].pile_power_kw) for j in members for r in stations[j].charging_remaining_h if r > 0]
        cur_end = np.array([r for r, _ in cur], dtype=float)
        self.current_kw = np.array([kw for _, kw in cur], dtype=float)
        times = np.concatenate([arrive.ravel(), cur_end * 0.0, (arrive + dur).ravel(), cur_end])
        kind = np.concatenate([np.zeros(arrive.size + cur_end.size), np.ones(arrive.size + cur_end.size)])
        self.order = np.lexsort((kind, times))

    def peak(self, sigma: np.ndarray) -> float:
        if self.order.size == 0:
            return 0.0
        w = np.concatenate([self.kw * sigma[self.cells], self.current_kw])
        delta = np.concatenate([w, -w])[self.order]
        return max(0.0, float(np.max(np.cumsum(delta))))


@dataclass(frozen=True)
class PayoffBreakdown:
    charging_income: np.ndarray
    dr_income: np.ndarray
    grid_cost: np.ndarray
    peak_kw: np.ndarray

    @property
    def profit(self) -> np.ndarray:
        return self.charging_income + self.dr_income - self.grid_cost


class PayoffModel:
    """Alliance payoffs for arbitrary full price vectors on a fixed scenario.

    Each alliance evaluates demand under its own perceived theta distribution;
    alliances sharing a belief share the computation.
    """

    def __init__(self, scenario: Scenario, provider: TravelProvider,
                 discs: Mapping[str, ThetaDiscretization] | None = None, z: int | None = None,
                 discretization: str = "mean"):
        self.scenario = scenario
        self.choice = ChoiceModel(scenario, provider)
        index = scenario.station_index()
        self.alliance_ids = tuple(a.id for a in scenario.alliances)
        self.members = [np.array([index[s] for s in a.station_ids], dtype=int) for a in scenario.alliances]
        if discs is None:
            discs = {a.id: discretize_theta(scenario.belief(a.id), z, discretization) for a in scenario.alliances}
        self.discs = [discs[a] for a in self.alliance_ids]
        # Alliances with identical discretizations share one sigma evaluation.
        self._groups: list[tuple[ThetaDiscretization, list[int]]] = []
        for k, d in enumerate(self.discs):
            for other, ks in self._groups:
                if np.array_equal(other.values, d.values) and np.array_equal(other.probs, d.probs):
                    ks.append(k)
                    break
            else:
                self._groups.append((d, [k]))
        self.dr = [a.dr for a in scenario.alliances]
        self._scanners = [
            _PeakScanner(self.choice, m, scenario.stations) if dr.enabled else None
            for m, dr in zip(self.members, self.dr)
        ]
        self.lo, self.hi = scenario.market.grid_price, scenario.market.price_max

    def check(self, prices: np.ndarray) -> None:
        bad = np.flatnonzero((prices < self.lo - PRICE_TOL) | (prices > self.hi + PRICE_TOL))
        if bad.size:
            j = int(bad[0])
            raise PriceBoundsError(f"price {prices[j]} for station {self.choice.station_ids[j]!r} "
                                   f"outside [{self.lo}, {self.hi}]")

    def sigma(self, prices: np.ndarray, disc: ThetaDiscretization) -> np.ndarray:
        return self.choice.sigma(prices, disc.values, disc.probs)

    def breakdown(self, prices: np.ndarray, peaks: bool = False) -> PayoffBreakdown:
        """All payoff terms per alliance. ``peaks`` forces peak evaluation without DR."""
        prices = np.asarray(prices, dtype=float)
        self.check(prices)
        k_count = len(self.alliance_ids)
        income, dr, cost, peak = (np.zeros(k_count) for _ in range(4))
        energy = self.choice.energy
        for disc, ks in self._groups:
            sig = self.sigma(prices, disc)
            for k in ks:
                m = self.members[k]
                income[k] = charging_income(m, prices, sig, energy)
                cost[k] = grid_cost(m, sig, energy, self.lo)
                scanner = self._scanners[k]
                if scanner is None and peaks:
                    scanner = self._scanners[k] = _PeakScanner(self.choice, m, self.scenario.stations)
                if scanner is not None:
                    peak[k] = scanner.peak(sig)
                dr[k] = dr_income(self.dr[k], peak[k])
        return PayoffBreakdown(income, dr, cost, peak)

    def payoffs(self, prices: np.ndarray) -> np.ndarray:
        return self.breakdown(prices).profit


def alliance_payoff(alliance: Alliance, prices: Mapping[str, float], scenario: Scenario,
                    disc: ThetaDiscretization, provider: TravelProvider) -> float:
    """Expected profit of one alliance at a full price vector under the given theta belief."""
    p = price_array(prices, scenario)
    model = PayoffModel(scenario, provider, discs={a.id: disc for a in scenario.alliances})
    k = model.alliance_ids.index(alliance.id)
    return float(model.payoffs(p)[k])
