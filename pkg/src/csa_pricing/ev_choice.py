"""Bounded-rational charging choice of a single EV.

A driver compares every station (plus the option of postponing) against the
station with the least time cost. Money and time differences are valued with
a prospect-theory value function, combined with the driver's time
sensitivity, and turned into choice probabilities by a multinomial logit.

The scalar functions mirror the model one quantity at a time and are what the
tests exercise directly. :class:`ChoiceModel` is the vectorized form used in
the game loops, where the same geometry is re-priced thousands of times.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .domain import EvRequest, MarketConfig, Scenario, Station
from .travel import TravelProvider, wait_time

VIRTUAL = "__virtual__"
V_CLAMP = 500.0


@dataclass(frozen=True)
class Candidate:
    station_id: str
    expense_cost: float
    time_cost_h: float
    energy_kwh: float


@dataclass(frozen=True)
class ChoiceDistribution:
    candidate_ids: tuple[str, ...]
    probabilities: np.ndarray

    def __getitem__(self, station_id: str) -> float:
        return float(self.probabilities[self.candidate_ids.index(station_id)])


def pair_power_kw(ev: EvRequest, station: Station) -> float:
    return min(ev.max_onboard_power_kw, station.pile_power_kw)


def energy_demand(ev: EvRequest, station: Station) -> float:
    """Energy the EV would take at ``station``: its target, capped by power x time limit."""
    return min(ev.target_energy_kwh, pair_power_kw(ev, station) * ev.time_limit_h)


def expense_cost(price: float, energy: float) -> float:
    return price * energy


def time_cost(drive_h: float, wait_h: float) -> float:
    return drive_h + wait_h


def value(x: float, x0: float, market: MarketConfig) -> float:
    """Prospect-theory value of utility ``x`` against reference ``x0``."""
    if x > x0:
        return (x - x0) ** market.value_alpha
    return -market.value_lambda * (x0 - x) ** market.value_beta


def comprehensive_value(candidate: Candidate, reference: Candidate, theta: float,
                        market: MarketConfig) -> float:
    # Utilities are negated costs: extra time is always a loss, cheaper is a gain.
    unit = market.value_time_unit_h
    v_time = value(-candidate.time_cost_h / unit, -reference.time_cost_h / unit, market)
    v_money = value(-candidate.expense_cost, -reference.expense_cost, market)
    return v_money + theta * v_time


def virtual_energy_kwh(ev: EvRequest) -> float:
    return min(ev.target_energy_kwh, ev.max_onboard_power_kw * ev.time_limit_h)


def virtual_time_cost(soc: float, time_limit_h: float, reference_time_cost_h: float,
                      soc_safe: float) -> float:
    return reference_time_cost_h + time_limit_h * soc_safe / (1.0 - soc_safe) * (1.0 / soc - 1.0)


def virtual_candidate(ev: EvRequest, reference_time_cost_h: float, market: MarketConfig) -> Candidate:
    """The postpone-charging option, priced at the market's normal price."""
    energy = virtual_energy_kwh(ev)
    return Candidate(
        station_id=VIRTUAL,
        expense_cost=expense_cost(market.normal_price, energy),
        time_cost_h=virtual_time_cost(ev.soc, ev.time_limit_h, reference_time_cost_h, market.soc_safe),
        energy_kwh=energy,
    )


def _price_list(prices: Mapping[str, float] | Sequence[float], stations: Sequence[Station]) -> list[float]:
    if isinstance(prices, Mapping):
        return [float(prices[st.id]) for st in stations]
    if len(prices) != len(stations):
        raise ValueError(f"{len(prices)} prices for {len(stations)} stations")
    return [float(p) for p in prices]


def build_candidates(ev: EvRequest, prices, stations: Sequence[Station], provider: TravelProvider,
                     market: MarketConfig, include_virtual: bool = True) -> tuple[list[Candidate], int]:
    """Candidates in station order (virtual last) and the index of the reference station."""
    cands = []
    for st, p in zip(stations, _price_list(prices, stations)):
        e = energy_demand(ev, st)
        t = time_cost(provider.drive_time(ev.position, st.position, ev.id, st.id), wait_time(st))
        cands.append(Candidate(st.id, expense_cost(p, e), t, e))
    # First minimum wins ties, so reruns pick the same reference.
    ref = min(range(len(cands)), key=lambda j: cands[j].time_cost_h)
    if include_virtual:
        cands.append(virtual_candidate(ev, cands[ref].time_cost_h, market))
    return cands, ref


def softmax(v: np.ndarray, axis: int = -1) -> np.ndarray:
    v = np.clip(v, -V_CLAMP, V_CLAMP)
    w = np.exp(v - v.max(axis=axis, keepdims=True))
    return w / w.sum(axis=axis, keepdims=True)


def choice_probabilities(ev: EvRequest, prices, stations: Sequence[Station], provider: TravelProvider,
                         theta: float, market: MarketConfig, include_virtual: bool = True) -> ChoiceDistribution:
    cands, ref = build_candidates(ev, prices, stations, provider, market, include_virtual)
    v = np.array([comprehensive_value(c, cands[ref], theta, market) for c in cands])
    return ChoiceDistribution(tuple(c.station_id for c in cands), softmax(v))


class ChoiceModel:
    """Price-independent geometry of a scenario, ready for repeated pricing.

    Everything except the expense terms is fixed once positions, SOC and
    station occupancy are known, so the reference station, the time values
    and the postpone option are computed once here. Column ``J`` (the last) of
    every ``(N, J + 1)`` array is the postpone option.
    """

    def __init__(self, scenario: Scenario, provider: TravelProvider):
        m = scenario.market
        self.market = m
        self.station_ids = tuple(st.id for st in scenario.stations)
        self.ev_ids = tuple(ev.id for ev in scenario.evs)
        evs, stations = scenario.evs, scenario.stations
        n, j = len(evs), len(stations)

        ev_power = np.array([ev.max_onboard_power_kw for ev in evs])
        pile_power = np.array([st.pile_power_kw for st in stations])
        self.power = np.minimum(ev_power[:, None], pile_power[None, :])
        target = np.array([ev.target_energy_kwh for ev in evs])
        limit = np.array([ev.time_limit_h for ev in evs])
        self.energy = np.minimum(target[:, None], self.power * limit[:, None])

        waits = np.array([wait_time(st) for st in stations])
        drive = np.array([[provider.drive_time(ev.position, st.position, ev.id, st.id) for st in stations]
                          for ev in evs]).reshape(n, j)
        self.time = drive + waits[None, :]
        self.ref = np.argmin(self.time, axis=1) if j else np.zeros(n, dtype=int)
        t_ref = self.time[np.arange(n), self.ref]

        soc = np.array([ev.soc for ev in evs])
        t_virtual = t_ref + limit * m.soc_safe / (1.0 - m.soc_safe) * (1.0 / soc - 1.0)
        self.virtual_energy = np.minimum(target, ev_power * limit)
        self.virtual_expense = m.normal_price * self.virtual_energy

        extra = np.concatenate([self.time - t_ref[:, None], (t_virtual - t_ref)[:, None]], axis=1)
        extra /= m.value_time_unit_h
        self.time_value = -m.value_lambda * np.maximum(extra, 0.0) ** m.value_beta

    @property
    def shape(self) -> tuple[int, int]:
        return self.energy.shape

    def money_value(self, prices: np.ndarray) -> np.ndarray:
        """Perceived expense value per EV and candidate, shape ``(N, J + 1)``."""
        m = self.market
        n = self.energy.shape[0]
        expense = np.concatenate([self.energy * prices[None, :], self.virtual_expense[:, None]], axis=1)
        saving = expense[np.arange(n), self.ref][:, None] - expense
        size = np.abs(saving)
        if m.value_alpha == m.value_beta:
            pw = size ** m.value_alpha
            return np.where(saving > 0, pw, -m.value_lambda * pw)
        return np.where(saving > 0, size ** m.value_alpha, -m.value_lambda * size ** m.value_beta)

    def probabilities(self, prices: np.ndarray, thetas: np.ndarray) -> np.ndarray:
        """Logit choice probabilities, shape ``(Z, N, J + 1)`` for ``Z`` theta values."""
        prices = np.asarray(prices, dtype=float)
        thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
        v = self.money_value(prices)[None, :, :] + thetas[:, None, None] * self.time_value[None, :, :]
        return softmax(v, axis=-1)

    def _time_weights(self, thetas: np.ndarray) -> np.ndarray:
        key = thetas.tobytes()
        cache = self.__dict__.setdefault("_tw_cache", {})
        if key not in cache:
            cache[key] = np.exp(thetas[:, None, None] * self.time_value[None, :, :])
        return cache[key]

    def sigma(self, prices: np.ndarray, values: np.ndarray, probs: np.ndarray) -> np.ndarray:
        """Choice probabilities averaged over a discretized theta distribution, shape ``(N, J + 1)``.

        exp(V) factors into a price part and a precomputed theta part, which
        saves an exponential per theta value. Inputs extreme enough to hit
        the clamp or underflow fall back to the plain softmax.
        """
        prices = np.asarray(prices, dtype=float)
        values = np.atleast_1d(np.asarray(values, dtype=float))
        probs = np.asarray(probs, dtype=float)
        vm = self.money_value(prices)
        bound = float(np.max(np.abs(vm))) + float(np.max(np.abs(values))) * float(np.max(-self.time_value, initial=0.0))
        if bound <= V_CLAMP:
            e = np.exp(vm - vm.max(axis=1, keepdims=True))
            w = self._time_weights(values) * e[None, :, :]
            totals = w.sum(axis=-1, keepdims=True)
            if np.all(totals > 1e-280):
                return np.tensordot(probs, w / totals, axes=(0, 0))
        return np.tensordot(probs, self.probabilities(prices, values), axes=(0, 0))
