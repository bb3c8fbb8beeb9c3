"""Core value types shared by every module, plus scenario validation.

Units are fixed throughout the package: money in yuan, energy in kWh, power
in kW and durations in hours.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Mapping


@dataclass(frozen=True)
class GeoPoint:
    lon: float
    lat: float


@dataclass(frozen=True)
class EvRequest:
    """A single charging request at the decision instant.

    ``theta_true`` is the driver's private time-sensitivity coefficient. It is
    only used when simulating what actually happens; stations never see it.
    """

    id: str
    position: GeoPoint
    soc: float
    soc_target: float
    capacity_kwh: float
    time_limit_h: float
    theta_true: float
    max_onboard_power_kw: float

    @property
    def target_energy_kwh(self) -> float:
        return (self.soc_target - self.soc) * self.capacity_kwh


@dataclass(frozen=True)
class Station:
    """A charging station and its occupancy at the decision instant."""

    id: str
    position: GeoPoint
    alliance_id: str
    pile_count: int
    pile_power_kw: float
    charging_remaining_h: tuple[float, ...] = ()
    queue_count: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "charging_remaining_h", tuple(self.charging_remaining_h))


@dataclass(frozen=True)
class DrContract:
    fil_kw: float = 0.0
    penalty_price: float = 0.0
    prepaid_incentive: float = 0.0
    enabled: bool = False


@dataclass(frozen=True)
class Alliance:
    id: str
    station_ids: tuple[str, ...]
    dr: DrContract = field(default_factory=DrContract)

    def __post_init__(self) -> None:
        object.__setattr__(self, "station_ids", tuple(self.station_ids))


@dataclass(frozen=True)
class MarketConfig:
    grid_price: float = 0.5
    price_max: float = 3.0
    price_step: float = 0.1
    normal_price: float | None = None
    soc_safe: float = 0.1
    value_alpha: float = 0.88
    value_beta: float = 0.88
    value_lambda: float = 2.25
    # Length in hours of one unit of time as drivers perceive it in the value
    # function; 1/60 values time differences in minutes.
    value_time_unit_h: float = 1.0

    def __post_init__(self) -> None:
        if self.normal_price is None:
            object.__setattr__(self, "normal_price", 0.5 * (self.grid_price + self.price_max))

    @property
    def price_count(self) -> int:
        return int(round((self.price_max - self.grid_price) / self.price_step)) + 1

    def price_grid(self) -> list[float]:
        """All optional prices, rounded to kill accumulated float error."""
        return [round(self.grid_price + k * self.price_step, 10) for k in range(self.price_count)]


@dataclass(frozen=True)
class ThetaBelief:
    """Normal distribution of theta truncated to (0, inf), discretized into ``z`` values."""

    mu: float = 0.1
    sigma: float = 0.025
    z: int = 11


@dataclass(frozen=True)
class Scenario:
    evs: tuple[EvRequest, ...]
    stations: tuple[Station, ...]
    alliances: tuple[Alliance, ...]
    market: MarketConfig = field(default_factory=MarketConfig)
    theta_truth: ThetaBelief = field(default_factory=ThetaBelief)
    theta_beliefs: Mapping[str, ThetaBelief] = field(default_factory=dict)
    # Raw generator config the scenario was built from, if any. Lets sweeps
    # regenerate EVs at other demand levels.
    generator: Mapping[str, Any] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "evs", tuple(self.evs))
        object.__setattr__(self, "stations", tuple(self.stations))
        object.__setattr__(self, "alliances", tuple(self.alliances))
        object.__setattr__(self, "theta_beliefs", dict(self.theta_beliefs))

    def belief(self, alliance_id: str) -> ThetaBelief:
        """Perceived theta distribution of an alliance, falling back to the truth."""
        return self.theta_beliefs.get(alliance_id, self.theta_truth)

    def station_index(self) -> dict[str, int]:
        return {st.id: j for j, st in enumerate(self.stations)}

    def alliance(self, alliance_id: str) -> Alliance:
        for a in self.alliances:
            if a.id == alliance_id:
                return a
        raise KeyError(alliance_id)

    def replace(self, **changes: Any) -> "Scenario":
        from dataclasses import replace

        return replace(self, **changes)


def _finite(*xs: float) -> bool:
    return all(isinstance(x, (int, float)) and math.isfinite(x) for x in xs)


def _check_point(where: str, p: GeoPoint) -> list[str]:
    out = []
    if not _finite(p.lon, p.lat):
        return [f"{where}: position must be finite"]
    if not -180.0 <= p.lon <= 180.0:
        out.append(f"{where}: lon {p.lon} outside [-180, 180]")
    if not -90.0 <= p.lat <= 90.0:
        out.append(f"{where}: lat {p.lat} outside [-90, 90]")
    return out


def _check_ev(ev: EvRequest) -> list[str]:
    where = f"ev {ev.id!r}"
    out = _check_point(where, ev.position)
    if not _finite(ev.soc, ev.soc_target, ev.capacity_kwh, ev.time_limit_h, ev.theta_true,
                   ev.max_onboard_power_kw):
        return out + [f"{where}: numeric fields must be finite"]
    if not 0.0 < ev.soc < ev.soc_target <= 1.0:
        out.append(f"{where}: requires 0 < soc < soc_target <= 1 "
                   f"(soc={ev.soc}, soc_target={ev.soc_target})")
    if ev.capacity_kwh <= 0:
        out.append(f"{where}: capacity_kwh must be > 0")
    if ev.time_limit_h <= 0:
        out.append(f"{where}: time_limit_h must be > 0")
    if ev.theta_true <= 0:
        out.append(f"{where}: theta_true must be > 0")
    if ev.max_onboard_power_kw <= 0:
        out.append(f"{where}: max_onboard_power_kw must be > 0")
    return out


def _check_station(st: Station) -> list[str]:
    where = f"station {st.id!r}"
    out = _check_point(where, st.position)
    rem = st.charging_remaining_h
    if not isinstance(st.pile_count, int) or st.pile_count < 1:
        out.append(f"{where}: pile_count must be an integer >= 1")
        return out
    if not _finite(st.pile_power_kw) or st.pile_power_kw <= 0:
        out.append(f"{where}: pile_power_kw must be > 0")
    if len(rem) > st.pile_count:
        out.append(f"{where}: {len(rem)} charging EVs exceed {st.pile_count} piles")
    if not _finite(*rem) or any(r < 0 for r in rem):
        out.append(f"{where}: charging_remaining_h entries must be finite and >= 0")
    elif any(a > b for a, b in zip(rem, rem[1:])):
        out.append(f"{where}: charging_remaining_h must be sorted ascending")
    if not isinstance(st.queue_count, int) or st.queue_count < 0:
        out.append(f"{where}: queue_count must be an integer >= 0")
    elif st.queue_count > 0 and len(rem) != st.pile_count:
        out.append(f"{where}: queue_count > 0 requires all piles occupied")
    return out


def _check_market(m: MarketConfig) -> list[str]:
    out = []
    if not _finite(m.grid_price, m.price_max, m.price_step, m.normal_price, m.soc_safe,
                   m.value_alpha, m.value_beta, m.value_lambda, m.value_time_unit_h):
        return ["market: numeric fields must be finite"]
    if m.grid_price > m.price_max:
        out.append("market: grid_price must be <= price_max")
    if m.price_step <= 0:
        out.append("market: price_step must be > 0")
    else:
        n = (m.price_max - m.grid_price) / m.price_step
        if abs(n - round(n)) > 1e-9:
            out.append("market: (price_max - grid_price) / price_step must be a whole number")
    if not 0.0 < m.soc_safe < 1.0:
        out.append("market: soc_safe must lie in (0, 1)")
    if not (0.0 < m.value_alpha < 1.0 and 0.0 < m.value_beta < 1.0):
        out.append("market: value_alpha and value_beta must lie in (0, 1)")
    if m.value_lambda < 1.0:
        out.append("market: value_lambda must be >= 1")
    if m.value_time_unit_h <= 0:
        out.append("market: value_time_unit_h must be > 0")
    return out


def _check_belief(where: str, b: ThetaBelief) -> list[str]:
    out = []
    if not _finite(b.mu, b.sigma) or b.mu <= 0:
        out.append(f"{where}: mu must be > 0")
    if not _finite(b.sigma) or b.sigma <= 0:
        out.append(f"{where}: sigma must be > 0")
    if not isinstance(b.z, int) or b.z < 1:
        out.append(f"{where}: z must be an integer >= 1")
    return out


def validate_scenario(s: Scenario) -> list[str]:
    """Return a description of every violated invariant; empty when valid."""
    out: list[str] = []
    ev_ids = [ev.id for ev in s.evs]
    st_ids = [st.id for st in s.stations]
    for dup in sorted(i for i, n in Counter(ev_ids).items() if n > 1):
        out.append(f"ev {dup!r}: duplicate id")
    for dup in sorted(i for i, n in Counter(st_ids).items() if n > 1):
        out.append(f"station {dup!r}: duplicate id")

    for ev in s.evs:
        out += _check_ev(ev)
    alliance_ids = {a.id for a in s.alliances}
    for st in s.stations:
        out += _check_station(st)
        if st.alliance_id not in alliance_ids:
            out.append(f"station {st.id!r}: alliance_id {st.alliance_id!r} does not resolve")

    known = set(st_ids)
    seen_alliance: set[str] = set()
    for a in s.alliances:
        where = f"alliance {a.id!r}"
        if a.id in seen_alliance:
            out.append(f"{where}: duplicate id")
        seen_alliance.add(a.id)
        if not a.station_ids:
            out.append(f"{where}: station_ids must be non-empty")
        if len(set(a.station_ids)) != len(a.station_ids):
            out.append(f"{where}: station_ids must be distinct")
        for sid in a.station_ids:
            if sid not in known:
                out.append(f"{where}: station {sid!r} does not resolve")
        if not _finite(a.dr.fil_kw, a.dr.penalty_price, a.dr.prepaid_incentive):
            out.append(f"{where}: DR contract values must be finite")
        elif min(a.dr.fil_kw, a.dr.penalty_price, a.dr.prepaid_incentive) < 0:
            out.append(f"{where}: DR contract values must be >= 0")
    owner = {sid: a.id for a in s.alliances for sid in a.station_ids}
    for st in s.stations:
        if st.alliance_id in alliance_ids and owner.get(st.id) != st.alliance_id:
            out.append(f"station {st.id!r}: not listed by alliance {st.alliance_id!r}")

    out += _check_market(s.market)
    out += _check_belief("theta_truth", s.theta_truth)
    for aid, b in s.theta_beliefs.items():
        if aid not in alliance_ids:
            out.append(f"theta_beliefs: alliance {aid!r} does not resolve")
        out += _check_belief(f"theta_beliefs[{aid!r}]", b)
    return out
