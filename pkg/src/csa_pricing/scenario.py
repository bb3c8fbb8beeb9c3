"""Synthetic scenario generation and JSON (de)serialization."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .domain import (Alliance, DrContract, EvRequest, GeoPoint, MarketConfig, Scenario, Station,
                     ThetaBelief, validate_scenario)
from .payoff import truncated_theta

BASE_EV_COUNT = 300
# Firm service levels of the three alliances when a DR event is in force, kW.
BASE_FIL_KW = (6072.3, 9975.9, 1951.8)
BASE_PENALTY_PRICE = 6.0


class ScenarioError(ValueError):
    """Malformed or invalid scenario document."""


@dataclass(frozen=True)
class AllianceLayout:
    id: str
    station_count: int
    dr: DrContract = field(default_factory=DrContract)


@dataclass(frozen=True)
class GeneratorConfig:
    box_min: GeoPoint
    box_max: GeoPoint
    alliances: tuple[AllianceLayout, ...]
    ev_count: int = BASE_EV_COUNT
    demand_multiplier: float = 1.0
    concentration: tuple[GeoPoint, GeoPoint] | None = None
    soc_range: tuple[float, float] = (0.15, 0.7)
    time_limit_range_h: tuple[float, float] = (0.5, 2.0)
    soc_target: float = 0.8
    capacity_kwh: float = 60.0
    ev_max_power_kw: float = 60.0
    pile_count: int = 4
    pile_power_kw: float = 60.0
    # Occupancy: uniform number of busy piles, remaining times uniform in the
    # range; full stations get 0..max_queue queued EVs.
    remaining_range_h: tuple[float, float] = (0.05, 1.0)
    max_queue: int = 2
    stations: tuple[Station, ...] | None = None
    market: MarketConfig = field(default_factory=MarketConfig)
    theta_truth: ThetaBelief = field(default_factory=ThetaBelief)
    theta_beliefs: Mapping[str, ThetaBelief] = field(default_factory=dict)
    seed: int = 0

    def check(self) -> None:
        if not (self.box_min.lon < self.box_max.lon and self.box_min.lat < self.box_max.lat):
            raise ScenarioError("bounding box must have box_min strictly south-west of box_max")
        if self.ev_count < 1:
            raise ScenarioError("ev_count must be >= 1")
        if not self.demand_multiplier > 0:
            raise ScenarioError("demand_multiplier must be > 0")
        if self.concentration is not None:
            lo, hi = self.concentration
            if not (lo.lon < hi.lon and lo.lat < hi.lat):
                raise ScenarioError("concentration region must be a well-formed box")
        if not 0 < self.soc_range[0] <= self.soc_range[1] < self.soc_target <= 1:
            raise ScenarioError("soc_range must lie inside (0, soc_target)")
        if not 0 < self.time_limit_range_h[0] <= self.time_limit_range_h[1]:
            raise ScenarioError("time_limit_range_h must be positive")
        if self.stations is None and not self.alliances:
            raise ScenarioError("either explicit stations or alliance layouts are required")

    @property
    def scaled_ev_count(self) -> int:
        return max(1, int(round(self.ev_count * self.demand_multiplier)))


def build_base_case() -> GeneratorConfig:
    """Three alliances with 28, 46 and 9 stations over a ~9.5 x 8.9 km urban box, 300 EVs.

    DR contracts carry the sweep defaults but are disabled. Drivers weigh
    time differences in minutes.
    """
    layouts = tuple(
        AllianceLayout(aid, n, DrContract(fil_kw=fil, penalty_price=BASE_PENALTY_PRICE, enabled=False))
        for aid, n, fil in zip(("star", "teld", "sgcc"), (28, 46, 9), BASE_FIL_KW)
    )
    return GeneratorConfig(
        box_min=GeoPoint(121.50, 31.18),
        box_max=GeoPoint(121.60, 31.26),
        alliances=layouts,
        market=MarketConfig(grid_price=0.5, price_max=3.0, price_step=0.1, soc_safe=0.1,
                            value_alpha=0.88, value_beta=0.88, value_lambda=2.25,
                            value_time_unit_h=1.0 / 60.0),
        theta_truth=ThetaBelief(mu=0.1, sigma=0.025, z=11),
        seed=20240101,
    )


def quadrant(cfg: GeneratorConfig, corner: str) -> tuple[GeoPoint, GeoPoint]:
    """One quarter of the bounding box: ``corner`` in {"nw", "ne", "sw", "se"}."""
    mid_lon = 0.5 * (cfg.box_min.lon + cfg.box_max.lon)
    mid_lat = 0.5 * (cfg.box_min.lat + cfg.box_max.lat)
    lon = (cfg.box_min.lon, mid_lon) if corner[1] == "w" else (mid_lon, cfg.box_max.lon)
    lat = (mid_lat, cfg.box_max.lat) if corner[0] == "n" else (cfg.box_min.lat, mid_lat)
    return GeoPoint(lon[0], lat[0]), GeoPoint(lon[1], lat[1])


def _stream(seed: int, purpose: int) -> np.random.Generator:
    return np.random.default_rng([seed, purpose])


def generate(cfg: GeneratorConfig) -> Scenario:
    """Sample a scenario. Each EV attribute has its own random stream, so a
    larger demand multiplier extends the EV list instead of reshuffling it."""
    cfg.check()
    if cfg.stations is not None:
        stations = tuple(cfg.stations)
        alliances = tuple(Alliance(lay.id, tuple(st.id for st in stations if st.alliance_id == lay.id), lay.dr)
                          for lay in cfg.alliances)
    else:
        stations, alliances = _place_stations(cfg)

    n = cfg.scaled_ev_count
    lo, hi = cfg.concentration if cfg.concentration is not None else (cfg.box_min, cfg.box_max)
    pos = _stream(cfg.seed, 10).uniform(size=(n, 2))
    soc = _stream(cfg.seed, 11).uniform(*cfg.soc_range, size=n)
    limit = _stream(cfg.seed, 12).uniform(*cfg.time_limit_range_h, size=n)
    theta = truncated_theta(cfg.theta_truth).ppf(_stream(cfg.seed, 13).uniform(size=n))
    evs = tuple(
        EvRequest(
            id=f"ev{i:04d}",
            position=GeoPoint(_r(lo.lon + pos[i, 0] * (hi.lon - lo.lon)), _r(lo.lat + pos[i, 1] * (hi.lat - lo.lat))),
            soc=_r(soc[i]),
            soc_target=cfg.soc_target,
            capacity_kwh=cfg.capacity_kwh,
            time_limit_h=_r(limit[i]),
            theta_true=_r(theta[i]),
            max_onboard_power_kw=cfg.ev_max_power_kw,
        )
        for i in range(n)
    )
    scenario = Scenario(evs, stations, alliances, cfg.market, cfg.theta_truth, dict(cfg.theta_beliefs),
                        generator=config_to_dict(cfg))
    problems = validate_scenario(scenario)
    if problems:
        raise ScenarioError("generated scenario is invalid: " + "; ".join(problems))
    return scenario


def _r(x: float) -> float:
    # Round generated floats so JSON round-trips are exact and files stay readable.
    return round(float(x), 9)


def _place_stations(cfg: GeneratorConfig) -> tuple[tuple[Station, ...], tuple[Alliance, ...]]:
    pos_rng = _stream(cfg.seed, 1)
    occ_rng = _stream(cfg.seed, 2)
    stations, alliances = [], []
    for lay in cfg.alliances:
        ids = []
        for _ in range(lay.station_count):
            sid = f"cs{len(stations):03d}"
            u = pos_rng.uniform(size=2)
            busy = int(occ_rng.integers(0, cfg.pile_count + 1))
            remaining = tuple(sorted(_r(x) for x in occ_rng.uniform(*cfg.remaining_range_h, size=busy)))
            queue = int(occ_rng.integers(0, cfg.max_queue + 1)) if busy == cfg.pile_count else 0
            stations.append(Station(
                id=sid,
                position=GeoPoint(_r(cfg.box_min.lon + u[0] * (cfg.box_max.lon - cfg.box_min.lon)),
                                  _r(cfg.box_min.lat + u[1] * (cfg.box_max.lat - cfg.box_min.lat))),
                alliance_id=lay.id,
                pile_count=cfg.pile_count,
                pile_power_kw=cfg.pile_power_kw,
                charging_remaining_h=remaining,
                queue_count=queue,
            ))
            ids.append(sid)
        alliances.append(Alliance(lay.id, tuple(ids), lay.dr))
    return tuple(stations), tuple(alliances)


# -- JSON --------------------------------------------------------------------

def _point(d: Mapping, where: str) -> GeoPoint:
    return GeoPoint(float(_req(d, "lon", where)), float(_req(d, "lat", where)))


def _req(d: Mapping, key: str, where: str) -> Any:
    if not isinstance(d, Mapping):
        raise ScenarioError(f"{where}: expected an object")
    if key not in d:
        raise ScenarioError(f"{where}: missing required field {key!r}")
    return d[key]


def _build(cls, d: Mapping, where: str, required: tuple[str, ...] = (), **conv):
    if not isinstance(d, Mapping):
        raise ScenarioError(f"{where}: expected an object")
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ScenarioError(f"{where}: unknown fields {sorted(unknown)}")
    for key in required:
        _req(d, key, where)
    kwargs = {}
    for key, val in d.items():
        kwargs[key] = conv[key](val) if key in conv else val
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{where}: {exc}") from None


def ev_from_dict(d: Mapping, where: str = "ev") -> EvRequest:
    where = f"ev {d.get('id', '?')!r}" if isinstance(d, Mapping) else where
    soc = float(_req(d, "soc", where))
    soc_target = float(d.get("soc_target", 0.8))
    capacity = float(d.get("capacity_kwh", 60.0))
    power = float(_req(d, "max_onboard_power_kw", where))
    # Absent time limit: the minimal time needed to reach the target at full power.
    limit = d.get("time_limit_h")
    if limit is None:
        limit = (soc_target - soc) * capacity / power
    return EvRequest(
        id=str(_req(d, "id", where)),
        position=_point(_req(d, "position", where), where),
        soc=soc,
        soc_target=soc_target,
        capacity_kwh=capacity,
        time_limit_h=float(limit),
        theta_true=float(_req(d, "theta_true", where)),
        max_onboard_power_kw=power,
    )


def station_from_dict(d: Mapping) -> Station:
    where = f"station {d.get('id', '?')!r}" if isinstance(d, Mapping) else "station"
    return Station(
        id=str(_req(d, "id", where)),
        position=_point(_req(d, "position", where), where),
        alliance_id=str(_req(d, "alliance_id", where)),
        pile_count=_req(d, "pile_count", where),
        pile_power_kw=float(_req(d, "pile_power_kw", where)),
        charging_remaining_h=tuple(float(x) for x in d.get("charging_remaining_h", ())),
        queue_count=d.get("queue_count", 0),
    )


def alliance_from_dict(d: Mapping) -> Alliance:
    where = f"alliance {d.get('id', '?')!r}" if isinstance(d, Mapping) else "alliance"
    dr = _build(DrContract, d.get("dr", {}), f"{where}.dr")
    return Alliance(str(_req(d, "id", where)), tuple(_req(d, "station_ids", where)), dr)


def scenario_from_dict(d: Mapping) -> Scenario:
    if not isinstance(d, Mapping):
        raise ScenarioError("scenario: expected a JSON object")
    unknown = set(d) - {"evs", "stations", "alliances", "market", "theta_truth", "theta_beliefs", "generator"}
    if unknown:
        raise ScenarioError(f"scenario: unknown fields {sorted(unknown)}")
    evs = tuple(ev_from_dict(e) for e in _req(d, "evs", "scenario"))
    stations = tuple(station_from_dict(s) for s in _req(d, "stations", "scenario"))
    alliances = tuple(alliance_from_dict(a) for a in _req(d, "alliances", "scenario"))
    market = _build(MarketConfig, d.get("market", {}), "market")
    truth = _build(ThetaBelief, d.get("theta_truth", {}), "theta_truth")
    beliefs = {aid: _build(ThetaBelief, b, f"theta_beliefs[{aid!r}]")
               for aid, b in d.get("theta_beliefs", {}).items()}
    return Scenario(evs, stations, alliances, market, truth, beliefs, generator=d.get("generator"))


def scenario_to_dict(s: Scenario) -> dict:
    out = {
        "evs": [asdict(ev) for ev in s.evs],
        "stations": [{**asdict(st), "charging_remaining_h": list(st.charging_remaining_h)} for st in s.stations],
        "alliances": [{"id": a.id, "station_ids": list(a.station_ids), "dr": asdict(a.dr)} for a in s.alliances],
        "market": asdict(s.market),
        "theta_truth": asdict(s.theta_truth),
        "theta_beliefs": {aid: asdict(b) for aid, b in sorted(s.theta_beliefs.items())},
    }
    if s.generator is not None:
        out["generator"] = s.generator
    return out


def dumps(obj: Any) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, ensure_ascii=False) + "\n"


def save_scenario(s: Scenario, path: str | Path) -> None:
    Path(path).write_text(dumps(scenario_to_dict(s)), encoding="utf-8")


def load_scenario(path: str | Path) -> Scenario:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: malformed JSON: {exc}") from None
    s = scenario_from_dict(raw)
    problems = validate_scenario(s)
    if problems:
        raise ScenarioError(f"{path}: scenario fails validation: " + "; ".join(problems))
    return s


def config_to_dict(cfg: GeneratorConfig) -> dict:
    d = asdict(cfg)
    d["alliances"] = [asdict(a) for a in cfg.alliances]
    d["concentration"] = [asdict(p) for p in cfg.concentration] if cfg.concentration else None
    d["soc_range"] = list(cfg.soc_range)
    d["time_limit_range_h"] = list(cfg.time_limit_range_h)
    d["remaining_range_h"] = list(cfg.remaining_range_h)
    d["stations"] = ([{**asdict(st), "charging_remaining_h": list(st.charging_remaining_h)} for st in cfg.stations]
                     if cfg.stations is not None else None)
    d["theta_beliefs"] = {k: asdict(v) for k, v in sorted(cfg.theta_beliefs.items())}
    return d


def config_from_dict(d: Mapping, base: GeneratorConfig | None = None) -> GeneratorConfig:
    """Read a generator config; absent keys keep the values of ``base`` (the base case by default)."""
    base = base or build_base_case()
    if not isinstance(d, Mapping):
        raise ScenarioError("generator config: expected a JSON object")
    names = {f.name for f in fields(GeneratorConfig)}
    unknown = set(d) - names
    if unknown:
        raise ScenarioError(f"generator config: unknown fields {sorted(unknown)}")
    conv = {
        "box_min": lambda v: _point(v, "box_min"),
        "box_max": lambda v: _point(v, "box_max"),
        "alliances": lambda v: tuple(
            AllianceLayout(str(_req(a, "id", "alliances[]")), int(_req(a, "station_count", "alliances[]")),
                           _build(DrContract, a.get("dr", {}), "alliances[].dr")) for a in v),
        "concentration": lambda v: None if v is None else (_point(v[0], "concentration[0]"),
                                                          _point(v[1], "concentration[1]")),
        "soc_range": tuple, "time_limit_range_h": tuple, "remaining_range_h": tuple,
        "stations": lambda v: None if v is None else tuple(station_from_dict(s) for s in v),
        # Partial blocks override single fields of the base.
        "market": lambda v: _build(MarketConfig, {**asdict(base.market), **v}, "market"),
        "theta_truth": lambda v: _build(ThetaBelief, {**asdict(base.theta_truth), **v}, "theta_truth"),
        "theta_beliefs": lambda v: {k: _build(ThetaBelief, b, f"theta_beliefs[{k!r}]") for k, b in v.items()},
    }
    changes = {k: (conv[k](v) if k in conv else v) for k, v in d.items()}
    try:
        cfg = replace(base, **changes)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"generator config: {exc}") from None
    cfg.check()
    return cfg


def load_config(path: str | Path) -> GeneratorConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: malformed JSON: {exc}") from None
    return config_from_dict(raw)
