"""Driving-time providers and station waiting time."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .domain import GeoPoint, Station

EARTH_RADIUS_KM = 6371.0


class TravelLookupError(KeyError):
    """A matrix provider was asked for an (ev, station) pair it does not hold."""


class TransportError(RuntimeError):
    """The external route-planning service could not be reached."""


def haversine_km(a: GeoPoint, b: GeoPoint) -> float:
    lon1, lat1, lon2, lat2 = map(math.radians, (a.lon, a.lat, b.lon, b.lat))
    h = math.sin((lat2 - lat1) / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


class TravelProvider:
    """Route planning service: trip duration in hours from an EV to a station."""

    def drive_time(self, origin: GeoPoint, dest: GeoPoint, ev_id: str, station_id: str) -> float:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class SyntheticProvider(TravelProvider):
    """Great-circle distance inflated by a detour factor at a constant speed."""

    speed_kmh: float = 30.0
    detour_factor: float = 1.4

    def __post_init__(self) -> None:
        if not self.speed_kmh > 0:
            raise ValueError("speed_kmh must be > 0")
        if not self.detour_factor >= 1:
            raise ValueError("detour_factor must be >= 1")

    def drive_time(self, origin, dest, ev_id=None, station_id=None):
        if origin == dest:
            return 0.0
        return haversine_km(origin, dest) * self.detour_factor / self.speed_kmh

    def to_dict(self) -> dict:
        return {"kind": "synthetic", "speed_kmh": self.speed_kmh, "detour_factor": self.detour_factor}


@dataclass(frozen=True)
class MatrixProvider(TravelProvider):
    table: Mapping[tuple[str, str], float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for pair, hours in self.table.items():
            if not (math.isfinite(hours) and hours >= 0):
                raise ValueError(f"travel time for {pair} must be finite and >= 0, got {hours}")

    def drive_time(self, origin, dest, ev_id, station_id):
        try:
            return self.table[(ev_id, station_id)]
        except KeyError:
            raise TravelLookupError(f"no travel time for pair (ev={ev_id!r}, station={station_id!r})") from None

    def check_coverage(self, ev_ids: Iterable[str], station_ids: Iterable[str]) -> None:
        station_ids = list(station_ids)
        missing = [(e, s) for e in ev_ids for s in station_ids if (e, s) not in self.table]
        if missing:
            raise TravelLookupError(f"matrix misses {len(missing)} pairs, first {missing[0]}")

    @classmethod
    def from_csv(cls, path: str | Path, ev_ids: Iterable[str], station_ids: Iterable[str]) -> "MatrixProvider":
        """Load ``ev_id,station_id,hours`` rows; unknown ids and gaps are rejected."""
        ev_ids, station_ids = list(ev_ids), list(station_ids)
        known_ev, known_st = set(ev_ids), set(station_ids)
        table: dict[tuple[str, str], float] = {}
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != ["ev_id", "station_id", "hours"]:
                raise ValueError(f"{path}: expected header ev_id,station_id,hours, got {reader.fieldnames}")
            for lineno, row in enumerate(reader, start=2):
                if row["ev_id"] not in known_ev:
                    raise ValueError(f"{path}:{lineno}: unknown ev_id {row['ev_id']!r}")
                if row["station_id"] not in known_st:
                    raise ValueError(f"{path}:{lineno}: unknown station_id {row['station_id']!r}")
                table[(row["ev_id"], row["station_id"])] = float(row["hours"])
        provider = cls(table)
        provider.check_coverage(ev_ids, station_ids)
        return provider

    def to_dict(self) -> dict:
        return {"kind": "matrix", "entries": [[e, s, h] for (e, s), h in sorted(self.table.items())]}


@dataclass(frozen=True)
class ExternalProvider(TravelProvider):
    """Placeholder for an online map API. Never contacted by the test suite."""

    endpoint: str = ""
    api_key_env: str = ""

    def drive_time(self, origin, dest, ev_id=None, station_id=None):
        raise TransportError(f"external route planner at {self.endpoint!r} is not available offline")

    def to_dict(self) -> dict:
        return {"kind": "external", "endpoint": self.endpoint, "api_key_env": self.api_key_env}


def provider_from_dict(d: Mapping | None) -> TravelProvider:
    if not d:
        return SyntheticProvider()
    kind = d.get("kind", "synthetic")
    if kind == "synthetic":
        return SyntheticProvider(float(d.get("speed_kmh", 30.0)), float(d.get("detour_factor", 1.4)))
    if kind == "matrix":
        return MatrixProvider({(e, s): float(h) for e, s, h in d["entries"]})
    if kind == "external":
        return ExternalProvider(d.get("endpoint", ""), d.get("api_key_env", ""))
    raise ValueError(f"unknown travel provider kind {kind!r}")


def drive_time(provider: TravelProvider, origin: GeoPoint, dest: GeoPoint,
               ev_id: str | None = None, station_id: str | None = None) -> float:
    return provider.drive_time(origin, dest, ev_id, station_id)


def wait_time(st: Station, mean_service_h: float | None = None) -> float:
    """Expected wait on arrival at ``st``.

    With a free pile the wait is zero; when every pile is busy the newcomer
    waits for the ``queue_count``-th (0-based) pile release. Once the queue is
    longer than the number of charging EVs the release order is unknown, so
    every further round of ``pile_count`` queued EVs adds one mean service
    time, ``mean_service_h`` defaulting to the mean remaining charge time.
    """
    rem = st.charging_remaining_h
    if len(rem) < st.pile_count:
        return 0.0
    if st.queue_count < len(rem):
        return rem[st.queue_count]
    service = mean_service_h if mean_service_h is not None else sum(rem) / len(rem)
    rounds = math.ceil((st.queue_count - len(rem) + 1) / st.pile_count)
    return rem[-1] + rounds * service
