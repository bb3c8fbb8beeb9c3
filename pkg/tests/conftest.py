from __future__ import annotations

from importlib import resources

import numpy as np
import pytest

from csa_pricing.domain import (Alliance, DrContract, EvRequest, GeoPoint, MarketConfig, Scenario, Station,
                                ThetaBelief)
from csa_pricing.scenario import load_scenario

GOLDEN = resources.files("csa_pricing") / "data" / "base_scenario.json"

# Lines recorded by the acceptance suite, echoed again at the end of the run.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def base_scenario() -> Scenario:
    return load_scenario(GOLDEN)


def make_ev(ev_id="ev1", lon=121.5, lat=31.2, soc=0.3, soc_target=0.8, capacity=60.0, limit=2.0,
            theta=0.1, power=60.0) -> EvRequest:
    return EvRequest(ev_id, GeoPoint(lon, lat), soc, soc_target, capacity, limit, theta, power)


def make_station(st_id="cs1", alliance="A", lon=121.51, lat=31.2, piles=4, power=60.0,
                 remaining=(), queue=0) -> Station:
    return Station(st_id, GeoPoint(lon, lat), alliance, piles, power, tuple(remaining), queue)


def tiny_scenario(rng: np.random.Generator, n_alliances=2, max_evs=3, max_stations=4, dr=None,
                  market: MarketConfig | None = None) -> Scenario:
    """Random small market: every alliance owns at least one station."""
    j = int(rng.integers(n_alliances, max_stations + 1))
    owner = list(range(n_alliances)) + list(rng.integers(0, n_alliances, size=j - n_alliances))
    ids = [f"A{k}" for k in range(n_alliances)]
    stations = []
    for s in range(j):
        piles = int(rng.integers(1, 4))
        busy = int(rng.integers(0, piles + 1))
        rem = tuple(sorted(float(x) for x in rng.uniform(0.05, 1.0, size=busy)))
        queue = int(rng.integers(0, 3)) if busy == piles else 0
        stations.append(Station(f"cs{s}", GeoPoint(121.5 + rng.uniform(0, 0.03), 31.2 + rng.uniform(0, 0.03)),
                                ids[owner[s]], piles, float(rng.choice([30.0, 60.0, 120.0])), rem, queue))
    evs = []
    for i in range(int(rng.integers(1, max_evs + 1))):
        soc = float(rng.uniform(0.12, 0.7))
        evs.append(EvRequest(f"ev{i}", GeoPoint(121.5 + rng.uniform(0, 0.03), 31.2 + rng.uniform(0, 0.03)),
                             soc, 0.8, 60.0, float(rng.uniform(0.3, 2.0)), 0.1, float(rng.choice([50.0, 60.0]))))
    if dr is None:
        dr = bool(rng.integers(0, 2))
    alliances = []
    for k, aid in enumerate(ids):
        contract = DrContract(float(rng.uniform(20, 200)), float(rng.uniform(0.5, 6)), float(rng.uniform(0, 5)), dr)
        alliances.append(Alliance(aid, tuple(st.id for st in stations if st.alliance_id == aid), contract))
    return Scenario(tuple(evs), tuple(stations), tuple(alliances), market or MarketConfig(),
                    ThetaBelief(0.1, 0.025, 3))
