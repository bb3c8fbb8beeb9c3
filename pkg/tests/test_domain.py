from dataclasses import replace

import pytest

from csa_pricing.domain import Alliance, MarketConfig, ThetaBelief, validate_scenario
from conftest import make_ev, make_station


def test_base_scenario_is_valid(base_scenario):
    assert validate_scenario(base_scenario) == []


def test_unknown_alliance_reference_names_station(base_scenario):
    st = replace(base_scenario.stations[3], alliance_id="X")
    s = base_scenario.replace(stations=base_scenario.stations[:3] + (st,) + base_scenario.stations[4:])
    errors = validate_scenario(s)
    assert any(st.id in e and "X" in e for e in errors)


def test_soc_above_target_names_ev(base_scenario):
    ev = replace(base_scenario.evs[0], soc=0.9, soc_target=0.8)
    errors = validate_scenario(base_scenario.replace(evs=(ev,) + base_scenario.evs[1:]))
    assert len(errors) == 1 and ev.id in errors[0]


def test_duplicate_ids_reported(base_scenario):
    evs = base_scenario.evs + (base_scenario.evs[0],)
    assert any("duplicate" in e for e in validate_scenario(base_scenario.replace(evs=evs)))


def test_unsorted_remaining_times_rejected(base_scenario):
    st = make_station("cs000", "star", remaining=(0.5, 0.1), piles=4)
    stations = (st,) + base_scenario.stations[1:]
    assert any("sorted" in e for e in validate_scenario(base_scenario.replace(stations=stations)))


def test_market_and_belief_checks(base_scenario):
    bad_market = replace(base_scenario.market, grid_price=4.0)
    assert validate_scenario(base_scenario.replace(market=bad_market))
    beliefs = {"star": ThetaBelief(mu=-0.1)}
    assert any("star" in e for e in validate_scenario(base_scenario.replace(theta_beliefs=beliefs)))
    beliefs = {"nobody": ThetaBelief()}
    assert validate_scenario(base_scenario.replace(theta_beliefs=beliefs))


def test_alliance_must_list_its_stations(base_scenario):
    star = base_scenario.alliances[0]
    trimmed = Alliance(star.id, star.station_ids[1:], star.dr)
    errors = validate_scenario(base_scenario.replace(alliances=(trimmed,) + base_scenario.alliances[1:]))
    assert any(star.station_ids[0] in e for e in errors)


def test_price_grid_has_26_prices():
    m = MarketConfig()
    assert m.price_count == 26
    grid = m.price_grid()
    assert grid[0] == 0.5 and grid[-1] == 3.0 and grid[7] == 1.2


def test_normal_price_defaults_to_midpoint():
    assert MarketConfig().normal_price == pytest.approx(1.75)
    assert MarketConfig(normal_price=1.2).normal_price == 1.2


def test_target_energy():
    assert make_ev(soc=0.3, soc_target=0.8, capacity=60).target_energy_kwh == pytest.approx(30.0)
