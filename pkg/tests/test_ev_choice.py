import math

import numpy as np
import pytest

from csa_pricing.domain import MarketConfig
from csa_pricing.ev_choice import (VIRTUAL, Candidate, ChoiceModel, build_candidates, choice_probabilities,
                                   comprehensive_value, energy_demand, expense_cost, softmax, time_cost,
                                   value, virtual_time_cost)
from csa_pricing.travel import SyntheticProvider
from conftest import make_ev, make_station
from oracles import straight_line_rho

M = MarketConfig()


@pytest.mark.parametrize("soc,limit,ev_kw,pile_kw,expected", [
    (0.3, 2.0, 60, 60, 30.0),
    (0.3, 0.25, 60, 60, 15.0),
    (0.2, 0.5, 120, 50, 25.0),
])
def test_energy_demand(soc, limit, ev_kw, pile_kw, expected):
    ev = make_ev(soc=soc, limit=limit, power=ev_kw)
    assert energy_demand(ev, make_station(power=pile_kw)) == pytest.approx(expected)


def test_expense_and_time_cost():
    assert expense_cost(1.0, 30) == 30
    assert expense_cost(0, 17.3) == 0
    assert expense_cost(1.2, 25) == pytest.approx(30)
    assert time_cost(0.1, 0.2) == pytest.approx(0.3)
    assert time_cost(0, 0) == 0
    assert time_cost(0.14, 0.2) == pytest.approx(0.34)


def test_value_function_examples():
    assert value(3.0, 3.0, M) == 0
    assert value(1.0, 0.0, M) == pytest.approx(1.0)
    assert value(0.0, 1.0, M) == pytest.approx(-2.25)
    assert value(2.0, 0.0, M) == pytest.approx(1.8404, abs=1e-4)


def test_comprehensive_value_examples():
    ref = Candidate("r", 30.0, 0.3, 30.0)
    assert comprehensive_value(ref, ref, 0.1, M) == 0
    slow = Candidate("s", 30.0, 0.5, 30.0)
    assert comprehensive_value(slow, ref, 0.1, M) == pytest.approx(0.1 * -2.25 * 0.2 ** 0.88)
    assert comprehensive_value(slow, ref, 0.1, M) == pytest.approx(-0.05459, abs=1e-5)
    cheap = Candidate("c", 25.0, 0.3, 30.0)
    assert comprehensive_value(cheap, ref, 0.1, M) == pytest.approx(4.12186, abs=1e-5)


def test_time_unit_rescales_time_term():
    ref = Candidate("r", 30.0, 0.3, 30.0)
    slow = Candidate("s", 30.0, 0.5, 30.0)
    minutes = MarketConfig(value_time_unit_h=1 / 60)
    assert comprehensive_value(slow, ref, 0.1, minutes) == pytest.approx(0.1 * -2.25 * 12.0 ** 0.88)


def test_virtual_time_cost_examples():
    assert virtual_time_cost(0.1, 1.0, 0.2, 0.1) == pytest.approx(1.2)
    assert virtual_time_cost(0.2, 1.0, 0.2, 0.1) == pytest.approx(0.2 + 4 / 9, abs=1e-12)
    assert virtual_time_cost(1.0 - 1e-12, 1.0, 0.2, 0.1) == pytest.approx(0.2)


def test_softmax_examples():
    assert softmax(np.array([1.3, 1.3])) == pytest.approx([0.5, 0.5])
    assert softmax(np.array([0.0, math.log(2)])) == pytest.approx([1 / 3, 2 / 3])
    # Clamping keeps extreme inputs finite.
    p = softmax(np.array([1e6, -1e6, 0.0]))
    assert np.all(np.isfinite(p)) and p.sum() == pytest.approx(1.0)


def test_symmetric_stations_without_virtual_split_evenly():
    ev = make_ev(lon=121.50, lat=31.20)
    a = make_station("a", lon=121.51, lat=31.20)
    b = make_station("b", lon=121.49, lat=31.20)
    d = choice_probabilities(ev, [1.0, 1.0], [a, b], SyntheticProvider(), 0.1, M, include_virtual=False)
    assert d["a"] == pytest.approx(0.5) and d["b"] == pytest.approx(0.5)


def test_reference_is_fastest_station_and_virtual_is_last():
    ev = make_ev()
    near = make_station("near", lon=121.501)
    far = make_station("far", lon=121.55)
    cands, ref = build_candidates(ev, {"near": 2.0, "far": 1.0}, [far, near], SyntheticProvider(), M)
    assert cands[ref].station_id == "near"
    assert cands[-1].station_id == VIRTUAL
    assert cands[-1].expense_cost == pytest.approx(M.normal_price * 30.0)


@pytest.mark.parametrize("unit", [1.0, 1 / 60])
def test_two_station_distribution_matches_straight_line_oracle(unit):
    market = MarketConfig(value_time_unit_h=unit)
    provider = SyntheticProvider()
    ev = make_ev(soc=0.25, limit=1.2)
    stations = [make_station("a", lon=121.52, remaining=(0.2, 0.3, 0.5, 0.9), queue=1, piles=4),
                make_station("b", lon=121.505, lat=31.21, power=50)]
    prices = [0.9, 1.1]
    got = choice_probabilities(ev, prices, stations, provider, 0.12, market).probabilities
    want = straight_line_rho(ev, stations, prices, 0.12, market,
                             lambda e, s: provider.drive_time(e.position, s.position))
    assert got == pytest.approx(want, abs=1e-12)


def test_vectorized_model_matches_scalar_path(base_scenario):
    provider = SyntheticProvider()
    sub = base_scenario.replace(evs=base_scenario.evs[:15])
    model = ChoiceModel(sub, provider)
    rng = np.random.default_rng(3)
    prices = rng.uniform(0.5, 3.0, len(sub.stations))
    thetas = np.array([0.05, 0.1, 0.2])
    probs = model.probabilities(prices, thetas)
    for i, ev in enumerate(sub.evs):
        for z, th in enumerate(thetas):
            row = choice_probabilities(ev, prices, sub.stations, provider, th, sub.market).probabilities
            assert probs[z, i] == pytest.approx(row, abs=1e-12)
    sig = model.sigma(prices, thetas, np.array([0.2, 0.5, 0.3]))
    assert sig == pytest.approx(np.tensordot([0.2, 0.5, 0.3], probs, axes=(0, 0)), abs=1e-13)
