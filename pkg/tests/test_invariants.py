"""Decision-model invariants under property-based fuzzing, 1000 cases each."""

import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from csa_pricing.domain import MarketConfig
from csa_pricing.ev_choice import softmax, value, virtual_time_cost
from csa_pricing.evo_game import replicator_step
from csa_pricing.travel import wait_time
from conftest import make_station

CASES = settings(max_examples=1000, deadline=None, suppress_health_check=[HealthCheck.too_slow])

exponent = st.floats(0.2, 0.99)
loss_aversion = st.floats(1.0, 4.0)
magnitude = st.floats(1e-3, 1e3)


def market(a, b, lam):
    return MarketConfig(value_alpha=a, value_beta=b, value_lambda=lam)


@CASES
@given(exponent, loss_aversion, magnitude, magnitude, st.floats(-100, 100))
def test_concave_over_gains(a, lam, g1, g2, ref):
    m = market(a, a, lam)
    mid = value(ref + (g1 + g2) / 2, ref, m)
    assert mid >= (value(ref + g1, ref, m) + value(ref + g2, ref, m)) / 2 - 1e-9 * (1 + abs(mid))


@CASES
@given(exponent, loss_aversion, magnitude, magnitude, st.floats(-100, 100))
def test_convex_over_losses(b, lam, l1, l2, ref):
    m = market(b, b, lam)
    mid = value(ref - (l1 + l2) / 2, ref, m)
    assert mid <= (value(ref - l1, ref, m) + value(ref - l2, ref, m)) / 2 + 1e-9 * (1 + abs(mid))


@CASES
@given(exponent, loss_aversion, magnitude)
def test_losses_loom_larger(a, lam, x):
    m = market(a, a, lam)
    assert -value(-x, 0.0, m) >= value(x, 0.0, m) * (1 - 1e-12)
    if lam > 1:
        assert -value(-x, 0.0, m) > value(x, 0.0, m)


@CASES
@given(exponent, exponent, loss_aversion, magnitude, st.floats(1e-3, 10.0))
def test_diminishing_sensitivity(a, b, lam, x, step):
    # The same extra unit of gain or loss matters less the further from the reference.
    m = market(a, b, lam)
    near_gain = value(step, 0.0, m) - value(0.0, 0.0, m)
    far_gain = value(x + step, 0.0, m) - value(x, 0.0, m)
    assert far_gain <= near_gain * (1 + 1e-12)
    near_loss = value(0.0, 0.0, m) - value(-step, 0.0, m)
    far_loss = value(-x, 0.0, m) - value(-x - step, 0.0, m)
    assert far_loss <= near_loss * (1 + 1e-12)


@CASES
@given(exponent, exponent, loss_aversion, st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_value_monotone_and_zero_at_reference(a, b, lam, x, y, ref):
    m = market(a, b, lam)
    assert value(ref, ref, m) == 0
    lo, hi = sorted((x, y))
    assert value(lo, ref, m) <= value(hi, ref, m)
    assert (value(x, ref, m) > 0) == (x > ref)


utilities = hnp.arrays(float, st.integers(1, 12), elements=st.floats(-400, 400))


@CASES
@given(utilities)
def test_logit_normalized(v):
    p = softmax(v)
    assert np.all(p >= 0) and abs(p.sum() - 1) <= 1e-12


@CASES
@given(utilities, st.floats(-80, 80))
def test_logit_shift_invariant(v, c):
    assert softmax(v + c) == pytest.approx(softmax(v), abs=1e-9)


@CASES
@given(utilities)
def test_logit_order_preserving(v):
    p = softmax(v)
    order = np.argsort(v, kind="stable")
    assert np.all(np.diff(p[order]) >= -1e-15)


safe = st.floats(0.01, 0.5)
limit = st.floats(0.05, 5.0)
t_ref = st.floats(0.0, 3.0)


@CASES
@given(safe, limit, t_ref)
def test_virtual_at_safe_soc_delays_by_time_limit(soc_safe, t_limit, t0):
    assert virtual_time_cost(soc_safe, t_limit, t0, soc_safe) == pytest.approx(t0 + t_limit, rel=1e-12)


@CASES
@given(safe, limit, t_ref, st.floats(1e-9, 1e-6))
def test_virtual_near_full_costs_nothing_extra(soc_safe, t_limit, t0, gap):
    got = virtual_time_cost(1.0 - gap, t_limit, t0, soc_safe)
    assert got >= t0
    assert got - t0 <= t_limit * soc_safe / (1 - soc_safe) * 2 * gap


@CASES
@given(safe, limit, t_ref, st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_virtual_cost_falls_as_soc_rises(soc_safe, t_limit, t0, u, w):
    s1 = soc_safe + (1 - soc_safe) * min(u, w) * 0.999
    s2 = soc_safe + (1 - soc_safe) * max(u, w) * 0.999
    assert virtual_time_cost(s1, t_limit, t0, soc_safe) >= virtual_time_cost(s2, t_limit, t0, soc_safe)


@CASES
@given(st.integers(1, 6), st.data(), st.integers(0, 15), st.integers(0, 15))
def test_wait_monotone_in_queue(piles, data, q1, q2):
    busy = data.draw(st.integers(0, piles))
    rem = tuple(sorted(data.draw(st.lists(st.floats(0.0, 2.0), min_size=busy, max_size=busy))))
    lo, hi = sorted((q1, q2))
    a = wait_time(make_station(piles=piles, remaining=rem, queue=lo))
    b = wait_time(make_station(piles=piles, remaining=rem, queue=hi))
    assert 0 <= a <= b and math.isfinite(b)


@CASES
@given(st.lists(hnp.arrays(float, st.integers(1, 6), elements=st.floats(-1e6, 1e6)), min_size=1, max_size=4),
       st.integers(0, 2 ** 32 - 1))
def test_replicator_keeps_simplex(fits, seed):
    rng = np.random.default_rng(seed)
    pop = [rng.dirichlet(np.ones(f.size)) for f in fits]
    for x in replicator_step(pop, fits):
        assert np.all(x >= 0) and abs(x.sum() - 1) <= 1e-12
