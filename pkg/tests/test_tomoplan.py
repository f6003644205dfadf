import math

import numpy as np
import pytest
from scipy import stats

from qrhijack import bellmath as bm
from qrhijack.netgraph import NetworkGraph, Path
from qrhijack.tomoplan import (
    UNASSIGNED,
    InsufficientFidelityError,
    InsufficientStreamError,
    Predictable,
    SecureRandom,
    WindowParams,
    burst_intervals,
    es_connection_cost,
    es_levels,
    link_cost,
    maintenance_rate,
    make_schedule,
    plan_tomography,
    qec_connection_cost,
    required_window,
    verification_time,
)
from qrhijack.workload import ES, QEC, Connection

from oracles import werner_closed


def test_link_cost_examples():
    assert link_cost(1.0) == 10000
    assert link_cost(0.65) == pytest.approx(2500 * 16.2154, rel=1e-5)
    assert link_cost(0.65) == pytest.approx(40538, abs=1)
    for f in (0.6, 0.8, 0.95):
        assert link_cost(f, bm.ConstantCost(1)) == pytest.approx(werner_closed(f)[4], rel=1e-12)


def test_es_levels():
    assert [es_levels(h) for h in (1, 2, 3, 4, 5, 8, 9, 16)] == [1, 2, 3, 3, 4, 4, 5, 5]
    with pytest.raises(ValueError):
        es_levels(0)


def test_es_connection_cost_recursion():
    assert es_connection_cost(1, 0.9) == link_cost(0.9)
    # oracle: apply the closed forms level by level
    f0 = 0.9
    f1 = werner_closed(f0)[3]
    expected = 2500 * werner_closed(f0)[4] * 2500 * werner_closed(f1)[4]
    assert es_connection_cost(2, 0.9) == pytest.approx(expected, rel=1e-12)
    assert es_connection_cost(2, 0.9) / link_cost(0.9) == pytest.approx(2500 * werner_closed(f1)[4])
    f2 = werner_closed(f1)[3]
    assert es_connection_cost(4, 0.9) == pytest.approx(expected * 2500 * werner_closed(f2)[4], rel=1e-12)


def test_es_connection_cost_monotone():
    for f in (0.7, 0.9):
        costs = [es_connection_cost(h, f) for h in range(1, 17)]
        assert costs == sorted(costs)
    for h in (1, 3, 7):
        costs = [es_connection_cost(h, 0.8, bm.ConstantCost(b)) for b in (1, 10, 100, 1000)]
        assert costs == sorted(costs)


def test_es_connection_cost_low_fidelity():
    with pytest.raises(bm.BellMathError):
        es_connection_cost(2, 0.25)
    with pytest.raises(InsufficientFidelityError):
        es_connection_cost(2, 0.2)


def test_qec_connection_cost():
    assert qec_connection_cost(1, 0.9) == link_cost(0.9)
    assert qec_connection_cost(5, 0.9) == pytest.approx(5 * 2500 * werner_closed(0.9)[4], rel=1e-12)
    # 5 * 2500 * 6.011 with E rounded to three decimals
    assert qec_connection_cost(5, 0.9) == pytest.approx(75138, rel=1e-4)
    with pytest.raises(ValueError):
        qec_connection_cost(0, 0.9)


def test_window_validation_and_time():
    w = WindowParams(w=200, m=1.0, burst=10)
    assert verification_time(w) == 200
    assert verification_time(WindowParams(w=3, m=2.0)) == 6
    with pytest.raises(ValueError):
        WindowParams(m=0)
    with pytest.raises(ValueError):
        WindowParams(jitter=1.0)


def test_window_from_sample_requirement():
    w = required_window(2000, 10)
    assert w == 200
    assert verification_time(WindowParams(w=w, m=1, burst=10)) == 200
    assert required_window(2001, 10) == 201


def test_burst_intervals_jitter_bounds():
    w = WindowParams(m=2.0, jitter=0.25)
    x = burst_intervals(w, 10_000, np.random.default_rng(0))
    assert x.min() >= 1.5 and x.max() <= 2.5
    assert x.mean() == pytest.approx(2.0, abs=0.02)


def test_maintenance_rate():
    empty = NetworkGraph.build(["a"], [])
    win = WindowParams(w=200, m=1)
    assert maintenance_rate(empty, [], win) == 0
    one = NetworkGraph.build(["a", "b"], [("a", "b", 1, 1.0)])
    assert maintenance_rate(one, [], win) == 50


def test_maintenance_rate_additive():
    g1 = NetworkGraph.build("abc", [("a", "b", 1, 0.9), ("b", "c", 1, 0.8)])
    g2 = NetworkGraph.build("xyz", [("x", "y", 1, 0.95)])
    union = NetworkGraph.build("abcxyz", list(g1.links) + list(g2.links))
    win = WindowParams(w=10, m=2, w_con=5, m_con=3)
    c1 = Connection("c1", Path(tuple("abc")), 1.0, QEC(3))
    c2 = Connection("c2", Path(tuple("xy")), 2.0, ES())
    total = maintenance_rate(union, [c1, c2], win)
    assert total == pytest.approx(maintenance_rate(g1, [c1], win) + maintenance_rate(g2, [c2], win))
    plan = plan_tomography(union, [c1, c2], win)
    assert plan.connection_costs["c1"] == pytest.approx(qec_connection_cost(2, 0.8))
    assert plan.connection_costs["c2"] == pytest.approx(es_connection_cost(1, 0.95))


def test_maintenance_rate_skips_isolated_links():
    g = NetworkGraph.build("abc", [("a", "b", 1, 1.0), ("b", "c", 1, 1.0)], isolated=["c"])
    assert maintenance_rate(g, [], WindowParams(w=100, m=1)) == 100


def test_predictable_schedule_blocks():
    s = make_schedule(Predictable(block=10), levels=3, stream_length=30)
    assert s.to_index_lists() == {0: list(range(10)), 1: list(range(10, 20)), 2: list(range(20, 30))}
    assert s.level_of(25) == 2
    long = make_schedule(Predictable(block=10, stride=40), levels=3, stream_length=80)
    assert long.level_of(35) is None
    assert long.indices(0).tolist() == list(range(10)) + list(range(40, 50))
    with pytest.raises(InsufficientStreamError):
        make_schedule(Predictable(block=10), levels=3, stream_length=29)
    with pytest.raises(ValueError):
        make_schedule(Predictable(block=10, stride=20), levels=3, stream_length=100)


def test_secure_schedule_deterministic():
    a = make_schedule(SecureRandom(seed=7, probability=0.1), 3, 5000)
    b = make_schedule(SecureRandom(seed=7, probability=0.1), 3, 5000)
    c = make_schedule(SecureRandom(seed=8, probability=0.1), 3, 5000)
    assert a == b
    assert a != c


def test_secure_schedule_levels_disjoint():
    s = make_schedule(SecureRandom(seed=1, probability=0.2), 4, 10_000)
    seen = np.concatenate([s.indices(lv) for lv in range(4)])
    assert len(seen) == len(set(seen.tolist()))


def test_secure_schedule_binomial_counts():
    n, p = 10_000, 0.1
    s = make_schedule(SecureRandom(seed=3, probability=p), 3, n)
    sigma = math.sqrt(n * p * (1 - p))
    for count in s.counts():
        assert abs(count - n * p) <= 4 * sigma


def test_secure_schedule_gaps_look_random():
    n, p = 100_000, 0.1
    s = make_schedule(SecureRandom(seed=11, probability=p), 3, n)
    for lv in range(3):
        idx = s.indices(lv)
        # positions spread uniformly over the stream
        hist, _ = np.histogram(idx, bins=20, range=(0, n))
        assert stats.chisquare(hist).pvalue > 0.01
        # gaps follow the geometric law of independent selection
        gaps = np.diff(idx)
        edges = np.arange(1, 41)
        observed = np.array([np.sum(gaps == g) for g in edges[:-1]] + [np.sum(gaps >= edges[-1])])
        probs = np.array([stats.geom.pmf(g, p) for g in edges[:-1]] + [stats.geom.sf(edges[-1] - 1, p)])
        assert stats.chisquare(observed, probs * len(gaps)).pvalue > 0.01


def test_secure_schedule_validation():
    with pytest.raises(ValueError):
        make_schedule(SecureRandom(probability=0.5), 3, 100)
    with pytest.raises(InsufficientStreamError):
        make_schedule(SecureRandom(seed=0, probability=0.01), 3, 10, required=5)


def test_unassigned_marker():
    s = make_schedule(SecureRandom(seed=0, probability=0.1), 2, 1000)
    assert (s.levels == UNASSIGNED).sum() + s.counts().sum() == 1000
