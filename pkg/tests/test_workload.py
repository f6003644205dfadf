import itertools
import random
from fractions import Fraction

import pytest

from qrhijack.netgraph import NetworkGraph, Path, PartitionedError, shortest_path
from qrhijack.workload import (
    ES,
    QEC,
    Connection,
    hop_overhead,
    network_work,
    node_work,
    reroute_all,
    reroute_budget,
    rerouted_work,
    rerouted_work_ceiling,
    slack,
    slack_prime,
    slack_second,
    suspect_capacity,
    work_loss,
)


def conn(cid, nodes, rate=1.0, model=None, priority=0):
    return Connection(cid, Path(tuple(nodes)), rate, model or ES(), priority)


def test_hop_overhead():
    c = conn("x", "abcde")
    assert hop_overhead(c, "c") == 4
    assert hop_overhead(conn("x", "abcde", model=ES(2))) == 16
    assert hop_overhead(conn("x", "abcde", model=QEC(7))) == 7
    assert hop_overhead(conn("x", "ab", model=QEC(7))) == 7
    with pytest.raises(ValueError):
        hop_overhead(c, "z")


def test_connection_validation():
    with pytest.raises(ValueError):
        conn("x", "ab", rate=0)
    with pytest.raises(ValueError):
        conn("x", "a")
    with pytest.raises(ValueError):
        ES(0.5)
    with pytest.raises(ValueError):
        QEC(0)


def test_node_work():
    es = conn("es", "abcde", rate=2)
    qec = conn("qec", "xcy", rate=5, model=QEC(3))
    assert node_work("c", []) == 0
    assert node_work("c", [es]) == 8
    assert node_work("c", [es, qec]) == 23
    assert node_work("a", [es, qec]) == 8


def test_network_work():
    assert network_work([]) == 0
    assert network_work([conn("x", "abc")]) == 6
    cs = [conn("x", "abcd", rate=1.5), conn("y", "bcd", rate=2, model=QEC(5))]
    scaled = [Connection(c.id, c.path, 3 * c.rate, c.model) for c in cs]
    assert network_work(scaled) == pytest.approx(3 * network_work(cs))


def _random_connections(rng, nodes, k):
    out = []
    for i in range(k):
        length = rng.randint(2, min(6, len(nodes)))
        path = rng.sample(nodes, length)
        model = ES(rng.choice([1, 2])) if rng.random() < 0.5 else QEC(rng.randint(1, 7))
        out.append(conn(f"c{i}", path, rate=rng.uniform(0.1, 5), model=model))
    return out


def test_node_sum_equals_connection_sum():
    rng = random.Random(1)
    nodes = [f"n{i}" for i in range(10)]
    for _ in range(200):
        cs = _random_connections(rng, nodes, rng.randint(1, 5))
        by_conn = sum((c.hops + 1) * c.overhead() * c.rate for c in cs)
        assert network_work(cs) == pytest.approx(by_conn, rel=1e-12)


def test_work_loss_examples():
    c = conn("x", "akb")
    assert work_loss({"k"}, [c], 0) == 0
    assert work_loss({"k"}, [c], 10) == 60
    assert work_loss({"z"}, [c], 10) == 0
    assert work_loss({"a", "k"}, [c], 10) == 60
    with pytest.raises(ValueError):
        work_loss({"k"}, [c], -1)


def test_work_loss_exceeds_node_work():
    rng = random.Random(2)
    nodes = [f"n{i}" for i in range(10)]
    for _ in range(200):
        cs = _random_connections(rng, nodes, rng.randint(1, 5))
        sus = set(rng.sample(nodes, rng.randint(1, 3)))
        t = rng.uniform(0, 10)
        assert work_loss(sus, cs, t) >= sum(node_work(k, cs) for k in sus) * t - 1e-9


def detour_graph():
    return NetworkGraph.build(
        ["a", "k", "b", "x", "y"], [("a", "k"), ("k", "b"), ("a", "x"), ("x", "y"), ("y", "b")]
    )


def test_rerouted_work_examples():
    g = detour_graph()
    c = conn("c", "akb")
    w = network_work([c])
    out = reroute_all(g, [c], {"x"})
    assert rerouted_work(w, {"x"}, [c], out) == w
    out = reroute_all(g, [c], {"k"})
    assert out.deltas == {"c": 1}
    w_prime = rerouted_work(w, {"k"}, [c], out)
    assert w_prime == w + 6
    assert w_prime == network_work(out.active)
    line = NetworkGraph.build("akb", [("a", "k"), ("k", "b")])
    out = reroute_all(line, [c], {"k"})
    assert out.shed == ["c"]
    assert rerouted_work(w, {"k"}, [c], out) == w - work_loss({"k"}, [c])


def test_reroute_respects_new_rates():
    g = detour_graph()
    c = conn("c", "akb", rate=2)
    out = reroute_all(g, [c], {"k"}, new_rates={"c": 1})
    assert out.connections["c"].rate == 1
    assert rerouted_work(12, {"k"}, [c], out) == 12 - 12 + 4 * 3 * 1


def test_incremental_matches_recompute():
    rng = random.Random(9)
    checked = 0
    for _ in range(150):
        nodes = [f"n{i}" for i in range(rng.randint(4, 10))]
        links = [(a, b) for a, b in itertools.combinations(nodes, 2) if rng.random() < 0.4]
        g = NetworkGraph.build(nodes, links)
        cs = []
        for i in range(rng.randint(1, 5)):
            a, b = rng.sample(nodes, 2)
            try:
                p = shortest_path(g, a, b)
            except PartitionedError:
                continue
            model = ES(rng.choice([1, 2])) if rng.random() < 0.5 else QEC(rng.randint(1, 5))
            cs.append(Connection(f"c{i}", p, rng.uniform(0.5, 3), model))
        if not cs:
            continue
        sus = set(rng.sample(nodes, rng.randint(1, 2)))
        out = reroute_all(g, cs, sus)
        w = network_work(cs)
        assert rerouted_work(w, sus, cs, out) == pytest.approx(network_work(out.active), abs=1e-9)
        checked += 1
    assert checked > 100


def test_slack_worked_example():
    C = 100
    W = Fraction(7, 10) * C
    R = Fraction(1, 10) * C
    assert slack(C, W, R) == 20
    C_sus, R_sus = Fraction(1, 10) * C, Fraction(1, 10) * R
    assert slack_prime(C, C_sus, 81, R, R_sus) == 0
    assert slack_prime(C, C_sus, Fraction(8099, 100), R, R_sus) > 0
    assert rerouted_work_ceiling(C, C_sus, R, R_sus) == 81
    assert reroute_budget(C, C_sus, W, R, R_sus) == 11
    assert slack_second(C, C_sus, 81, R, R_sus) == 0


def test_slack_may_go_negative_but_inputs_may_not():
    assert slack(10, 8, 5) == -3
    with pytest.raises(ValueError):
        slack(-1, 0, 0)
    with pytest.raises(ValueError):
        slack_prime(10, -1, 0, 0, 0)


def test_suspect_capacity():
    g = NetworkGraph.build([f"n{i}" for i in range(10)], [])
    assert suspect_capacity(100, g, {"n1"}) == 10
