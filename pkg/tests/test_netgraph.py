import itertools
import random

import networkx as nx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qrhijack.netgraph import (
    Link,
    NetGraphError,
    NetworkGraph,
    NodeKind,
    PartitionedError,
    Path,
    classify,
    framing_cut_search,
    isolate,
    partition_check,
    reroute_delta,
    shortest_path,
)

FIG8_LEFT_LINKS = [("a", "c"), ("b", "c"), ("c", "e"), ("e", "d"), ("d", "a'"), ("d", "b'")]
FIG8_PAIRS = [("a", "a'"), ("b", "b'")]


def fig8_left():
    return NetworkGraph.build("a a' b b' c d e".split(), FIG8_LEFT_LINKS)


def star(n):
    return NetworkGraph.build(["hub"] + [f"s{i}" for i in range(n)], [("hub", f"s{i}") for i in range(n)])


def line(*names):
    return NetworkGraph.build(names, zip(names, names[1:]))


def random_graph(rng, n, p, weighted=False):
    nodes = [f"n{i}" for i in range(n)]
    links = []
    for a, b in itertools.combinations(nodes, 2):
        if rng.random() < p:
            links.append((a, b, rng.choice([1, 2, 3]) if weighted else 1))
    return NetworkGraph.build(nodes, links)


def to_nx(graph):
    g = nx.Graph()
    g.add_nodes_from(graph.nodes - graph.isolated)
    for lk in graph.live_links():
        g.add_edge(lk.a, lk.b, weight=lk.cost)
    return g


def test_classify():
    assert classify(star(5), "hub") is NodeKind.ROUTER
    assert classify(star(5), "s0") is NodeKind.END_NODE
    assert classify(line("a", "b", "c"), "b") is NodeKind.REPEATER
    with pytest.raises(NetGraphError):
        classify(star(2), "nope")


def test_classify_uses_non_isolated_degree():
    g = isolate(star(3), ["s0"])
    assert classify(g, "hub") is NodeKind.REPEATER


def test_classify_stable_under_relabeling():
    rng = random.Random(3)
    for _ in range(20):
        g = random_graph(rng, 8, 0.4)
        perm = dict(zip(sorted(g.nodes), rng.sample(sorted(g.nodes), len(g.nodes))))
        h = NetworkGraph.build(
            perm.values(), [(perm[lk.a], perm[lk.b]) for lk in g.links]
        )
        for node in g.nodes:
            if g.degree(node):
                assert classify(g, node) is classify(h, perm[node])


def test_graph_validation():
    with pytest.raises(NetGraphError):
        Link("a", "a")
    with pytest.raises(NetGraphError):
        Link("a", "b", cost=0)
    with pytest.raises(NetGraphError):
        Link("a", "b", fidelity=0.2)
    with pytest.raises(NetGraphError):
        NetworkGraph.build(["a"], [("a", "b")])
    with pytest.raises(NetGraphError):
        NetworkGraph.build(["a", "b"], [("a", "b"), ("b", "a")])
    with pytest.raises(NetGraphError):
        NetworkGraph.build(["a", "b"], [("a", "b")], isolated=["z"])


def test_shortest_path_examples():
    p = shortest_path(line("a", "b", "c"), "a", "c")
    assert p.nodes == ("a", "b", "c") and p.hops == 2
    cycle = NetworkGraph.build("abcd", [("a", "b"), ("b", "c"), ("c", "d"), ("d", "a")])
    assert shortest_path(cycle, "a", "c").nodes == ("a", "b", "c")
    with pytest.raises(PartitionedError):
        shortest_path(isolate(cycle, ["c"]), "a", "c")


def test_shortest_path_respects_costs_and_isolation():
    g = NetworkGraph.build("abcd", [("a", "b", 5), ("b", "d"), ("a", "c"), ("c", "d")])
    assert shortest_path(g, "a", "d").nodes == ("a", "c", "d")
    assert shortest_path(isolate(g, ["c"]), "a", "d").nodes == ("a", "b", "d")


def test_shortest_path_minimal_against_enumeration():
    rng = random.Random(11)
    for trial in range(60):
        g = random_graph(rng, rng.randint(3, 10), 0.35, weighted=True)
        if trial % 3 == 0:
            g = isolate(g, rng.sample(sorted(g.nodes), 2))
        ng = to_nx(g)
        live = sorted(ng.nodes)
        for src, dst in itertools.combinations(live, 2):
            candidates = [
                (nx.path_weight(ng, p, "weight"), tuple(p)) for p in nx.all_simple_paths(ng, src, dst)
            ]
            if not candidates:
                with pytest.raises(PartitionedError):
                    shortest_path(g, src, dst)
                continue
            best = min(candidates)
            got = shortest_path(g, src, dst)
            assert (g.path_cost(got), got.nodes) == best


def test_isolate_idempotent_and_identity():
    g = fig8_left()
    assert isolate(g, []) == g
    once = isolate(g, ["c"])
    assert isolate(once, ["c"]) == once
    assert once.isolated == {"c"}


def test_isolate_end_node_is_flagged(caplog):
    isolate(star(3), ["s1"])
    assert "end node" in caplog.text


def test_isolating_cut_vertex_disconnects():
    g = line("a", "b", "c")
    assert nx.is_connected(to_nx(g))
    report = partition_check(g, ["b"], [("a", "c")])
    assert report.reachable[("a", "c")] is False
    assert not nx.has_path(to_nx(isolate(g, ["b"])), "a", "c")


def test_reroute_delta_examples():
    g = NetworkGraph.build(["a", "k", "b", "x", "y"], [("a", "k"), ("k", "b"), ("a", "x"), ("x", "y"), ("y", "b")])
    p = Path(("a", "k", "b"))
    assert reroute_delta(g, p, ["k"]) == 1
    assert reroute_delta(g, p, ["x"]) == 0
    assert reroute_delta(line("a", "k", "b"), p, ["k"]) is None


def test_reroute_monotone_in_suspects():
    rng = random.Random(5)
    for _ in range(40):
        g = random_graph(rng, 9, 0.35)
        nodes = sorted(g.nodes)
        src, dst = nodes[0], nodes[-1]
        try:
            p = shortest_path(g, src, dst)
        except PartitionedError:
            continue
        interior = list(p.interior)
        if not interior:
            continue
        small = set(rng.sample(interior, 1))
        big = small | set(rng.sample(nodes[1:-1], 2))
        d_small = reroute_delta(g, p, small)
        d_big = reroute_delta(g, p, big)
        if d_small is None:
            assert d_big is None
        elif d_big is not None:
            assert d_big >= d_small


def test_partition_check_fig8():
    g = fig8_left()
    report = partition_check(g, ["c", "d"], FIG8_PAIRS)
    assert report.reachable == {("a", "a'"): False, ("b", "b'"): False}
    assert report.partitioned


def test_partition_check_empty_suspects():
    assert partition_check(fig8_left(), [], FIG8_PAIRS).partitioned is False
    split = NetworkGraph.build("abcd", [("a", "b"), ("c", "d")])
    report = partition_check(split, [], [("a", "b"), ("a", "c")])
    assert report.partitioned
    assert report.reachable == {("a", "b"): True, ("a", "c"): False}


def test_partition_isolating_all_neighbors():
    g = star(4)
    report = partition_check(g, ["hub"], [("s0", "s1")])
    assert report.reachable[("s0", "s1")] is False


def _brute_force_cut(graph, hijacker, pairs, budget):
    """Every subset of interior path nodes, checked against networkx components."""
    paths = [shortest_path(graph, a, b) for a, b in pairs]
    frameable = sorted({n for p in paths if hijacker in p.interior for n in p.interior} - {hijacker})
    endpoints = sorted({n for pair in pairs for n in pair})
    for size in range(1, budget + 1):
        hits = []
        for subset in itertools.combinations(frameable, size):
            g = to_nx(isolate(graph, subset))
            if not any(
                nx.has_path(g, u, v) for u, v in itertools.combinations(endpoints, 2) if u in g and v in g
            ):
                hits.append(frozenset(subset))
        if hits:
            return hits
    return []


def test_framing_cut_fig8():
    g = fig8_left()
    assert _brute_force_cut(g, "e", FIG8_PAIRS, 12) == [frozenset({"c", "d"})]
    assert framing_cut_search(g, "e", FIG8_PAIRS) == {"c", "d"}


def test_framing_cut_any_pair_goal():
    assert framing_cut_search(fig8_left(), "e", FIG8_PAIRS, goal="any-pair") == {"c"}


def test_framing_cut_trivial_cases():
    clique = NetworkGraph.build("abcde", itertools.combinations("abcde", 2))
    assert framing_cut_search(clique, "c", [("a", "b"), ("d", "e")]) is None
    assert framing_cut_search(fig8_left(), "e", FIG8_PAIRS, budget=0) is None
    with pytest.raises(NetGraphError):
        framing_cut_search(fig8_left(), "e", FIG8_PAIRS, budget=13)


def test_framing_cut_matches_brute_force_on_random_graphs():
    rng = random.Random(21)
    checked = 0
    for _ in range(80):
        g = random_graph(rng, 9, 0.3)
        nodes = sorted(g.nodes)
        pairs = [tuple(rng.sample(nodes, 2)) for _ in range(2)]
        try:
            paths = [shortest_path(g, a, b) for a, b in pairs]
        except PartitionedError:
            continue
        inner = [n for p in paths for n in p.interior]
        if not inner:
            continue
        hijacker = inner[0]
        got = framing_cut_search(g, hijacker, pairs, budget=4)
        hits = _brute_force_cut(g, hijacker, pairs, 4)
        if hits:
            assert got == min(hits, key=sorted)
        else:
            assert got is None
        checked += 1
    assert checked > 20
