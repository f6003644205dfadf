"""Network topology, node taxonomy, routing around isolated nodes, partitions."""

from __future__ import annotations

import heapq
import itertools
import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Iterable, Sequence

log = logging.getLogger(__name__)

NodeId = str
DEFAULT_LINK_FIDELITY = 0.9
MAX_FRAMING_BUDGET = 12


class NetGraphError(ValueError):
    pass


class PartitionedError(NetGraphError):
    """No route exists between the requested nodes."""


class NodeKind(str, Enum):
    ROUTER = "router"
    REPEATER = "repeater"
    END_NODE = "end-node"


@dataclass(frozen=True, order=True)
class Link:
    a: NodeId
    b: NodeId
    cost: float = 1.0
    fidelity: float = DEFAULT_LINK_FIDELITY

    def __post_init__(self) -> None:
        if self.a == self.b:
            raise NetGraphError(f"self-loop on {self.a!r}")
        if not self.cost > 0:
            raise NetGraphError(f"link {self.a}-{self.b}: cost must be > 0")
        if not 0.25 < self.fidelity <= 1.0:
            raise NetGraphError(f"link {self.a}-{self.b}: fidelity must be in (0.25, 1]")
        if self.b < self.a:
            a, b = self.b, self.a
            object.__setattr__(self, "a", a)
            object.__setattr__(self, "b", b)

    @property
    def ends(self) -> tuple[NodeId, NodeId]:
        return (self.a, self.b)


@dataclass(frozen=True)
class Path:
    nodes: tuple[NodeId, ...]

    @property
    def hops(self) -> int:
        return len(self.nodes) - 1

    @property
    def src(self) -> NodeId:
        return self.nodes[0]

    @property
    def dst(self) -> NodeId:
        return self.nodes[-1]

    @property
    def interior(self) -> tuple[NodeId, ...]:
        return self.nodes[1:-1]

    def __contains__(self, node: object) -> bool:
        return node in self.nodes

    def __iter__(self):
        return iter(self.nodes)

    def __len__(self) -> int:
        return len(self.nodes)


@dataclass(frozen=True)
class NetworkGraph:
    """Undirected simple graph; immutable, isolation yields a new value."""

    nodes: frozenset[NodeId]
    links: tuple[Link, ...]
    isolated: frozenset[NodeId] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        object.__setattr__(self, "nodes", frozenset(self.nodes))
        object.__setattr__(self, "isolated", frozenset(self.isolated))
        links = tuple(sorted(self.links))
        seen = set()
        for link in links:
            for end in link.ends:
                if end not in self.nodes:
                    raise NetGraphError(f"link endpoint {end!r} is not a node")
            if link.ends in seen:
                raise NetGraphError(f"duplicate link {link.a}-{link.b}")
            seen.add(link.ends)
        object.__setattr__(self, "links", links)
        unknown = self.isolated - self.nodes
        if unknown:
            raise NetGraphError(f"isolated nodes not in graph: {sorted(unknown)}")

    @classmethod
    def build(
        cls,
        nodes: Iterable[NodeId],
        links: Iterable[Link | Sequence],
        isolated: Iterable[NodeId] = (),
    ) -> NetworkGraph:
        """Accept links as ``Link`` objects or ``(a, b[, cost[, fidelity]])`` tuples."""
        parsed = [lk if isinstance(lk, Link) else Link(*lk) for lk in links]
        return cls(frozenset(nodes), tuple(parsed), frozenset(isolated))

    @cached_property
    def _adjacency(self) -> dict[NodeId, dict[NodeId, Link]]:
        adj: dict[NodeId, dict[NodeId, Link]] = {n: {} for n in self.nodes}
        for link in self.links:
            adj[link.a][link.b] = link
            adj[link.b][link.a] = link
        return adj

    def _require(self, node: NodeId) -> None:
        if node not in self.nodes:
            raise NetGraphError(f"unknown node {node!r}")

    def link(self, a: NodeId, b: NodeId) -> Link:
        try:
            return self._adjacency[a][b]
        except KeyError:
            raise NetGraphError(f"no link {a}-{b}") from None

    def neighbors(self, node: NodeId) -> list[NodeId]:
        """Non-isolated neighbors, sorted."""
        self._require(node)
        return sorted(n for n in self._adjacency[node] if n not in self.isolated)

    def degree(self, node: NodeId) -> int:
        return len(self.neighbors(node))

    def live_links(self) -> list[Link]:
        return [lk for lk in self.links if lk.a not in self.isolated and lk.b not in self.isolated]

    def path_links(self, path: Path) -> list[Link]:
        return [self.link(u, v) for u, v in zip(path.nodes, path.nodes[1:])]

    def path_cost(self, path: Path) -> float:
        return sum(lk.cost for lk in self.path_links(path))

    def validate_path(self, path: Path) -> None:
        if len(set(path.nodes)) != len(path.nodes):
            raise NetGraphError(f"path repeats a node: {path.nodes}")
        blocked = self.isolated.intersection(path.nodes)
        if blocked:
            raise NetGraphError(f"path crosses isolated nodes {sorted(blocked)}")
        self.path_links(path)

    def edge_list(self) -> list[dict]:
        return [{"a": lk.a, "b": lk.b, "cost": lk.cost, "fidelity": lk.fidelity} for lk in self.links]


def classify(graph: NetworkGraph, node: NodeId) -> NodeKind:
    degree = graph.degree(node)
    if degree >= 3:
        return NodeKind.ROUTER
    if degree == 2:
        return NodeKind.REPEATER
    if degree == 1:
        return NodeKind.END_NODE
    raise NetGraphError(f"node {node!r} has no live links")


def shortest_path(graph: NetworkGraph, src: NodeId, dst: NodeId) -> Path:
    """Minimum-cost path avoiding isolated nodes.

    Equal-cost candidates are ordered by their node-id sequence, so the
    lexicographically smallest one wins.
    """
    for end in (src, dst):
        graph._require(end)
        if end in graph.isolated:
            raise PartitionedError(f"partitioned: endpoint {end!r} is isolated")
    heap: list[tuple[float, tuple[NodeId, ...]]] = [(0.0, (src,))]
    settled: set[NodeId] = set()
    while heap:
        cost, nodes = heapq.heappop(heap)
        here = nodes[-1]
        if here in settled:
            continue
        settled.add(here)
        if here == dst:
            return Path(nodes)
        for nxt in graph.neighbors(here):
            if nxt not in settled:
                heapq.heappush(heap, (cost + graph.link(here, nxt).cost, nodes + (nxt,)))
    raise PartitionedError(f"partitioned: no route {src!r} -> {dst!r}")


def isolate(graph: NetworkGraph, suspects: Iterable[NodeId]) -> NetworkGraph:
    suspects = frozenset(suspects)
    for node in sorted(suspects):
        graph._require(node)
        if graph._adjacency[node] and len(graph._adjacency[node]) == 1:
            log.warning("isolating end node %r: end-node hijacking is outside the threat model", node)
    if suspects <= graph.isolated:
        return graph
    return NetworkGraph(graph.nodes, graph.links, graph.isolated | suspects)


def reroute(graph: NetworkGraph, path: Path, suspects: Iterable[NodeId]) -> Path | None:
    """New path for a connection after isolating ``suspects``; None when it must be shed.

    Paths that avoid every suspect are returned unchanged.
    """
    suspects = frozenset(suspects)
    if not suspects.intersection(path.nodes):
        return path
    try:
        return shortest_path(isolate(graph, suspects), path.src, path.dst)
    except PartitionedError:
        return None


def reroute_delta(graph: NetworkGraph, path: Path, suspects: Iterable[NodeId]) -> int | None:
    """Hop increase forced by isolating ``suspects``; None means shed."""
    new = reroute(graph, path, suspects)
    return None if new is None else new.hops - path.hops


def _components(graph: NetworkGraph) -> dict[NodeId, int]:
    label: dict[NodeId, int] = {}
    comp = -1
    for start in sorted(graph.nodes - graph.isolated):
        if start in label:
            continue
        comp += 1
        stack = [start]
        label[start] = comp
        while stack:
            for nxt in graph.neighbors(stack.pop()):
                if nxt not in label:
                    label[nxt] = comp
                    stack.append(nxt)
    return label


@dataclass(frozen=True)
class PartitionReport:
    reachable: dict[tuple[NodeId, NodeId], bool]
    partitioned: bool

    @property
    def unreachable_pairs(self) -> list[tuple[NodeId, NodeId]]:
        return [pair for pair, ok in self.reachable.items() if not ok]


def partition_check(
    graph: NetworkGraph,
    suspects: Iterable[NodeId],
    pairs: Iterable[tuple[NodeId, NodeId]],
) -> PartitionReport:
    """Reachability of each endpoint pair once ``suspects`` are isolated.

    ``partitioned`` is set when the surviving nodes no longer form one component.
    """
    after = isolate(graph, suspects)
    label = _components(after)
    reachable = {}
    for a, b in pairs:
        graph._require(a)
        graph._require(b)
        reachable[(a, b)] = a in label and b in label and label[a] == label[b]
    return PartitionReport(reachable, len(set(label.values())) > 1)


def frameable_nodes(
    graph: NetworkGraph,
    hijacker: NodeId,
    paths: Iterable[Path],
) -> list[NodeId]:
    """Interior nodes sharing a connection path (hence a swap tree) with the hijacker."""
    out: set[NodeId] = set()
    for path in paths:
        if hijacker in path.interior:
            out.update(path.interior)
    out.discard(hijacker)
    return sorted(out)


def _all_endpoints_severed(graph: NetworkGraph, suspects, pairs) -> bool:
    endpoints = sorted({n for pair in pairs for n in pair})
    label = _components(isolate(graph, suspects))
    live = [label[n] for n in endpoints if n in label]
    return len(live) == len(set(live))


def _any_pair_cut(graph: NetworkGraph, suspects, pairs) -> bool:
    return bool(partition_check(graph, suspects, pairs).unreachable_pairs)


CUT_GOALS = {"sever-endpoints": _all_endpoints_severed, "any-pair": _any_pair_cut}


def framing_cut_search(
    graph: NetworkGraph,
    hijacker: NodeId,
    pairs: Sequence[tuple[NodeId, NodeId]],
    budget: int = MAX_FRAMING_BUDGET,
    paths: Iterable[Path] | None = None,
    goal: str = "sever-endpoints",
) -> frozenset[NodeId] | None:
    """Smallest set of frameable nodes whose isolation brings the network down.

    Candidates come from the connection paths that run through the hijacker
    (shortest paths of ``pairs`` unless ``paths`` is given).  With the
    default goal, "down" means no two configured endpoints can still reach
    each other; ``goal="any-pair"`` stops at the first disconnected pair.
    Subsets are tried by size, then in sorted order.
    """
    if not 0 <= budget <= MAX_FRAMING_BUDGET:
        raise NetGraphError(f"budget must be in [0, {MAX_FRAMING_BUDGET}], got {budget}")
    graph._require(hijacker)
    check = CUT_GOALS[goal]
    if paths is None:
        paths = []
        for a, b in pairs:
            try:
                paths.append(shortest_path(graph, a, b))
            except PartitionedError:
                continue
    candidates = frameable_nodes(graph, hijacker, paths)
    for size in range(1, min(budget, len(candidates)) + 1):
        for subset in itertools.combinations(candidates, size):
            if check(graph, subset, pairs):
                return frozenset(subset)
    return None
