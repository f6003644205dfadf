"""Work, loss, rerouting penalty and slack accounting.

Rates are Bell pairs per second.  The per-hop overhead H uses unit
constants: h**c for entanglement-swapping connections, d for QEC ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Union

from .netgraph import NetworkGraph, NodeId, Path, reroute


@dataclass(frozen=True)
class ES:
    c: float = 1.0

    def __post_init__(self) -> None:
        if self.c < 1:
            raise ValueError(f"ES exponent c must be >= 1, got {self.c}")


@dataclass(frozen=True)
class QEC:
    d: int = 3

    def __post_init__(self) -> None:
        if self.d < 1:
            raise ValueError(f"QEC code distance d must be >= 1, got {self.d}")


RepeaterModel = Union[ES, QEC]


@dataclass(frozen=True)
class Connection:
    id: str
    path: Path
    rate: float
    model: RepeaterModel = field(default_factory=ES)
    priority: int = 0

    def __post_init__(self) -> None:
        if not self.rate > 0:
            raise ValueError(f"connection {self.id}: rate D must be > 0")
        if self.path.hops < 1:
            raise ValueError(f"connection {self.id}: path needs at least one hop")

    @property
    def endpoints(self) -> tuple[NodeId, NodeId]:
        return (self.path.src, self.path.dst)

    @property
    def hops(self) -> int:
        return self.path.hops

    def overhead(self) -> float:
        if isinstance(self.model, ES):
            return float(self.hops) ** self.model.c
        return float(self.model.d)

    def work(self) -> float:
        """Work summed over every node on the path, (h+1) * H * D."""
        return (self.hops + 1) * self.overhead() * self.rate


def hop_overhead(connection: Connection, node: NodeId | None = None) -> float:
    if node is not None and node not in connection.path:
        raise ValueError(f"node {node!r} is not on connection {connection.id}")
    return connection.overhead()


def node_work(node: NodeId, connections: Iterable[Connection]) -> float:
    return sum(c.overhead() * c.rate for c in connections if node in c.path)


def network_work(connections: Iterable[Connection]) -> float:
    """Total work as the sum of per-node work over every node any path touches."""
    connections = list(connections)
    nodes = {n for c in connections for n in c.path}
    return sum(node_work(n, connections) for n in sorted(nodes))


def affected(suspects: Iterable[NodeId], connections: Iterable[Connection]) -> list[Connection]:
    suspects = frozenset(suspects)
    return [c for c in connections if suspects.intersection(c.path.nodes)]


def work_loss(suspects: Iterable[NodeId], connections: Iterable[Connection], duration: float = 1.0) -> float:
    """Work lost over ``duration`` when every connection through a suspect is dropped.

    A connection crossing several suspects is counted once.
    """
    if duration < 0:
        raise ValueError("duration must be >= 0")
    return sum(c.work() for c in affected(suspects, connections)) * duration


@dataclass(frozen=True)
class RerouteOutcome:
    connections: dict[str, Connection | None]
    deltas: dict[str, int | None]

    @property
    def shed(self) -> list[str]:
        return sorted(cid for cid, c in self.connections.items() if c is None)

    @property
    def active(self) -> list[Connection]:
        return [c for _, c in sorted(self.connections.items()) if c is not None]


def reroute_all(
    graph: NetworkGraph,
    connections: Iterable[Connection],
    suspects: Iterable[NodeId],
    new_rates: Mapping[str, float] | None = None,
) -> RerouteOutcome:
    """Move every connection off ``suspects``; unreachable ones become None.

    ``new_rates`` supplies D' per connection id; the old rate is kept otherwise.
    """
    suspects = frozenset(suspects)
    new_rates = new_rates or {}
    after: dict[str, Connection | None] = {}
    deltas: dict[str, int | None] = {}
    for conn in connections:
        if conn.path.src in suspects or conn.path.dst in suspects:
            new_path = None
        else:
            new_path = reroute(graph, conn.path, suspects)
        if new_path is None:
            after[conn.id], deltas[conn.id] = None, None
            continue
        deltas[conn.id] = new_path.hops - conn.path.hops
        rate = new_rates.get(conn.id, conn.rate)
        after[conn.id] = conn if new_path == conn.path and rate == conn.rate else replace(
            conn, path=new_path, rate=rate
        )
    return RerouteOutcome(after, deltas)


def rerouted_work(
    prev_work: float,
    suspects: Iterable[NodeId],
    before: Iterable[Connection],
    outcome: RerouteOutcome,
) -> float:
    """W' = W - L_sus + sum over rerouted connections of (h + 1 + delta) * H' * D'.

    ``h`` is the pre-reroute hop count and ``delta`` the increase, so
    h + 1 + delta counts the nodes on the new path.
    """
    hit = affected(suspects, before)
    added = 0.0
    for conn in hit:
        new = outcome.connections.get(conn.id)
        if new is None:
            continue
        delta = outcome.deltas[conn.id]
        added += (conn.hops + 1 + delta) * new.overhead() * new.rate
    return prev_work - work_loss(suspects, hit) + added


def slack(capacity: float, work: float, maintenance: float) -> float:
    """S = C - W - R; negative values mean work must be shed."""
    _nonneg(capacity=capacity, work=work, maintenance=maintenance)
    return capacity - work - maintenance


def slack_prime(capacity, capacity_sus, work_prime, maintenance, maintenance_sus):
    """S' = (C - C_sus) - W' - (R - R_sus), slack with the suspects isolated."""
    _nonneg(
        capacity=capacity,
        capacity_sus=capacity_sus,
        work_prime=work_prime,
        maintenance=maintenance,
        maintenance_sus=maintenance_sus,
    )
    return (capacity - capacity_sus) - work_prime - (maintenance - maintenance_sus)


def slack_second(capacity, capacity_k, work_second, maintenance, maintenance_k):
    """S'' = (C - C_k) - W'' - (R - R_k), slack once only the culprit stays isolated."""
    return slack_prime(capacity, capacity_k, work_second, maintenance, maintenance_k)


def rerouted_work_ceiling(capacity, capacity_sus, maintenance, maintenance_sus):
    """Largest W' that still leaves S' >= 0; S' > 0 requires W' strictly below it."""
    return (capacity - capacity_sus) - (maintenance - maintenance_sus)


def reroute_budget(capacity, capacity_sus, work, maintenance, maintenance_sus):
    """How much W' may exceed W before the slack is used up."""
    return rerouted_work_ceiling(capacity, capacity_sus, maintenance, maintenance_sus) - work


def suspect_capacity(capacity: float, graph: NetworkGraph, suspects: Iterable[NodeId]) -> float:
    """Capacity lost with the suspects, taken proportional to their share of nodes."""
    return capacity * len(frozenset(suspects)) / len(graph.nodes)


def _nonneg(**values) -> None:
    for name, v in values.items():
        if v < 0:
            raise ValueError(f"{name} must be >= 0, got {v}")
