"""Tomography cost model, sliding-window timing, and check-pair schedules."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Union

import numpy as np

from . import bellmath as bm
from .netgraph import NetworkGraph
from .workload import ES, Connection

UNASSIGNED = -1


class InsufficientFidelityError(bm.BellMathError):
    pass


class InsufficientStreamError(ValueError):
    pass


@dataclass(frozen=True)
class WindowParams:
    """Sliding-window parameters.

    ``w`` counts bursts of ``burst`` check pairs spaced ``m`` seconds apart
    on average; ``w_con``/``m_con`` are the connection-level analogues.
    Intervals are drawn uniformly from [m(1-jitter), m(1+jitter)].
    """

    w: int = 200
    m: float = 1.0
    burst: int = 10
    w_con: int = 200
    m_con: float = 1.0
    jitter: float = 0.25

    def __post_init__(self) -> None:
        for name in ("w", "m", "burst", "w_con", "m_con"):
            if not getattr(self, name) > 0:
                raise ValueError(f"window parameter {name} must be > 0")
        if not 0.0 <= self.jitter < 1.0:
            raise ValueError("jitter must be in [0, 1)")

    @property
    def samples(self) -> int:
        return self.w * self.burst


def verification_time(window: WindowParams) -> float:
    """T = w * m, the longest a check result can lag behind the pairs it covers."""
    return window.w * window.m


def required_window(samples: float, burst: int) -> int:
    """Bursts needed before a window holds ``samples`` check pairs."""
    if burst <= 0 or samples <= 0:
        raise ValueError("samples and burst must be > 0")
    return math.ceil(samples / burst)


def burst_intervals(window: WindowParams, count: int, rng: np.random.Generator) -> np.ndarray:
    lo, hi = window.m * (1 - window.jitter), window.m * (1 + window.jitter)
    return rng.uniform(lo, hi, size=count)


def link_cost(f: float, model: bm.CostModel = bm.DEFAULT_COST_MODEL) -> float:
    """M_link = B(F) * E(F)."""
    return bm.tomography_sample_count(f, model) * bm.expected_pairs(f)


def es_levels(hops: int) -> int:
    """Link level plus ceil(log2 h) swap levels."""
    if hops < 1:
        raise ValueError("a connection spans at least one hop")
    return (hops - 1).bit_length() + 1


def es_connection_cost(hops: int, f: float, model: bm.CostModel = bm.DEFAULT_COST_MODEL) -> float:
    """Product of B(F_l) * E(F_l) over the levels of a swap tree.

    F_0 is the link fidelity and each level applies two purification
    rounds to the previous one; swapping noise is not modeled.
    """
    cost = 1.0
    fl = f
    for level in range(es_levels(hops)):
        if fl <= bm.WERNER_MIN:
            raise InsufficientFidelityError(f"insufficient fidelity {fl!r} at level {level}")
        cost *= link_cost(fl, model)
        fl = bm.two_round_pipeline(fl).f_twice
    return cost


def qec_connection_cost(hops: int, f: float, model: bm.CostModel = bm.DEFAULT_COST_MODEL) -> float:
    """M_con(QEC) = h * B(F) * E(F), E(F) kept exactly as in the cost formula."""
    if hops < 1:
        raise ValueError("a connection spans at least one hop")
    return hops * link_cost(f, model)


def path_fidelity(graph: NetworkGraph, connection: Connection) -> float:
    """Weakest link fidelity along the connection."""
    return min(lk.fidelity for lk in graph.path_links(connection.path))


def connection_cost(graph: NetworkGraph, connection: Connection, model: bm.CostModel = bm.DEFAULT_COST_MODEL) -> float:
    f = path_fidelity(graph, connection)
    if isinstance(connection.model, ES):
        return es_connection_cost(connection.hops, f, model)
    return qec_connection_cost(connection.hops, f, model)


@dataclass(frozen=True)
class TomographyPlan:
    link_costs: dict[tuple[str, str], float]
    connection_costs: dict[str, float]
    window: WindowParams

    @property
    def link_rate(self) -> float:
        return sum(self.link_costs.values()) / verification_time(self.window)

    @property
    def connection_rate(self) -> float:
        return sum(self.connection_costs.values()) / (self.window.w_con * self.window.m_con)

    @property
    def rate(self) -> float:
        """Maintenance rate R in pairs/s."""
        return self.link_rate + self.connection_rate


def plan_tomography(
    graph: NetworkGraph,
    connections: Iterable[Connection],
    window: WindowParams,
    model: bm.CostModel = bm.DEFAULT_COST_MODEL,
) -> TomographyPlan:
    links = {lk.ends: link_cost(lk.fidelity, model) for lk in graph.live_links()}
    cons = {c.id: connection_cost(graph, c, model) for c in connections}
    return TomographyPlan(links, cons, window)


def maintenance_rate(
    graph: NetworkGraph,
    connections: Iterable[Connection],
    window: WindowParams,
    model: bm.CostModel = bm.DEFAULT_COST_MODEL,
) -> float:
    return plan_tomography(graph, connections, window, model).rate


@dataclass(frozen=True)
class Predictable:
    """Contiguous blocks per level, in level order, repeating every ``stride`` pairs."""

    block: int = 10
    stride: int | None = None


@dataclass(frozen=True)
class SecureRandom:
    """Each pair goes to each level with ``probability``, from a seeded PCG64 stream."""

    seed: int = 0
    probability: float = 0.1


ScheduleMode = Union[Predictable, SecureRandom]


@dataclass(frozen=True, eq=False)
class CheckSchedule:
    """Level assignment of each pair index in one node-pair stream.

    ``levels[i]`` is the check level of pair ``i`` (0 is the link level) or
    ``UNASSIGNED`` for pairs handed to the application.
    """

    mode: ScheduleMode
    n_levels: int
    levels: np.ndarray

    def __len__(self) -> int:
        return len(self.levels)

    @property
    def predictable(self) -> bool:
        return isinstance(self.mode, Predictable)

    def indices(self, level: int) -> np.ndarray:
        return np.flatnonzero(self.levels == level)

    def level_of(self, index: int) -> int | None:
        lv = int(self.levels[index])
        return None if lv == UNASSIGNED else lv

    def counts(self) -> np.ndarray:
        return np.bincount(self.levels[self.levels >= 0], minlength=self.n_levels)

    def to_index_lists(self) -> dict[int, list[int]]:
        return {lv: self.indices(lv).tolist() for lv in range(self.n_levels)}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CheckSchedule):
            return NotImplemented
        return (
            self.mode == other.mode
            and self.n_levels == other.n_levels
            and np.array_equal(self.levels, other.levels)
        )


def make_schedule(mode: ScheduleMode, levels: int, stream_length: int, required: int = 1) -> CheckSchedule:
    """Assign check levels to the first ``stream_length`` pairs of a stream.

    Every level must end up with at least ``required`` pairs.
    """
    if levels < 1:
        raise ValueError("need at least one check level")
    if isinstance(mode, Predictable):
        span = levels * mode.block
        stride = mode.stride or span
        if stride < span:
            raise ValueError(f"stride {stride} shorter than {levels} blocks of {mode.block}")
        if stream_length < span:
            raise InsufficientStreamError(f"stream of {stream_length} pairs cannot hold {span} check pairs")
        pos = np.arange(stream_length) % stride
        assigned = np.where(pos < span, pos // mode.block, UNASSIGNED)
    elif isinstance(mode, SecureRandom):
        if not 0 < mode.probability <= 1 / levels:
            raise ValueError(f"probability must be in (0, 1/{levels}]")
        rng = np.random.Generator(np.random.PCG64(mode.seed))
        slot = np.floor(rng.random(stream_length) / mode.probability).astype(np.int64)
        assigned = np.where(slot < levels, slot, UNASSIGNED)
    else:
        raise TypeError(f"unknown schedule mode {mode!r}")
    schedule = CheckSchedule(mode, levels, assigned.astype(np.int16))
    short = [lv for lv, n in enumerate(schedule.counts()) if n < required]
    if short:
        raise InsufficientStreamError(f"levels {short} got fewer than {required} check pairs")
    return schedule
