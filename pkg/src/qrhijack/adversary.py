"""Hijacker strategies and their effect on pair streams and check outcomes.

A hijacker controls one Router or Repeater.  It can spoil the pairs that
pass through its own swap (or, for QEC, its own relay) and nothing else;
a spoiled pair becomes the traced-out GHZ marginal.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Union

import numpy as np

from . import bellmath as bm
from .detection import (
    MIN_TRIALS,
    CheckResult,
    SuspectReport,
    SwapTree,
    Verdict,
    build_swap_tree,
    identify_es,
    identify_qec,
    statistical_verdict,
)
from .netgraph import NetworkGraph, NodeId, NodeKind, Path, classify
from .tomoplan import UNASSIGNED, CheckSchedule


class FramingInfeasibleWarning(UserWarning):
    """The hijacker cannot tell which pairs feed which check."""


class Knowledge(str, Enum):
    KNOWS_SCHEDULE = "knows-schedule"
    BLIND = "blind"


@dataclass(frozen=True)
class CorruptAll:
    pass


@dataclass(frozen=True)
class TargetConnection:
    connection_id: str


@dataclass(frozen=True)
class Frame:
    """Blame ``victim``.

    ``rate`` is the share of touched pairs spoiled when the hijacker cannot
    see the schedule; it has to spoil every one to be sure the victim's
    check fails.
    """

    victim: NodeId
    rate: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 < self.rate <= 1.0:
            raise ValueError("frame rate must be in (0, 1]")


@dataclass(frozen=True)
class LayLow:
    """Run ``inner`` only inside the half-open ``[start, end)`` intervals."""

    intervals: tuple[tuple[float, float], ...]
    inner: Strategy = field(default_factory=CorruptAll)

    def active(self, times: np.ndarray) -> np.ndarray:
        on = np.zeros(len(times), dtype=bool)
        for start, end in self.intervals:
            on |= (times >= start) & (times < end)
        return on


Strategy = Union[CorruptAll, TargetConnection, Frame, LayLow]


@dataclass(frozen=True)
class HijackerSpec:
    node: NodeId
    strategy: Strategy = field(default_factory=CorruptAll)
    knowledge: Knowledge = Knowledge.KNOWS_SCHEDULE

    def base_strategy(self) -> Strategy:
        s = self.strategy
        while isinstance(s, LayLow):
            s = s.inner
        return s


def validate_hijacker(spec: HijackerSpec, graph: NetworkGraph, paths: Iterable[Path] = ()) -> None:
    """End nodes cannot be hijacked; a framed victim must share a path with the hijacker."""
    if classify(graph, spec.node) is NodeKind.END_NODE:
        raise ValueError(f"hijacker {spec.node!r} is an end node; only routers and repeaters are modeled")
    base = spec.base_strategy()
    if isinstance(base, Frame):
        if base.victim == spec.node:
            raise ValueError("a hijacker cannot frame itself")
        if not any(spec.node in p and base.victim in p for p in paths):
            raise ValueError(f"victim {base.victim!r} shares no connection path with {spec.node!r}")


def effective_state(base: bm.BellCoeffs, corrupted: bool) -> bm.BellCoeffs:
    return bm.hijacked_state() if corrupted else base


def check_state(link_fidelity: float, level: int) -> bm.BellCoeffs:
    """Honest state consumed by a level-``level`` check: level + 1 double purifications."""
    state = bm.werner(link_fidelity)
    for _ in range(level + 1):
        state = bm.purify_twice(state).output
    return state


def touched_levels(tree: SwapTree | None, node: NodeId) -> set[int] | None:
    """Check levels whose pairs pass through ``node``'s swap; None means every pair (QEC relay)."""
    if tree is None:
        return None
    return {seg.level for seg in tree.chain(node)}


def corruption_mask(
    spec: HijackerSpec,
    schedule: CheckSchedule,
    tree: SwapTree | None = None,
    connection_id: str | None = None,
    times: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Boolean mask over the stream: True where the hijacker spoils the pair.

    ``tree`` is the swap tree of an ES connection (None for QEC, where the
    hijacker relays every pair).  ``times`` gives each pair's creation time
    and is only needed for ``LayLow``.
    """
    if tree is not None and spec.node not in tree.path.interior:
        raise ValueError(f"hijacker {spec.node!r} is not inside path {tree.path.nodes}")
    levels = schedule.levels
    reach = touched_levels(tree, spec.node)
    if reach is None:
        touched = np.ones(len(levels), dtype=bool)
    else:
        touched = (levels == UNASSIGNED) | np.isin(levels, sorted(reach))
    return _apply(spec, spec.strategy, schedule, tree, connection_id, times, rng, touched)


def _apply(spec, strategy, schedule, tree, connection_id, times, rng, touched):
    if isinstance(strategy, CorruptAll):
        return touched
    if isinstance(strategy, TargetConnection):
        return touched if strategy.connection_id == connection_id else np.zeros_like(touched)
    if isinstance(strategy, LayLow):
        if times is None:
            raise ValueError("LayLow needs per-pair times")
        inner = _apply(spec, strategy.inner, schedule, tree, connection_id, times, rng, touched)
        return inner & strategy.active(np.asarray(times))
    if isinstance(strategy, Frame):
        return _frame(spec, strategy, schedule, tree, rng, touched)
    raise TypeError(f"unknown strategy {strategy!r}")


def _frame(spec, frame, schedule, tree, rng, touched):
    if tree is None:
        # QEC: end-to-end checks only, see _qec_targets
        return touched
    victim_levels = [
        seg.level for seg in tree.chain(spec.node)[1:] if tree.node(seg.swapper) == frame.victim
    ]
    if spec.knowledge is Knowledge.KNOWS_SCHEDULE and schedule.predictable:
        if not victim_levels:
            return np.zeros_like(touched)
        return schedule.levels == victim_levels[0]
    warnings.warn(
        f"framing infeasible: {spec.node!r} cannot tell which pairs feed the check that blames {frame.victim!r}",
        FramingInfeasibleWarning,
        stacklevel=4,
    )
    if rng is None:
        raise ValueError("blind framing needs a random generator")
    return touched & (rng.random(len(touched)) < frame.rate)


def corrupt_stream(
    spec: HijackerSpec,
    schedule: CheckSchedule,
    tree: SwapTree | None = None,
    connection_id: str | None = None,
    times: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
) -> frozenset[int]:
    """Indices of the pairs the hijacker spoils."""
    mask = corruption_mask(spec, schedule, tree, connection_id, times, rng)
    return frozenset(np.flatnonzero(mask).tolist())


def level_state(base: bm.BellCoeffs, samples: int, spoiled: int) -> bm.BellCoeffs:
    """State seen by a check whose ``samples`` pairs include ``spoiled`` hijacked ones."""
    if spoiled <= 0:
        return base
    frac = spoiled / samples
    return bm.mixture([(1.0 - frac, base), (frac, bm.hijacked_state())])


def simulate_es_checks(
    tree: SwapTree,
    mask: np.ndarray,
    schedule: CheckSchedule,
    hijacker: NodeId | None,
    seed: int | np.random.SeedSequence,
    link_fidelity: float = 0.9,
) -> list[CheckResult]:
    """One statistical verdict per swap-tree segment.

    A segment at level l consumes the stream's level-l check pairs.  Spoiled
    pairs only reach the segments on the hijacker's chain.
    """
    counts = schedule.counts()
    spoiled_per_level = np.bincount(schedule.levels[mask & (schedule.levels >= 0)], minlength=schedule.n_levels)
    chain = {seg.span for seg in tree.chain(hijacker)} if hijacker in tree.path.interior else set()
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    out = []
    for seg, child in zip(tree.segments, ss.spawn(len(tree.segments))):
        n = int(counts[seg.level])
        if n < MIN_TRIALS:
            raise ValueError(f"level {seg.level} has {n} check pairs, need {MIN_TRIALS}")
        spoiled = int(spoiled_per_level[seg.level]) if seg.span in chain else 0
        state = level_state(check_state(link_fidelity, seg.level), n, spoiled)
        verdict = statistical_verdict(state, n, np.random.default_rng(child))
        out.append(CheckResult(seg.i, seg.j, seg.level, verdict, n))
    return out


def es_check_log(
    path: Path,
    spec: HijackerSpec,
    schedule: CheckSchedule,
    seed: int,
    link_fidelity: float = 0.9,
    connection_id: str | None = None,
) -> tuple[SwapTree, list[CheckResult]]:
    tree = build_swap_tree(path)
    if schedule.n_levels != tree.height + 1:
        raise ValueError(f"schedule has {schedule.n_levels} levels, tree needs {tree.height + 1}")
    ss_mask, ss_checks = np.random.SeedSequence(seed).spawn(2)
    mask = corruption_mask(spec, schedule, tree, connection_id, rng=np.random.default_rng(ss_mask))
    return tree, simulate_es_checks(tree, mask, schedule, spec.node, ss_checks, link_fidelity)


def framing_outcome(
    path: Path,
    spec: HijackerSpec,
    schedule: CheckSchedule,
    seed: int,
    link_fidelity: float = 0.9,
) -> SuspectReport:
    """Who the checks blame on one ES connection under ``spec``'s strategy."""
    tree, results = es_check_log(path, spec, schedule, seed, link_fidelity)
    return identify_es(tree, results)


def qec_verdicts(
    paths: Mapping[str, Path],
    spec: HijackerSpec,
    samples: int,
    seed: int,
    link_fidelity: float = 0.9,
) -> list[tuple[Path, Verdict]]:
    """End-to-end verdicts for QEC connections; only those relayed by the hijacker can be spoiled."""
    base = check_state(link_fidelity, 0)
    seeds = np.random.SeedSequence(seed).spawn(len(paths))
    out = []
    for (cid, p), ss in zip(sorted(paths.items()), seeds):
        spoiled = spec.node in p.interior and _qec_targets(spec, cid, p)
        state = effective_state(base, bool(spoiled))
        out.append((p, statistical_verdict(state, samples, np.random.default_rng(ss))))
    return out


def _qec_targets(spec: HijackerSpec, cid: str, path: Path) -> bool:
    s = spec.base_strategy()
    if isinstance(s, CorruptAll):
        return True
    if isinstance(s, TargetConnection):
        return s.connection_id == cid
    if isinstance(s, Frame):
        return s.victim in path
    return False


def qec_outcome(
    paths: Mapping[str, Path],
    spec: HijackerSpec,
    samples: int,
    seed: int,
    link_fidelity: float = 0.9,
) -> SuspectReport:
    return identify_qec(qec_verdicts(paths, spec, samples, seed, link_fidelity))
