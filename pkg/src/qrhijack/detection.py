"""Check evaluation and culprit identification.

Entanglement-swapping connections are checked at every segment of a
nested swap tree; QEC connections only end to end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator, Sequence

import numpy as np

from . import bellmath as bm
from .netgraph import NodeId, Path

MIN_TRIALS = 16
VERDICT_MARGIN = 3.0


class Verdict(str, Enum):
    PASS = "pass"
    FAIL = "fail"


class Confidence(str, Enum):
    IDENTIFIED = "identified"
    NARROWED = "narrowed"
    UNDETERMINED = "undetermined"
    CLEAR = "clear"


@dataclass(frozen=True, order=True)
class Segment:
    """Span [i, j] of path positions; ``swapper`` is the split position, None for links."""

    i: int
    j: int
    level: int
    swapper: int | None

    @property
    def is_link(self) -> bool:
        return self.swapper is None

    @property
    def span(self) -> tuple[int, int]:
        return (self.i, self.j)


@dataclass(frozen=True)
class SwapTree:
    path: Path
    segments: tuple[Segment, ...]

    @property
    def root(self) -> Segment:
        return self.segment(0, self.path.hops)

    def segment(self, i: int, j: int) -> Segment:
        for seg in self.segments:
            if seg.span == (i, j):
                return seg
        raise KeyError((i, j))

    def children(self, seg: Segment) -> tuple[Segment, Segment] | tuple[()]:
        if seg.is_link:
            return ()
        return (self.segment(seg.i, seg.swapper), self.segment(seg.swapper, seg.j))

    def descendants(self, seg: Segment) -> Iterator[Segment]:
        for child in self.children(seg):
            yield child
            yield from self.descendants(child)

    def chain(self, node: NodeId) -> list[Segment]:
        """Segment swapped by ``node`` followed by its ancestors up to the root."""
        pos = self.path.nodes.index(node)
        own = [s for s in self.segments if s.swapper == pos]
        if not own:
            return []
        base = own[0]
        return sorted(
            (s for s in self.segments if s.i <= base.i and base.j <= s.j),
            key=lambda s: s.level,
        )

    def node(self, position: int) -> NodeId:
        return self.path.nodes[position]

    @property
    def height(self) -> int:
        return self.root.level


def build_swap_tree(path: Path) -> SwapTree:
    """Balanced nesting: segment [i, j] is swapped at ceil((i + j) / 2)."""
    if path.hops < 1:
        raise ValueError("path needs at least one hop")
    segs: list[Segment] = []

    def build(i: int, j: int) -> int:
        if j - i == 1:
            segs.append(Segment(i, j, 0, None))
            return 0
        k = (i + j + 1) // 2
        level = 1 + max(build(i, k), build(k, j))
        segs.append(Segment(i, j, level, k))
        return level

    build(0, path.hops)
    return SwapTree(path, tuple(sorted(segs)))


@dataclass(frozen=True)
class CheckResult:
    i: int
    j: int
    level: int
    verdict: Verdict
    samples: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "verdict", Verdict(self.verdict))
        if self.verdict is Verdict.FAIL and self.samples < MIN_TRIALS:
            raise ValueError(f"a fail verdict needs at least {MIN_TRIALS} samples, got {self.samples}")

    def to_record(self) -> dict:
        return {"level": self.level, "i": self.i, "j": self.j, "verdict": self.verdict.value, "n": self.samples}

    @classmethod
    def from_record(cls, rec: dict) -> CheckResult:
        return cls(int(rec["i"]), int(rec["j"]), int(rec["level"]), Verdict(rec["verdict"]), int(rec["n"]))


@dataclass(frozen=True)
class SuspectReport:
    candidates: frozenset[NodeId]
    confidence: Confidence

    def to_dict(self) -> dict:
        return {"suspects": sorted(self.candidates), "confidence": self.confidence.value}


def _basis_pairs(angles: bm.ChshAngles) -> list[tuple[float, float, int]]:
    # (alice angle, bob angle, sign in S)
    return [
        (angles.theta, angles.phi, 1),
        (angles.theta, angles.phi_prime, -1),
        (angles.theta_prime, angles.phi, 1),
        (angles.theta_prime, angles.phi_prime, 1),
    ]


def estimate_chsh(
    state: bm.BellCoeffs,
    n: int,
    rng: np.random.Generator,
    angles: bm.ChshAngles | None = None,
) -> tuple[float, float]:
    """Simulate ``n`` CHSH trials; returns (S estimate, standard error).

    Basis pairs are spread evenly over the trials in random order, and each
    trial yields +1 with probability (1 + E) / 2.
    """
    if n < MIN_TRIALS:
        raise ValueError(f"need at least {MIN_TRIALS} trials, got {n}")
    pairs = _basis_pairs(angles or bm.ChshAngles())
    basis = rng.permutation(np.arange(n) % 4)
    expect = np.array([bm.correlation(state, a, b) for a, b, _ in pairs])
    plus = rng.random(n) < (1.0 + expect[basis]) / 2.0
    s_hat, var = 0.0, 0.0
    for k, (_, _, sign) in enumerate(pairs):
        mask = basis == k
        count = int(mask.sum())
        e_hat = 2.0 * plus[mask].mean() - 1.0
        s_hat += sign * e_hat
        var += max(1.0 - e_hat * e_hat, 1.0 / count) / count
    return s_hat, math.sqrt(var)


def statistical_verdict(
    state: bm.BellCoeffs,
    n: int,
    seed: int | np.random.Generator | Sequence[int],
    margin: float = VERDICT_MARGIN,
    angles: bm.ChshAngles | None = None,
) -> Verdict:
    """Fail when the estimated S is more than ``margin`` standard errors below 2."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    s_hat, se = estimate_chsh(state, n, rng, angles)
    return Verdict.FAIL if s_hat < 2.0 - margin * se else Verdict.PASS


def _swapper_positions(tree: SwapTree, seg: Segment) -> set[int]:
    out = {seg.swapper} if seg.swapper is not None else set()
    for d in tree.descendants(seg):
        if d.swapper is not None:
            out.add(d.swapper)
    return out


def truthful_results(
    tree: SwapTree,
    corrupt: Iterable[NodeId],
    samples: int = MIN_TRIALS,
) -> list[CheckResult]:
    """Error-free check outcomes when ``corrupt`` nodes spoil every pair they swap.

    A segment fails iff one of the corrupt nodes performs a swap inside it.
    """
    bad = {tree.path.nodes.index(n) for n in corrupt if n in tree.path.interior}
    out = []
    for seg in tree.segments:
        fail = bool(bad & _swapper_positions(tree, seg))
        out.append(CheckResult(seg.i, seg.j, seg.level, Verdict.FAIL if fail else Verdict.PASS, samples))
    return out


def identify_es(tree: SwapTree, results: Iterable[CheckResult]) -> SuspectReport:
    """Process of elimination over swap-tree check results.

    A failing segment whose children all pass implicates its swapper; a
    failing link implicates both ends.  A passing segment above a failing
    one cannot happen with a single culprit and makes the report
    undetermined.
    """
    by_span = {(r.i, r.j): r for r in results}
    missing = [s.span for s in tree.segments if s.span not in by_span]
    if missing:
        raise ValueError(f"no check result for segments {missing}")
    failed = {s.span for s in tree.segments if by_span[s.span].verdict is Verdict.FAIL}
    if not failed:
        return SuspectReport(frozenset(), Confidence.CLEAR)
    candidates: set[NodeId] = set()
    consistent = True
    for seg in tree.segments:
        if seg.span not in failed:
            if any(d.span in failed for d in tree.descendants(seg)):
                consistent = False
            continue
        if any(c.span in failed for c in tree.children(seg)):
            continue
        if seg.is_link:
            candidates.update((tree.node(seg.i), tree.node(seg.j)))
        else:
            candidates.add(tree.node(seg.swapper))
    if not consistent:
        tag = Confidence.UNDETERMINED
    elif len(candidates) == 1:
        tag = Confidence.IDENTIFIED
    else:
        tag = Confidence.NARROWED
    return SuspectReport(frozenset(candidates), tag)


def identify_qec(verdicts: Iterable[tuple[Path, Verdict]]) -> SuspectReport:
    """Intersect the interiors of failing connections, minus every node a passing one vouches for."""
    verdicts = [(p, Verdict(v)) for p, v in verdicts]
    if not verdicts:
        raise ValueError("need at least one verdict")
    failing = [set(p.interior) for p, v in verdicts if v is Verdict.FAIL]
    if not failing:
        return SuspectReport(frozenset(), Confidence.CLEAR)
    cleared = set().union(*(p.interior for p, v in verdicts if v is Verdict.PASS))
    candidates = set.intersection(*failing) - cleared
    if not candidates:
        tag = Confidence.UNDETERMINED
    elif len(candidates) == 1:
        tag = Confidence.IDENTIFIED
    else:
        tag = Confidence.NARROWED
    return SuspectReport(frozenset(candidates), tag)
