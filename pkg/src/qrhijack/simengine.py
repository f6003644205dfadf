"""Discrete-time run of the four network phases.

Phase 1 bootstraps link tomography, phase 2 carries user connections,
phase 3 isolates suspects after a detection, and phase 4 reinstates the
innocent ones once the administrator has verified them.
"""

from __future__ import annotations

import bisect
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import bellmath as bm
from .adversary import (
    FramingInfeasibleWarning,
    HijackerSpec,
    TargetConnection,
    check_state,
    corruption_mask,
    level_state,
    validate_hijacker,
)
from .detection import (
    MIN_TRIALS,
    CheckResult,
    SwapTree,
    Verdict,
    build_swap_tree,
    identify_es,
    identify_qec,
    statistical_verdict,
)
from .netgraph import NetGraphError, NetworkGraph, NodeId, Path, isolate, shortest_path
from .tomoplan import (
    Predictable,
    ScheduleMode,
    SecureRandom,
    WindowParams,
    burst_intervals,
    make_schedule,
    path_fidelity,
    plan_tomography,
)
from .workload import ES, Connection, RepeaterModel, network_work, reroute_all, rerouted_work, suspect_capacity

SHEDDING_POLICIES = ("priority",)


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class ConnectionRequest:
    """A connection to admit after bootstrap; ``path`` None means shortest path."""

    id: str
    src: NodeId
    dst: NodeId
    rate: float
    model: RepeaterModel = field(default_factory=ES)
    priority: int = 0
    path: Path | None = None


@dataclass(frozen=True)
class PhaseParams:
    """Run timing (seconds) and phase-3/4 accounting knobs.

    ``c_sus_fraction``/``r_sus_fraction`` fix C_sus and R_sus as fractions of
    C and R; by default C_sus follows the isolated share of nodes and R_sus
    is the drop in the recomputed maintenance rate.
    """

    duration: float = 1000.0
    dt: float = 1.0
    verification_delay: float = 100.0
    shedding: str = "priority"
    c_sus_fraction: float | None = None
    r_sus_fraction: float | None = None

    def __post_init__(self) -> None:
        if not self.duration > 0 or not self.dt > 0:
            raise ValueError("duration and dt must be > 0")
        if self.verification_delay < 0:
            raise ValueError("verification_delay must be >= 0")
        if self.shedding not in SHEDDING_POLICIES:
            raise ValueError(f"unknown shedding policy {self.shedding!r}")
        for name in ("c_sus_fraction", "r_sus_fraction"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")


@dataclass(frozen=True)
class ScenarioConfig:
    graph: NetworkGraph
    connections: tuple[ConnectionRequest, ...]
    capacity: float
    window: WindowParams = field(default_factory=WindowParams)
    cost_model: bm.CostModel = bm.DEFAULT_COST_MODEL
    schedule: ScheduleMode = field(default_factory=Predictable)
    hijacker: HijackerSpec | None = None
    hijack_start: float = 0.0
    phases: PhaseParams = field(default_factory=PhaseParams)
    output_format: str = "csv"

    def __post_init__(self) -> None:
        object.__setattr__(self, "connections", tuple(self.connections))
        if not self.capacity > 0:
            raise ValueError("capacity C must be > 0")
        ids = [c.id for c in self.connections]
        if len(set(ids)) != len(ids):
            raise ValueError("connection ids must be unique")
        for req in self.connections:
            for end in (req.src, req.dst):
                if end not in self.graph.nodes:
                    raise ValueError(f"connection {req.id}: unknown node {end!r}")
            if req.path is not None and (req.path.src, req.path.dst) != (req.src, req.dst):
                raise ValueError(f"connection {req.id}: path does not join {req.src} and {req.dst}")
        if self.hijacker is not None:
            if self.hijacker.node not in self.graph.nodes:
                raise ValueError(f"hijacker {self.hijacker.node!r} is not a node")
            if not 0.0 <= self.hijack_start <= self.phases.duration:
                raise ValueError("hijack start must lie within the run")
            base = self.hijacker.base_strategy()
            if isinstance(base, TargetConnection) and base.connection_id not in ids:
                raise ValueError(f"hijacker targets unknown connection {base.connection_id!r}")
        if self.output_format not in ("csv", "json"):
            raise ValueError("output format must be csv or json")


@dataclass(frozen=True)
class StepRecord:
    t: float
    phase: int
    capacity: float
    work: float
    maintenance: float
    slack: float
    shed_work: float
    isolated: int


@dataclass(frozen=True)
class Event:
    t: float
    kind: str
    detail: dict

    def to_dict(self) -> dict:
        return {"t": self.t, "event": self.kind, **self.detail}


CSV_HEADER = (
    "t_s",
    "phase",
    "capacity_pairs_per_s",
    "work_pairs_per_s",
    "maintenance_pairs_per_s",
    "slack_pairs_per_s",
    "shed_work_pairs_per_s",
    "isolated_nodes",
)


def _num(x: float) -> str:
    return format(float(x), ".12g")


@dataclass
class SimulationTimeline:
    records: list[StepRecord]
    events: list[Event]
    summary: dict

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(CSV_HEADER) + "\n")
        for r in self.records:
            row = (_num(r.t), str(r.phase), _num(r.capacity), _num(r.work), _num(r.maintenance),
                   _num(r.slack), _num(r.shed_work), str(r.isolated))
            buf.write(",".join(row) + "\n")
        return buf.getvalue()

    def events_json(self) -> str:
        return json.dumps([e.to_dict() for e in self.events], indent=2, sort_keys=True) + "\n"

    def to_json(self) -> str:
        doc = {
            "columns": list(CSV_HEADER),
            "records": [[r.t, r.phase, r.capacity, r.work, r.maintenance, r.slack, r.shed_work, r.isolated]
                        for r in self.records],
            "events": [e.to_dict() for e in self.events],
            "summary": self.summary,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def phases(self) -> list[int]:
        return [r.phase for r in self.records]

    def first(self, kind: str) -> Event | None:
        return next((e for e in self.events if e.kind == kind), None)


def shedding_policy(connections: Iterable[Connection], deficit: float) -> list[str]:
    """Ids to shed so that the freed work strictly exceeds ``deficit``.

    Lowest priority goes first, then the heaviest work, then the id.  A
    negative deficit sheds nothing; a zero deficit still sheds, since the
    slack must end up strictly positive.
    """
    if deficit < 0:
        return []
    order = sorted(connections, key=lambda c: (c.priority, -c.work(), c.id))
    shed, freed = [], 0.0
    for conn in order:
        if freed > deficit:
            break
        shed.append(conn.id)
        freed += conn.work()
    return shed


@dataclass(frozen=True)
class _Stage:
    t: float
    phase: int
    capacity: float
    work: float
    maintenance: float
    shed_work: float
    isolated: int

    @property
    def slack(self) -> float:
        return self.capacity - self.work - self.maintenance


@dataclass
class _Monitor:
    """Per-round check-pair bookkeeping for one connection through the hijacker."""

    conn: Connection
    tree: SwapTree | None
    chain: frozenset[tuple[int, int]]
    counts: np.ndarray  # cumulative, shape (rounds + 1, levels)
    spoiled: np.ndarray
    states: list[bm.BellCoeffs]

    def window(self, lo: int, hi: int) -> tuple[np.ndarray, np.ndarray]:
        """Check-pair and spoiled counts per level over rounds lo..hi-1."""
        return self.counts[hi] - self.counts[lo], self.spoiled[hi] - self.spoiled[lo]

    def segments(self) -> list[tuple[int, int, int]]:
        if self.tree is None:
            return [(0, self.conn.hops, 0)]
        return [(s.i, s.j, s.level) for s in self.tree.segments]

    def evaluate(self, lo: int, hi: int, rng: np.random.Generator) -> list[CheckResult]:
        """Verdicts for every segment; windows without spoiled pairs pass untested."""
        n, bad = self.window(lo, hi)
        out = []
        for i, j, level in self.segments():
            k = int(n[level])
            spoiled = int(bad[level]) if (i, j) in self.chain else 0
            if spoiled == 0:
                out.append(CheckResult(i, j, level, Verdict.PASS, k))
                continue
            if k < MIN_TRIALS:
                raise SimulationError(f"connection {self.conn.id}: window holds {k} level-{level} check pairs")
            state = level_state(self.states[level], k, spoiled)
            out.append(CheckResult(i, j, level, statistical_verdict(state, k, rng), k))
        return out


def _admit(sc: ScenarioConfig, t: float, events: list[Event]) -> list[Connection]:
    conns = []
    for req in sc.connections:
        try:
            path = req.path if req.path is not None else shortest_path(sc.graph, req.src, req.dst)
            sc.graph.validate_path(path)
        except NetGraphError as exc:
            events.append(Event(t, "reject", {"connection": req.id, "reason": str(exc)}))
            continue
        conns.append(Connection(req.id, path, req.rate, req.model, req.priority))
        events.append(Event(t, "admit", {"connection": req.id, "path": list(path.nodes)}))
    return conns


def _round_length(sc: ScenarioConfig, levels: int) -> int:
    burst = sc.window.burst
    if isinstance(sc.schedule, SecureRandom):
        return math.ceil(burst / sc.schedule.probability)
    return burst * levels


def _monitor(
    sc: ScenarioConfig,
    conn: Connection,
    burst_times: np.ndarray,
    t_hijack: float,
    sched_seed: int,
    rng: np.random.Generator,
) -> _Monitor:
    spec = sc.hijacker
    tree = build_swap_tree(conn.path) if isinstance(conn.model, ES) else None
    levels = tree.height + 1 if tree is not None else 1
    per_round = _round_length(sc, levels)
    length = per_round * len(burst_times)
    if isinstance(sc.schedule, SecureRandom):
        mode = SecureRandom(sched_seed, sc.schedule.probability)
    else:
        mode = Predictable(block=sc.window.burst)
    schedule = make_schedule(mode, levels, length)
    times = np.repeat(burst_times, per_round)
    mask = corruption_mask(spec, schedule, tree, conn.id, times=times, rng=rng) & (times >= t_hijack)
    rounds = np.arange(length) // per_round
    valid = schedule.levels >= 0
    flat = rounds[valid] * levels + schedule.levels[valid]
    size = len(burst_times) * levels
    counts = np.bincount(flat, minlength=size).reshape(-1, levels)
    spoiled = np.bincount(flat, weights=mask[valid], minlength=size).reshape(-1, levels).astype(np.int64)
    zero = np.zeros((1, levels), dtype=np.int64)
    chain = frozenset(s.span for s in tree.chain(spec.node)) if tree is not None else frozenset({(0, conn.hops)})
    f = path_fidelity(sc.graph, conn)
    return _Monitor(
        conn,
        tree,
        chain,
        np.vstack([zero, np.cumsum(counts, axis=0)]),
        np.vstack([zero, np.cumsum(spoiled, axis=0)]),
        [check_state(f, lv) for lv in range(levels)],
    )


def _identify(
    conns: Sequence[Connection],
    monitors: dict[str, _Monitor],
    lo: int,
    hi: int,
    rng: np.random.Generator,
) -> tuple[frozenset[NodeId], dict]:
    """Suspects from one window of checks over every connection."""
    suspects: set[NodeId] = set()
    reports: dict[str, dict] = {}
    qec: list[tuple[Path, Verdict]] = []
    for conn in conns:
        mon = monitors.get(conn.id)
        if isinstance(conn.model, ES):
            if mon is None:
                continue
            results = mon.evaluate(lo, hi, rng)
            rep = identify_es(mon.tree, results)
            if rep.candidates:
                suspects |= rep.candidates
                reports[conn.id] = rep.to_dict()
        else:
            verdict = mon.evaluate(lo, hi, rng)[0].verdict if mon is not None else Verdict.PASS
            qec.append((conn.path, verdict))
    if qec:
        rep = identify_qec(qec)
        if rep.candidates:
            suspects |= rep.candidates
            reports["qec"] = rep.to_dict()
    return frozenset(suspects), reports


def _sus_values(sc: ScenarioConfig, nodes: frozenset[NodeId], scale: float, graph_after, active, R):
    """(C_x, effective maintenance) once ``nodes`` are isolated."""
    ph = sc.phases
    if ph.c_sus_fraction is not None:
        c_x = ph.c_sus_fraction * sc.capacity * scale
    else:
        c_x = suspect_capacity(sc.capacity, sc.graph, nodes)
    if ph.r_sus_fraction is not None:
        r_eff = R - ph.r_sus_fraction * R * scale
    else:
        r_eff = plan_tomography(graph_after, active, sc.window, sc.cost_model).rate
    return c_x, r_eff


def run(sc: ScenarioConfig, seed: int) -> SimulationTimeline:
    """Simulate ``sc``; identical (scenario, seed) pairs give identical timelines."""
    ss_burst, ss_sched, ss_mask, ss_check = np.random.SeedSequence(seed).spawn(4)
    check_rng = np.random.default_rng(ss_check)
    events: list[Event] = []
    C, ph = sc.capacity, sc.phases
    summary: dict = {"seed": seed, "capacity": C}

    link_rate = sum(plan_tomography(sc.graph, [], sc.window, sc.cost_model).link_costs.values())
    t_boot = link_rate / C
    stages = [_Stage(0.0, 1, C, 0.0, C, 0.0, 0)]
    summary["bootstrap_s"] = t_boot
    if t_boot <= ph.duration:
        events.append(Event(t_boot, "bootstrap-complete", {}))
        conns = _admit(sc, t_boot, events)
        plan = plan_tomography(sc.graph, conns, sc.window, sc.cost_model)
        W, R = network_work(conns), plan.rate
        stages.append(_Stage(t_boot, 2, C, W, R, 0.0, 0))
        summary.update(work=W, maintenance=R, phase2_slack=C - W - R)
        if C - W - R <= 0:
            events.append(Event(t_boot, "overcommitted", {"slack": C - W - R}))
        if sc.hijacker is not None:
            _hijack(sc, seed, conns, W, R, t_boot, stages, events, summary,
                    ss_burst, ss_sched, ss_mask, check_rng)

    times = [s.t for s in stages]
    records = []
    for i in range(int(round(ph.duration / ph.dt)) + 1):
        t = i * ph.dt
        st = stages[bisect.bisect_right(times, t) - 1]
        records.append(StepRecord(t, st.phase, st.capacity, st.work, st.maintenance, st.slack,
                                  st.shed_work, st.isolated))
    return SimulationTimeline(records, events, summary)


def _hijack(sc, seed, conns, W, R, t_boot, stages, events, summary, ss_burst, ss_sched, ss_mask, check_rng):
    spec: HijackerSpec = sc.hijacker
    ph, C, win = sc.phases, sc.capacity, sc.window
    validate_hijacker(spec, sc.graph, [c.path for c in conns])
    t_h = max(sc.hijack_start, t_boot)
    events.append(Event(t_h, "hijack-start", {"node": spec.node}))
    summary["hijack_start"] = t_h

    span = ph.duration - t_boot
    count = math.ceil(span / (win.m * (1 - win.jitter))) + 1
    burst_times = t_boot + np.cumsum(burst_intervals(win, count, np.random.default_rng(ss_burst)))
    burst_times = burst_times[burst_times <= ph.duration]
    mask_rng = np.random.default_rng(ss_mask)
    if isinstance(sc.schedule, SecureRandom):
        # the pseudorandom schedule is shared by administrator and honest nodes only
        ss_sched = np.random.SeedSequence([sc.schedule.seed, seed])
    sched_seeds = ss_sched.generate_state(len(conns), dtype=np.uint32)
    monitors: dict[str, _Monitor] = {}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", FramingInfeasibleWarning)
        for conn, s in zip(conns, sched_seeds):
            if spec.node in conn.path.interior:
                monitors[conn.id] = _monitor(sc, conn, burst_times, t_h, int(s), mask_rng)
    if any(issubclass(w.category, FramingInfeasibleWarning) for w in caught):
        events.append(Event(t_h, "framing-infeasible", {"node": spec.node}))

    w = win.w
    k = max(w - 1, int(np.searchsorted(burst_times, t_h)))
    n_rounds = len(burst_times)
    while k < n_rounds:
        if not _window_fails(monitors, k + 1 - w, k + 1, check_rng):
            k += 1
            continue
        t_d = float(burst_times[k])
        events.append(Event(t_d, "detection", {"lag": t_d - t_h}))
        summary.setdefault("detection_time", t_d)
        summary.setdefault("detection_lag", t_d - t_h)
        if k + w >= n_rounds:
            return
        suspects, reports = _identify(conns, monitors, k + 1, k + 1 + w, check_rng)
        t_i = float(burst_times[k + w])
        if not suspects:
            events.append(Event(t_i, "identification-inconclusive", {}))
            k += w + 1
            continue
        _phase3_4(sc, conns, W, R, suspects, reports, t_i, stages, events, summary)
        return
    if monitors:
        summary.setdefault("detection_time", None)


def _window_fails(monitors: dict[str, _Monitor], lo: int, hi: int, rng: np.random.Generator) -> bool:
    for cid in sorted(monitors):
        mon = monitors[cid]
        _, bad = mon.window(lo, hi)
        if not bad.any():
            continue
        if any(r.verdict is Verdict.FAIL for r in mon.evaluate(lo, hi, rng)):
            return True
    return False


def _phase3_4(sc, conns, W, R, suspects, reports, t_i, stages, events, summary):
    ph, C = sc.phases, sc.capacity
    spec: HijackerSpec = sc.hijacker
    g3 = isolate(sc.graph, suspects)
    outcome = reroute_all(sc.graph, conns, suspects)
    w3 = rerouted_work(W, suspects, conns, outcome)
    active = outcome.active
    unroutable = outcome.shed
    lost = sum(c.work() for c in conns if c.id in unroutable)
    c_sus, r3 = _sus_values(sc, suspects, 1.0, g3, active, R)
    s3 = (C - c_sus) - w3 - r3
    events.append(Event(t_i, "isolation", {"suspects": sorted(suspects), "reports": reports}))
    events.append(Event(t_i, "reroute", {
        "rerouted": {c.id: list(outcome.connections[c.id].path.nodes)
                     for c in conns if outcome.connections[c.id] not in (None, c)},
        "unroutable": unroutable,
    }))
    shed = shedding_policy(active, -s3) if s3 <= 0 else []
    if shed:
        freed = sum(c.work() for c in active if c.id in shed)
        active = [c for c in active if c.id not in shed]
        w3 -= freed
        lost += freed
        events.append(Event(t_i, "shed", {"connections": shed, "slack_before": s3}))
    stages.append(_Stage(t_i, 3, C - c_sus, w3, r3, lost, len(suspects)))
    summary.update(
        suspects=sorted(suspects),
        isolation_time=t_i,
        work_prime=w3,
        slack_prime=stages[-1].slack,
        shed=sorted(set(shed) | set(unroutable)),
    )

    t4 = t_i + ph.verification_delay
    confirmed = suspects & {spec.node}
    reinstated = suspects - confirmed
    original = {c.id: c for c in conns}
    back = reroute_all(sc.graph, [original[c.id] for c in active], confirmed)
    conns4 = back.active
    g4 = isolate(sc.graph, confirmed)
    w4 = network_work(conns4)
    scale = len(confirmed) / len(suspects)
    c_k, r4 = _sus_values(sc, confirmed, scale, g4, conns4, R)
    stages.append(_Stage(t4, 4, C - c_k, w4, r4, lost, len(confirmed)))
    events.append(Event(t4, "reinstatement", {"reinstated": sorted(reinstated), "confirmed": sorted(confirmed)}))
    summary.update(
        confirmed=sorted(confirmed),
        reinstated=sorted(reinstated),
        reinstatement_time=t4,
        work_second=w4,
        slack_second=stages[-1].slack,
    )


def run_many(sc: ScenarioConfig, seeds: Iterable[int], jobs: int = 1) -> dict[int, SimulationTimeline]:
    """Independent runs keyed by seed; ``jobs`` > 1 fans them out to worker processes."""
    seeds = list(seeds)
    if jobs <= 1:
        return {s: run(sc, s) for s in seeds}
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return dict(zip(seeds, pool.map(run, [sc] * len(seeds), seeds)))

