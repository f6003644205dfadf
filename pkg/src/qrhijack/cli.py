"""Command-line entry point: ``qrhijack {math,simulate,analyze}``.

Exit codes: 0 ok, 1 I/O error, 2 invalid input, 3 simulation error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from pathlib import Path as FsPath
from typing import Sequence

from . import __version__
from . import bellmath as bm
from . import scenario as scn
from .detection import CheckResult, Confidence, SuspectReport, Verdict, build_swap_tree, identify_es, identify_qec
from .netgraph import NetGraphError, Path, framing_cut_search, partition_check, shortest_path
from .simengine import SimulationError, run_many

EXIT_OK, EXIT_IO, EXIT_INVALID, EXIT_SIM = 0, 1, 2, 3

log = logging.getLogger("qrhijack")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# -- math ------------------------------------------------------------------

MATH_COLUMNS = {
    "purification": ("f", "p1", "f_once", "p2", "f_twice", "e_of_f_pairs"),
    "chsh": ("f", "s_raw", "s_once", "s_twice"),
    "thresholds": ("stage", "f_threshold"),
}


def fidelity_grid(f_min: float, f_max: float, step: float) -> list[float]:
    """Inclusive grid; the span must be a whole number of steps."""
    if not step > 0:
        raise CliError("step must be > 0", EXIT_INVALID)
    if not bm.WERNER_MIN < f_min <= f_max <= 1.0:
        raise CliError(f"need {bm.WERNER_MIN} < f-min <= f-max <= 1", EXIT_INVALID)
    n = (f_max - f_min) / step
    count = round(n)
    if abs(n - count) > 1e-9 * max(1.0, n):
        raise CliError("f-max - f-min must be a multiple of step", EXIT_INVALID)
    return [round(f_min + k * step, 12) for k in range(count + 1)]


def math_rows(kind: str, fs: Sequence[float], resource_formula: str = "closed-form") -> list[tuple]:
    if kind == "thresholds":
        return [(stage, bm.chsh_violation_threshold(stage)) for stage in bm.STAGES]
    rows = []
    for f in fs:
        if kind == "purification":
            p = bm.two_round_pipeline(f, resource_formula)
            rows.append((f, p.p1, p.f_once, p.p2, p.f_twice, p.e_of_f))
        else:
            rows.append((f, *(bm.chsh(bm.stage_state(f, s)) for s in bm.STAGES)))
    return rows


def render(columns: Sequence[str], rows: Sequence[tuple], fmt: str) -> str:
    if fmt == "json":
        return json.dumps([dict(zip(columns, r)) for r in rows], indent=2) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def cmd_math(args: argparse.Namespace) -> int:
    fs = [] if args.kind == "thresholds" else fidelity_grid(args.f_min, args.f_max, args.step)
    text = render(MATH_COLUMNS[args.kind], math_rows(args.kind, fs, args.resource_formula), args.format)
    emit(text, args.out)
    return EXIT_OK


# -- simulate --------------------------------------------------------------


def parse_seeds(text: str) -> list[int]:
    """``a..b`` inclusive."""
    try:
        lo, hi = (int(x) for x in text.split(".."))
    except ValueError:
        raise CliError(f"bad seed range {text!r}; expected a..b", EXIT_INVALID) from None
    if lo < 0 or hi < lo:
        raise CliError(f"bad seed range {text!r}", EXIT_INVALID)
    return list(range(lo, hi + 1))


def load_scenario(ref: str) -> scn.ScenarioConfig:
    """A file path, or ``builtin:NAME`` for a packaged scenario."""
    try:
        if ref.startswith("builtin:"):
            name = ref.split(":", 1)[1]
            if name not in scn.builtin_names():
                raise CliError(f"unknown builtin scenario {name!r}; have {scn.builtin_names()}", EXIT_INVALID)
            return scn.load_builtin(name)
        return scn.load(ref)
    except OSError as exc:
        raise CliError(f"cannot read scenario {ref}: {exc.strerror or exc}", EXIT_IO) from None
    except json.JSONDecodeError as exc:
        raise CliError(f"scenario {ref} is not valid JSON: {exc}", EXIT_INVALID) from None
    except scn.ScenarioError as exc:
        raise CliError(f"invalid scenario {ref}: {exc}", EXIT_INVALID) from None


def cmd_simulate(args: argparse.Namespace) -> int:
    sc = load_scenario(args.scenario)
    if args.dump_config:
        emit(scn.dumps(sc), args.out)
        return EXIT_OK
    fmt = args.format or sc.output_format
    seeds = parse_seeds(args.seeds) if args.seeds else [args.seed]
    try:
        runs = run_many(sc, seeds, jobs=args.jobs)
    except SimulationError as exc:
        raise CliError(f"simulation failed: {exc}", EXIT_SIM) from None
    except (ValueError, NetGraphError) as exc:
        raise CliError(f"invalid scenario: {exc}", EXIT_INVALID) from None
    summaries = {}
    for seed, tl in runs.items():
        summaries[seed] = tl.summary
        if args.out is None:
            if len(runs) == 1:
                sys.stdout.write(tl.to_csv() if fmt == "csv" else tl.to_json())
            continue
        base = FsPath(args.out) / (f"seed-{seed}" if len(runs) > 1 else "")
        write(base / f"timeline.{fmt}", tl.to_csv() if fmt == "csv" else tl.to_json())
        write(base / "events.json", tl.events_json())
        write(base / "summary.json", json.dumps(tl.summary, indent=2, sort_keys=True) + "\n")
    if args.out is not None or len(runs) > 1:
        doc = summaries[seeds[0]] if len(runs) == 1 else {str(k): v for k, v in summaries.items()}
        sys.stdout.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


# -- analyze ---------------------------------------------------------------


def read_jsonl(path: str) -> list[dict]:
    try:
        with open(path, encoding="utf-8") as fh:
            lines = [ln for ln in fh if ln.strip()]
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror or exc}", EXIT_IO) from None
    try:
        return [json.loads(ln) for ln in lines]
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: bad JSON line: {exc}", EXIT_INVALID) from None


def identify_from_log(records: list[dict], path: Path | None, model: str) -> dict:
    """Suspects from a check log; segments without a record count as passing."""
    if not records:
        return SuspectReport(frozenset(), Confidence.CLEAR).to_dict()
    if model == "qec":
        verdicts = [(Path(tuple(r["path"])), Verdict(r["verdict"])) for r in records]
        return identify_qec(verdicts).to_dict()
    if path is None:
        raise CliError("--path is required for ES check logs", EXIT_INVALID)
    tree = build_swap_tree(path)
    results = {(r.i, r.j): r for r in map(CheckResult.from_record, records)}
    unknown = sorted(set(results) - {s.span for s in tree.segments})
    if unknown:
        raise CliError(f"log mentions segments {unknown} not in the swap tree", EXIT_INVALID)
    unchecked = [s.span for s in tree.segments if s.span not in results]
    for s in tree.segments:
        results.setdefault(s.span, CheckResult(s.i, s.j, s.level, Verdict.PASS, 0))
    out = identify_es(tree, results.values()).to_dict()
    out["unchecked"] = [list(span) for span in unchecked]
    return out


def cmd_identify(args: argparse.Namespace) -> int:
    records = read_jsonl(args.log)
    path = Path(tuple(p.strip() for p in args.path.split(","))) if args.path else None
    try:
        doc = identify_from_log(records, path, args.model)
    except (KeyError, ValueError) as exc:
        raise CliError(f"bad check log: {exc}", EXIT_INVALID) from None
    emit(json.dumps(doc, indent=2, sort_keys=True) + "\n", args.out)
    return EXIT_OK


def cmd_framing_cuts(args: argparse.Namespace) -> int:
    sc = load_scenario(args.scenario)
    g = sc.graph
    pairs = [(c.src, c.dst) for c in sc.connections]
    try:
        paths = [c.path or shortest_path(g, c.src, c.dst) for c in sc.connections]
        cut = framing_cut_search(g, args.hijacker, pairs, args.budget, paths, goal=args.goal)
    except NetGraphError as exc:
        raise CliError(str(exc), EXIT_INVALID) from None
    doc: dict = {"hijacker": args.hijacker, "budget": args.budget, "goal": args.goal,
                 "cut": None if cut is None else sorted(cut)}
    if cut is not None:
        rep = partition_check(g, cut, pairs)
        doc["unreachable"] = [list(p) for p in rep.unreachable_pairs]
        doc["partitioned"] = rep.partitioned
    emit(json.dumps(doc, indent=2, sort_keys=True) + "\n", args.out)
    return EXIT_OK


# -- plumbing --------------------------------------------------------------


def write(path: FsPath, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc.strerror or exc}", EXIT_IO) from None


def emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        write(FsPath(out), text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qrhijack", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    m = sub.add_parser("math", help="purification, CHSH and threshold tables (CSV or JSON)")
    m.add_argument("kind", choices=sorted(MATH_COLUMNS))
    m.add_argument("--f-min", type=float, default=0.5)
    m.add_argument("--f-max", type=float, default=1.0)
    m.add_argument("--step", type=float, default=0.01)
    m.add_argument("--resource-formula", choices=["closed-form", "pair-tree"], default="closed-form")
    m.add_argument("--format", choices=["csv", "json"], default="csv")
    m.add_argument("--out", help="output file (default stdout)")
    m.set_defaults(func=cmd_math)

    s = sub.add_parser("simulate", help="run a scenario")
    s.add_argument("--scenario", required=True, help="scenario JSON file or builtin:NAME")
    seeds = s.add_mutually_exclusive_group()
    seeds.add_argument("--seed", type=int, default=0)
    seeds.add_argument("--seeds", help="inclusive range a..b")
    s.add_argument("--jobs", type=int, default=1, help="worker processes for seed sweeps")
    s.add_argument("--out", help="output directory (default: timeline on stdout)")
    s.add_argument("--format", choices=["csv", "json"], help="timeline format (default from scenario)")
    s.add_argument("--dump-config", action="store_true", help="print the fully expanded scenario and exit")
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("analyze", help="offline identification and framing analysis")
    asub = a.add_subparsers(dest="analysis", required=True)
    i = asub.add_parser("identify", help="suspects from a JSONL check log")
    i.add_argument("--log", required=True)
    i.add_argument("--path", help="comma-separated node ids of the ES connection")
    i.add_argument("--model", choices=["es", "qec"], default="es")
    i.add_argument("--out")
    i.set_defaults(func=cmd_identify)
    f = asub.add_parser("framing-cuts", help="smallest frameable cut that brings the network down")
    f.add_argument("--scenario", required=True, help="scenario JSON file or builtin:NAME")
    f.add_argument("--hijacker", required=True)
    f.add_argument("--budget", type=int, default=12)
    f.add_argument("--goal", choices=["sever-endpoints", "any-pair"], default="sever-endpoints")
    f.add_argument("--out")
    f.set_defaults(func=cmd_framing_cuts)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"qrhijack: error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
