"""Scenario files: JSON schema, parsing into ScenarioConfig, and the inverse.

Units: rates in pairs/s, times in s, capacity in pairs/s.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path as FsPath
from typing import Any

import jsonschema

from . import bellmath as bm
from .adversary import CorruptAll, Frame, HijackerSpec, Knowledge, LayLow, Strategy, TargetConnection
from .netgraph import Link, NetworkGraph, Path
from .simengine import ConnectionRequest, PhaseParams, ScenarioConfig
from .tomoplan import Predictable, SecureRandom, WindowParams
from .workload import ES, QEC


class ScenarioError(ValueError):
    pass


_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_STR = {"type": "string", "minLength": 1}


def _obj(props: dict, required: tuple[str, ...] = ()) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


_STRATEGY = {
    "oneOf": [
        _obj({"type": {"const": "corrupt-all"}}, ("type",)),
        _obj({"type": {"const": "target-connection"}, "connection": _STR}, ("type", "connection")),
        _obj(
            {"type": {"const": "frame"}, "victim": _STR, "rate": {"type": "number", "exclusiveMinimum": 0, "maximum": 1}},
            ("type", "victim"),
        ),
        _obj(
            {
                "type": {"const": "lay-low"},
                "intervals": {"type": "array", "items": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}},
                "inner": {"$ref": "#/$defs/strategy"},
            },
            ("type", "intervals"),
        ),
    ]
}

_COST_MODEL = {
    "oneOf": [
        _obj({"type": {"const": "constant"}, "pairs": _POS}, ("type",)),
        _obj({"type": {"const": "affine"}, "base": _NUM, "slope": _NUM}, ("type", "base", "slope")),
        _obj(
            {
                "type": {"const": "table"},
                "points": {"type": "array", "minItems": 1,
                           "items": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}},
            },
            ("type", "points"),
        ),
    ]
}

SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "$defs": {"strategy": _STRATEGY},
    **_obj(
        {
            "description": {"type": "string"},
            "topology": _obj(
                {
                    "nodes": {"type": "array", "items": _STR, "minItems": 1, "uniqueItems": True},
                    "links": {
                        "type": "array",
                        "items": _obj(
                            {"a": _STR, "b": _STR, "cost": _POS,
                             "fidelity": {"type": "number", "exclusiveMinimum": 0.25, "maximum": 1}},
                            ("a", "b"),
                        ),
                    },
                    "isolated": {"type": "array", "items": _STR},
                },
                ("nodes", "links"),
            ),
            "connections": {
                "type": "array",
                "items": _obj(
                    {
                        "id": _STR,
                        "src": _STR,
                        "dst": _STR,
                        "rate": _POS,
                        "model": {
                            "oneOf": [
                                _obj({"type": {"const": "ES"}, "c": {"type": "number", "minimum": 1}}, ("type",)),
                                _obj({"type": {"const": "QEC"}, "d": {"type": "integer", "minimum": 1}}, ("type",)),
                            ]
                        },
                        "priority": {"type": "integer"},
                        "path": {"type": "array", "items": _STR, "minItems": 2},
                    },
                    ("id", "src", "dst", "rate"),
                ),
            },
            "capacity": _POS,
            "window": _obj(
                {
                    "w": {"type": "integer", "minimum": 1},
                    "m": _POS,
                    "burst": {"type": "integer", "minimum": 1},
                    "w_con": {"type": "integer", "minimum": 1},
                    "m_con": _POS,
                    "jitter": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                    "cost_model": _COST_MODEL,
                }
            ),
            "schedule": {
                "oneOf": [
                    _obj({"mode": {"const": "predictable"}}, ("mode",)),
                    _obj(
                        {
                            "mode": {"const": "secure-random"},
                            "seed": {"type": "integer", "minimum": 0},
                            "probability": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                        },
                        ("mode",),
                    ),
                ]
            },
            "hijacker": {
                "oneOf": [
                    {"type": "null"},
                    _obj(
                        {
                            "node": _STR,
                            "start": {"type": "number", "minimum": 0},
                            "knowledge": {"enum": [k.value for k in Knowledge]},
                            "strategy": {"$ref": "#/$defs/strategy"},
                        },
                        ("node",),
                    ),
                ]
            },
            "phases": _obj(
                {
                    "duration": _POS,
                    "dt": _POS,
                    "verification_delay": {"type": "number", "minimum": 0},
                    "shedding": {"enum": ["priority"]},
                    "c_sus_fraction": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
                    "r_sus_fraction": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
                }
            ),
            "output": _obj({"format": {"enum": ["csv", "json"]}}),
        },
        ("topology", "connections", "capacity"),
    ),
}


def validate(doc: dict) -> None:
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ScenarioError(f"{where}: {exc.message}") from None


def _strategy(doc: dict) -> Strategy:
    kind = doc["type"]
    if kind == "corrupt-all":
        return CorruptAll()
    if kind == "target-connection":
        return TargetConnection(doc["connection"])
    if kind == "frame":
        return Frame(doc["victim"], doc.get("rate", 1.0))
    return LayLow(tuple((float(a), float(b)) for a, b in doc["intervals"]), _strategy(doc.get("inner", {"type": "corrupt-all"})))


def _strategy_dict(s: Strategy) -> dict:
    if isinstance(s, CorruptAll):
        return {"type": "corrupt-all"}
    if isinstance(s, TargetConnection):
        return {"type": "target-connection", "connection": s.connection_id}
    if isinstance(s, Frame):
        return {"type": "frame", "victim": s.victim, "rate": s.rate}
    return {"type": "lay-low", "intervals": [list(iv) for iv in s.intervals], "inner": _strategy_dict(s.inner)}


def from_dict(doc: dict) -> ScenarioConfig:
    """Validate ``doc`` against the schema and build the configuration."""
    validate(doc)
    try:
        return _build(doc)
    except (ValueError, TypeError) as exc:
        raise ScenarioError(str(exc)) from exc


def _build(doc: dict) -> ScenarioConfig:
    topo = doc["topology"]
    graph = NetworkGraph.build(
        topo["nodes"],
        [Link(lk["a"], lk["b"], lk.get("cost", 1.0), lk.get("fidelity", 0.9)) for lk in topo["links"]],
        topo.get("isolated", ()),
    )
    conns = []
    for c in doc["connections"]:
        m = c.get("model", {"type": "ES"})
        model = ES(m.get("c", 1.0)) if m["type"] == "ES" else QEC(m.get("d", 3))
        path = Path(tuple(c["path"])) if "path" in c else None
        conns.append(ConnectionRequest(c["id"], c["src"], c["dst"], c["rate"], model, c.get("priority", 0), path))
    win = dict(doc.get("window", {}))
    cost = bm.cost_model_from_dict(win.pop("cost_model", {"type": "constant"}))
    sched = doc.get("schedule", {"mode": "predictable"})
    if sched["mode"] == "predictable":
        mode = Predictable()
    else:
        mode = SecureRandom(sched.get("seed", 0), sched.get("probability", 0.1))
    hij = doc.get("hijacker")
    spec, start = None, 0.0
    if hij is not None:
        spec = HijackerSpec(
            hij["node"],
            _strategy(hij.get("strategy", {"type": "corrupt-all"})),
            Knowledge(hij.get("knowledge", Knowledge.KNOWS_SCHEDULE.value)),
        )
        start = hij.get("start", 0.0)
    return ScenarioConfig(
        graph=graph,
        connections=tuple(conns),
        capacity=doc["capacity"],
        window=WindowParams(**win),
        cost_model=cost,
        schedule=mode,
        hijacker=spec,
        hijack_start=start,
        phases=PhaseParams(**doc.get("phases", {})),
        output_format=doc.get("output", {}).get("format", "csv"),
    )


def to_dict(sc: ScenarioConfig) -> dict:
    """Fully explicit document; ``from_dict(to_dict(sc)) == sc``."""
    g = sc.graph
    conns = []
    for c in sc.connections:
        model = {"type": "ES", "c": c.model.c} if isinstance(c.model, ES) else {"type": "QEC", "d": c.model.d}
        item = {"id": c.id, "src": c.src, "dst": c.dst, "rate": c.rate, "model": model, "priority": c.priority}
        if c.path is not None:
            item["path"] = list(c.path.nodes)
        conns.append(item)
    w = sc.window
    if isinstance(sc.schedule, SecureRandom):
        sched = {"mode": "secure-random", "seed": sc.schedule.seed, "probability": sc.schedule.probability}
    else:
        sched = {"mode": "predictable"}
    hij = None
    if sc.hijacker is not None:
        hij = {
            "node": sc.hijacker.node,
            "start": sc.hijack_start,
            "knowledge": sc.hijacker.knowledge.value,
            "strategy": _strategy_dict(sc.hijacker.strategy),
        }
    ph = sc.phases
    return {
        "topology": {"nodes": sorted(g.nodes), "links": g.edge_list(), "isolated": sorted(g.isolated)},
        "connections": conns,
        "capacity": sc.capacity,
        "window": {
            "w": w.w, "m": w.m, "burst": w.burst, "w_con": w.w_con, "m_con": w.m_con, "jitter": w.jitter,
            "cost_model": bm.cost_model_to_dict(sc.cost_model),
        },
        "schedule": sched,
        "hijacker": hij,
        "phases": {
            "duration": ph.duration,
            "dt": ph.dt,
            "verification_delay": ph.verification_delay,
            "shedding": ph.shedding,
            "c_sus_fraction": ph.c_sus_fraction,
            "r_sus_fraction": ph.r_sus_fraction,
        },
        "output": {"format": sc.output_format},
    }


def dumps(sc: ScenarioConfig) -> str:
    return json.dumps(to_dict(sc), indent=2, sort_keys=True) + "\n"


def load(path: str | FsPath) -> ScenarioConfig:
    """Read a scenario file; OSError and json.JSONDecodeError propagate."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return from_dict(doc)


def builtin_names() -> list[str]:
    files = resources.files("qrhijack") / "scenarios"
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".json"))


def load_builtin(name: str) -> ScenarioConfig:
    ref = resources.files("qrhijack") / "scenarios" / f"{name}.json"
    return from_dict(json.loads(ref.read_text(encoding="utf-8")))
