"""System files (JSON) and the shipped fixture catalog.

Schema::

    {
      "name": str,
      "provenance": {...},                  # optional, carried through untouched
      "index_base": 0 | 1,                  # labels for vertices/components in this file
      "vertices": int,
      "components": {"count": int, "duration": float | [float, ...], "labels": [...]},
      "edges": [[tail, head, component], ...],
      "sources": [...], "loads": [...],
      "bays": [{"part": "input"|"transform"|"output", "breakpoint": v,
                "capacity": MW, "component": c?}, ...],
      "evaluator": "capacity-sum" | "path-accessibility",
      "scenarios": {label: [damaged components], ...}   # optional
    }
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

from .env import DamageScenario
from .errors import FixtureError, InputError
from .functionality import BaySpec, FunctionalityModel
from .network import SystemSpec

FIXTURES = ("mimo", "substation")


@dataclass(frozen=True)
class SystemFile:
    spec: SystemSpec
    model: FunctionalityModel
    scenarios: dict[str, DamageScenario] = field(default_factory=dict)
    index_base: int = 1
    extra: dict[str, Any] = field(default_factory=dict)
    sha256: str = ""


def parse_system(doc: dict[str, Any], sha256: str = "") -> SystemFile:
    try:
        base = int(doc.get("index_base", 0))
        if base not in (0, 1):
            raise FixtureError("index_base must be 0 or 1")
        comps = doc["components"]
        if isinstance(comps, int):
            comps = {"count": comps}
        n = int(comps["count"])
        dur = comps.get("duration", 1.0)
        durations = tuple(float(d) for d in dur) if isinstance(dur, list) else (float(dur),) * n
        spec = SystemSpec(
            vertex_count=int(doc["vertices"]),
            edges=tuple((u - base, v - base, c - base) for u, v, c in doc["edges"]),
            component_count=n,
            sources=tuple(s - base for s in doc["sources"]),
            loads=tuple(s - base for s in doc["loads"]),
            durations=durations,
            name=str(doc.get("name", "")),
        )
        bays = tuple(
            BaySpec(
                part=b["part"],
                breakpoint=int(b["breakpoint"]) - base,
                capacity=float(b["capacity"]),
                component=None if b.get("component") is None else int(b["component"]) - base,
            )
            for b in doc["bays"]
        )
        model = FunctionalityModel(bays, doc.get("evaluator", "path-accessibility"))
        model.check_against(spec)
        scenarios = {
            label: DamageScenario.from_damaged(spec, [c - base for c in damaged], label)
            for label, damaged in doc.get("scenarios", {}).items()
        }
    except FixtureError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise FixtureError(f"invalid system file: {exc}") from exc
    known = {"name", "index_base", "vertices", "components", "edges", "sources", "loads", "bays", "evaluator", "scenarios"}
    extra = {k: v for k, v in doc.items() if k not in known}
    if isinstance(doc["components"], dict):
        extra["component_meta"] = {k: v for k, v in doc["components"].items() if k not in ("count", "duration")}
    return SystemFile(spec, model, scenarios, base, extra, sha256)


def system_to_dict(system: SystemFile) -> dict[str, Any]:
    spec, model, base = system.spec, system.model, system.index_base
    comps: dict[str, Any] = {"count": spec.component_count, "duration": list(spec.durations)}
    comps.update(system.extra.get("component_meta", {}))
    doc: dict[str, Any] = {"name": spec.name}
    doc.update({k: v for k, v in system.extra.items() if k != "component_meta"})
    doc.update(
        {
            "index_base": base,
            "vertices": spec.vertex_count,
            "components": comps,
            "edges": [[u + base, v + base, c + base] for u, v, c in spec.edges],
            "sources": [s + base for s in spec.sources],
            "loads": [s + base for s in spec.loads],
            "bays": [
                {"part": b.part.value, "breakpoint": b.breakpoint + base, "capacity": b.capacity}
                | ({} if b.component is None else {"component": b.component + base})
                for b in model.bays
            ],
            "evaluator": model.evaluator.value,
            "scenarios": {label: [c + base for c in sc.damaged] for label, sc in system.scenarios.items()},
        }
    )
    return doc


def read_system_file(path: str | Path) -> SystemFile:
    raw = Path(path).read_bytes()
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise FixtureError(f"{path}: not valid JSON ({exc})") from exc
    return parse_system(doc, hashlib.sha256(raw).hexdigest())


def write_system_file(system: SystemFile, path: str | Path) -> None:
    Path(path).write_text(json.dumps(system_to_dict(system), indent=2) + "\n")


def fixture_path(name: str) -> Path:
    if name not in FIXTURES:
        raise KeyError(f"unknown fixture {name!r}; available: {', '.join(FIXTURES)}")
    return Path(str(resources.files("repairseq") / "data" / f"{name}.json"))


def load_system(name_or_path: str | Path) -> SystemFile:
    """Resolve a fixture name or a path to a system file."""
    if str(name_or_path) in FIXTURES:
        return read_system_file(fixture_path(str(name_or_path)))
    path = Path(name_or_path)
    if not path.exists():
        raise KeyError(f"unknown fixture or missing file {name_or_path!r}; fixtures: {', '.join(FIXTURES)}")
    return read_system_file(path)


def load_fixture(name: str) -> tuple[SystemSpec, FunctionalityModel]:
    system = read_system_file(fixture_path(name))
    return system.spec, system.model


def fixture_scenarios(name: str) -> dict[str, DamageScenario]:
    return dict(read_system_file(fixture_path(name)).scenarios)


def parse_scenario_file(doc: dict[str, Any], spec: SystemSpec) -> list[DamageScenario]:
    """Scenario lists: ``{"index_base": 1, "scenarios": [{"label": .., "damaged": [..]}]}``."""
    base = int(doc.get("index_base", 0))
    out = []
    for i, entry in enumerate(doc.get("scenarios", [])):
        label = str(entry.get("label", f"s{i}"))
        out.append(DamageScenario.from_damaged(spec, [int(c) - base for c in entry["damaged"]], label))
    if not out:
        raise InputError("scenario file lists no scenarios")
    return out


def scenarios_to_dict(scenarios: list[DamageScenario], system_name: str, index_base: int = 1, **meta: Any) -> dict[str, Any]:
    doc: dict[str, Any] = {"system": system_name, "index_base": index_base}
    doc.update(meta)
    doc["scenarios"] = [{"label": s.label, "damaged": [c + index_base for c in s.damaged]} for s in scenarios]
    return doc
