"""Project files and event-log export.

Projects are UTF-8 JSON with a top-level ``schema_version``. Serialization
is canonical: sorted keys, two-space indent, document list order preserved,
so identical documents produce byte-identical files. Files describe intent
(wall-clock datetimes); virtual times appear only in event logs.

The full field layout is documented in docs/project-schema.md.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Optional, Sequence

from . import engine, model
from .errors import (
    HouseSimError,
    SchemaViolation,
    UnsupportedVersion,
)
from .timeutil import format_iso8601, parse_iso8601

SCHEMA_VERSION = 1

EVENT_LOG_FIELDS = (
    "fire_time_ms",
    "seq",
    "object_id",
    "sensor_id",
    "value",
    "outcome",
    "provenance",
)


@dataclass
class ProjectDocument:
    """Everything needed to reproduce a run: house, tasks, scenarios, epoch."""

    epoch: datetime
    house: model.House
    tasks: list[engine.ScheduledTask] = field(default_factory=list)
    scenarios: list[engine.Scenario] = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION

    def build_engine(self) -> engine.Engine:
        """Fresh engine at virtual 0 with all definitions registered."""
        eng = engine.Engine(self.house, self.epoch)
        for task in self.tasks:
            eng.define_task(
                task.name, task.action, task.absolute_time, task_id=task.id
            )
        # two passes so scenarios may reference later-defined ones
        for scn in self.scenarios:
            eng.define_scenario(
                scn.name,
                scn.first_time,
                scn.repeat_ms,
                entries=(),
                enabled=scn.enabled,
                scenario_id=scn.id,
            )
        for scn in self.scenarios:
            eng.define_scenario(
                scn.name,
                scn.first_time,
                scn.repeat_ms,
                entries=scn.entries,
                enabled=scn.enabled,
                scenario_id=scn.id,
            )
        return eng


# -- validation ----------------------------------------------------------------


def validate_document(doc: ProjectDocument) -> list[model.Violation]:
    """Every semantic violation in the document, first one first."""
    out = list(doc.house.validate())

    task_ids: set[str] = set()
    for task in doc.tasks:
        if task.id in task_ids:
            out.append(model.Violation(task.id, "duplicate task id"))
        task_ids.add(task.id)
        try:
            engine.validate_action(doc.house, task.action)
        except HouseSimError as exc:
            out.append(model.Violation(task.id, str(exc)))

    scenarios_by_id: dict[str, engine.Scenario] = {}
    for scn in doc.scenarios:
        if scn.id in scenarios_by_id:
            out.append(model.Violation(scn.id, "duplicate scenario id"))
        scenarios_by_id[scn.id] = scn
    for scn in doc.scenarios:
        if scn.repeat_ms is not None and scn.repeat_ms <= 0:
            out.append(model.Violation(scn.id, "repeat_ms must be positive"))
        for i, entry in enumerate(scn.entries):
            where = f"{scn.id}.entries[{i}]"
            if entry.delay_ms < 0:
                out.append(model.Violation(where, "delay_ms must be >= 0"))
            if entry.target_kind == engine.TARGET_TASK:
                if entry.target_id not in task_ids:
                    out.append(
                        model.Violation(where, f"unknown task {entry.target_id}")
                    )
            elif entry.target_id not in scenarios_by_id:
                out.append(
                    model.Violation(where, f"unknown scenario {entry.target_id}")
                )
    for scn in doc.scenarios:
        cycle = engine.find_inclusion_cycle(scenarios_by_id, scn.id)
        if cycle is not None:
            out.append(
                model.Violation(
                    scn.id, "scenario inclusion cycle: " + " -> ".join(cycle)
                )
            )
            break  # one cycle report is enough
    return out


# -- JSON writing ---------------------------------------------------------------


def _rect_json(rect: model.Rect) -> dict:
    return {
        "min_x": rect.min_x,
        "min_y": rect.min_y,
        "max_x": rect.max_x,
        "max_y": rect.max_y,
    }


def _format_json(fmt: model.DataFormat) -> dict:
    if isinstance(fmt, model.Numeral):
        return {
            "type": "numeral",
            "min": fmt.min_value,
            "max": fmt.max_value,
            "unit": fmt.unit,
        }
    if isinstance(fmt, model.MultiState):
        return {"type": "multi_state", "states": list(fmt.states)}
    if isinstance(fmt, model.PointFormat):
        return {"type": "point", "bounds": _rect_json(fmt.bounds)}
    raise TypeError(f"not a data format: {fmt!r}")


def _value_json(value: model.SensorValue) -> dict:
    if isinstance(value, model.Number):
        return {"type": "number", "value": value.value}
    if isinstance(value, model.State):
        return {"type": "state", "name": value.name}
    if isinstance(value, model.Position):
        return {"type": "position", "x": value.x, "y": value.y}
    raise TypeError(f"not a sensor value: {value!r}")


def _entry_json(entry: engine.ScenarioEntry) -> dict:
    return {"delay_ms": entry.delay_ms, entry.target_kind: entry.target_id}


def to_jsonable(doc: ProjectDocument) -> dict:
    house = doc.house
    plan = house.plan
    return {
        "schema_version": doc.schema_version,
        "epoch": format_iso8601(doc.epoch),
        "house": {
            "plan": {
                "bounds": _rect_json(plan.bounds),
                "rooms": [
                    {"name": r.name, "polygon": [[x, y] for x, y in r.polygon]}
                    for r in plan.rooms
                ],
                "openings": [
                    {
                        "kind": o.kind,
                        "segment": [[x, y] for x, y in o.segment],
                    }
                    for o in plan.openings
                ],
                "background": (
                    None
                    if plan.background is None
                    else {
                        "image_path": plan.background.image_path,
                        "meters_per_pixel": plan.background.meters_per_pixel,
                    }
                ),
            },
            "sensor_kinds": [
                {"id": k.id, "name": k.name, "format": _format_json(k.format)}
                for k in house.sensor_kinds.values()
            ],
            "devices": [
                {
                    "id": d.id,
                    "name": d.name,
                    "icon_id": d.icon_id,
                    "sensors": [
                        {"id": s.id, "kind": s.kind_id} for s in d.sensors
                    ],
                }
                for d in house.devices.values()
            ],
            "placements": [
                {"device": p.device_id, "x": p.x, "y": p.y}
                for p in house.placements.values()
            ],
        },
        "tasks": [
            {
                "id": t.id,
                "name": t.name,
                "action": {
                    "device": t.action.device_id,
                    "sensor": t.action.sensor_id,
                    "value": _value_json(t.action.value),
                },
                "absolute_time": (
                    None
                    if t.absolute_time is None
                    else format_iso8601(t.absolute_time)
                ),
            }
            for t in doc.tasks
        ],
        "scenarios": [
            {
                "id": s.id,
                "name": s.name,
                "first_time": format_iso8601(s.first_time),
                "repeat_ms": s.repeat_ms,
                "enabled": s.enabled,
                "entries": [_entry_json(e) for e in s.entries],
            }
            for s in doc.scenarios
        ],
    }


def dumps_project(doc: ProjectDocument) -> str:
    violations = validate_document(doc)
    if violations:
        first = violations[0]
        raise SchemaViolation(first.entity, first.message)
    text = json.dumps(
        to_jsonable(doc), sort_keys=True, indent=2, ensure_ascii=False
    )
    return text + "\n"


def save_project(doc: ProjectDocument, path: str | Path) -> None:
    """Write the canonical form; identical docs give byte-identical files."""
    Path(path).write_text(dumps_project(doc), encoding="utf-8")


# -- JSON reading ---------------------------------------------------------------


def _need(obj: Any, path: str, keys: dict[str, bool]) -> dict:
    """Check an object has exactly the given keys (value True = required)."""
    if not isinstance(obj, dict):
        raise SchemaViolation(path, f"expected an object, got {_kind(obj)}")
    for key in obj:
        if key not in keys:
            raise SchemaViolation(f"{path}.{key}", "unknown field")
    for key, required in keys.items():
        if required and key not in obj:
            raise SchemaViolation(path, f"missing required field {key!r}")
    return obj


def _kind(value: Any) -> str:
    return {
        dict: "object",
        list: "array",
        str: "string",
        bool: "boolean",
        type(None): "null",
    }.get(type(value), type(value).__name__)


def _str(obj: dict, path: str, key: str) -> str:
    value = obj[key]
    if not isinstance(value, str):
        raise SchemaViolation(f"{path}.{key}", "expected a string")
    return value


def _num(obj: dict, path: str, key: str) -> float:
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaViolation(f"{path}.{key}", "expected a number")
    return float(value)


def _int(obj: dict, path: str, key: str) -> int:
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaViolation(f"{path}.{key}", "expected an integer")
    return value


def _bool(obj: dict, path: str, key: str) -> bool:
    value = obj[key]
    if not isinstance(value, bool):
        raise SchemaViolation(f"{path}.{key}", "expected a boolean")
    return value


def _list(obj: dict, path: str, key: str) -> list:
    value = obj[key]
    if not isinstance(value, list):
        raise SchemaViolation(f"{path}.{key}", "expected an array")
    return value


def _opt_list(obj: dict, path: str, key: str) -> list:
    if key not in obj:
        return []
    return _list(obj, path, key)


def _datetime(obj: dict, path: str, key: str) -> datetime:
    raw = _str(obj, path, key)
    try:
        return parse_iso8601(raw)
    except ValueError as exc:
        raise SchemaViolation(f"{path}.{key}", str(exc)) from None


def _xy(value: Any, path: str) -> tuple[float, float]:
    if (
        not isinstance(value, list)
        or len(value) != 2
        or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value)
    ):
        raise SchemaViolation(path, "expected an [x, y] number pair")
    return float(value[0]), float(value[1])


def _parse_rect(value: Any, path: str) -> model.Rect:
    obj = _need(value, path, {"min_x": True, "min_y": True, "max_x": True, "max_y": True})
    return model.Rect(
        _num(obj, path, "min_x"),
        _num(obj, path, "min_y"),
        _num(obj, path, "max_x"),
        _num(obj, path, "max_y"),
    )


def _parse_format(value: Any, path: str) -> model.DataFormat:
    if not isinstance(value, dict):
        raise SchemaViolation(path, "expected an object")
    kind = value.get("type")
    if kind == "numeral":
        obj = _need(value, path, {"type": True, "min": True, "max": True, "unit": False})
        return model.Numeral(
            _num(obj, path, "min"),
            _num(obj, path, "max"),
            _str(obj, path, "unit") if "unit" in obj else "",
        )
    if kind == "multi_state":
        obj = _need(value, path, {"type": True, "states": True})
        states = _list(obj, path, "states")
        for i, s in enumerate(states):
            if not isinstance(s, str):
                raise SchemaViolation(f"{path}.states[{i}]", "expected a string")
        return model.MultiState(tuple(states))
    if kind == "point":
        obj = _need(value, path, {"type": True, "bounds": True})
        return model.PointFormat(_parse_rect(obj["bounds"], f"{path}.bounds"))
    raise SchemaViolation(
        f"{path}.type", f"unknown data format type {kind!r}"
    )


def _parse_value(value: Any, path: str) -> model.SensorValue:
    if not isinstance(value, dict):
        raise SchemaViolation(path, "expected an object")
    kind = value.get("type")
    if kind == "number":
        obj = _need(value, path, {"type": True, "value": True})
        return model.Number(_num(obj, path, "value"))
    if kind == "state":
        obj = _need(value, path, {"type": True, "name": True})
        return model.State(_str(obj, path, "name"))
    if kind == "position":
        obj = _need(value, path, {"type": True, "x": True, "y": True})
        return model.Position(_num(obj, path, "x"), _num(obj, path, "y"))
    raise SchemaViolation(f"{path}.type", f"unknown value type {kind!r}")


def _parse_plan(value: Any, path: str) -> model.HousePlan:
    obj = _need(
        value,
        path,
        {"bounds": True, "rooms": False, "openings": False, "background": False},
    )
    plan = model.HousePlan(bounds=_parse_rect(obj["bounds"], f"{path}.bounds"))
    for i, raw in enumerate(_opt_list(obj, path, "rooms")):
        rpath = f"{path}.rooms[{i}]"
        room = _need(raw, rpath, {"name": True, "polygon": True})
        polygon = [
            _xy(v, f"{rpath}.polygon[{j}]")
            for j, v in enumerate(_list(room, rpath, "polygon"))
        ]
        plan.rooms.append(model.Room(_str(room, rpath, "name"), polygon))
    for i, raw in enumerate(_opt_list(obj, path, "openings")):
        opath = f"{path}.openings[{i}]"
        opening = _need(raw, opath, {"kind": True, "segment": True})
        segment = _list(opening, opath, "segment")
        if len(segment) != 2:
            raise SchemaViolation(f"{opath}.segment", "expected two points")
        plan.openings.append(
            model.Opening(
                _str(opening, opath, "kind"),
                (
                    _xy(segment[0], f"{opath}.segment[0]"),
                    _xy(segment[1], f"{opath}.segment[1]"),
                ),
            )
        )
    background = obj.get("background")
    if background is not None:
        bpath = f"{path}.background"
        bg = _need(background, bpath, {"image_path": True, "meters_per_pixel": True})
        plan.background = model.Background(
            _str(bg, bpath, "image_path"), _num(bg, bpath, "meters_per_pixel")
        )
    return plan


def _parse_house(value: Any, path: str) -> model.House:
    obj = _need(
        value,
        path,
        {"plan": True, "sensor_kinds": False, "devices": False, "placements": False},
    )
    house = model.House(_parse_plan(obj["plan"], f"{path}.plan"))
    for i, raw in enumerate(_opt_list(obj, path, "sensor_kinds")):
        kpath = f"{path}.sensor_kinds[{i}]"
        kind = _need(raw, kpath, {"id": True, "name": True, "format": True})
        house.restore_sensor_kind(
            model.SensorKind(
                _str(kind, kpath, "id"),
                _str(kind, kpath, "name"),
                _parse_format(kind["format"], f"{kpath}.format"),
            )
        )
    for i, raw in enumerate(_opt_list(obj, path, "devices")):
        dpath = f"{path}.devices[{i}]"
        dev = _need(
            raw, dpath, {"id": True, "name": True, "icon_id": True, "sensors": True}
        )
        sensors = []
        for j, sraw in enumerate(_list(dev, dpath, "sensors")):
            spath = f"{dpath}.sensors[{j}]"
            sensor = _need(sraw, spath, {"id": True, "kind": True})
            sensors.append(
                model.SensorInstance(
                    _str(sensor, spath, "id"), _str(sensor, spath, "kind")
                )
            )
        house.restore_device(
            model.Device(
                _str(dev, dpath, "id"),
                _str(dev, dpath, "name"),
                _str(dev, dpath, "icon_id"),
                sensors,
            )
        )
    for i, raw in enumerate(_opt_list(obj, path, "placements")):
        ppath = f"{path}.placements[{i}]"
        placement = _need(raw, ppath, {"device": True, "x": True, "y": True})
        house.restore_placement(
            model.Placement(
                _str(placement, ppath, "device"),
                _num(placement, ppath, "x"),
                _num(placement, ppath, "y"),
            )
        )
    return house


def _parse_task(value: Any, path: str) -> engine.ScheduledTask:
    obj = _need(
        value, path, {"id": True, "name": True, "action": True, "absolute_time": False}
    )
    apath = f"{path}.action"
    action = _need(obj["action"], apath, {"device": True, "sensor": True, "value": True})
    when: Optional[datetime] = None
    if obj.get("absolute_time") is not None:
        when = _datetime(obj, path, "absolute_time")
    return engine.ScheduledTask(
        _str(obj, path, "id"),
        _str(obj, path, "name"),
        engine.TaskAction(
            _str(action, apath, "device"),
            _str(action, apath, "sensor"),
            _parse_value(action["value"], f"{apath}.value"),
        ),
        when,
    )


def _parse_scenario(value: Any, path: str) -> engine.Scenario:
    obj = _need(
        value,
        path,
        {
            "id": True,
            "name": True,
            "first_time": True,
            "repeat_ms": False,
            "enabled": False,
            "entries": False,
        },
    )
    repeat: Optional[int] = None
    if obj.get("repeat_ms") is not None:
        repeat = _int(obj, path, "repeat_ms")
    entries = []
    for i, raw in enumerate(_opt_list(obj, path, "entries")):
        epath = f"{path}.entries[{i}]"
        if not isinstance(raw, dict):
            raise SchemaViolation(epath, "expected an object")
        has_task = "task" in raw
        has_scenario = "scenario" in raw
        if has_task == has_scenario:
            raise SchemaViolation(
                epath, "entry needs exactly one of 'task' or 'scenario'"
            )
        target_kind = engine.TARGET_TASK if has_task else engine.TARGET_SCENARIO
        entry = _need(raw, epath, {"delay_ms": True, target_kind: True})
        entries.append(
            engine.ScenarioEntry(
                _int(entry, epath, "delay_ms"),
                target_kind,
                _str(entry, epath, target_kind),
            )
        )
    return engine.Scenario(
        _str(obj, path, "id"),
        _str(obj, path, "name"),
        _datetime(obj, path, "first_time"),
        repeat,
        _bool(obj, path, "enabled") if "enabled" in obj else True,
        entries,
    )


def value_to_json(value: model.SensorValue) -> dict:
    """Public alias used by the service layer and tests."""
    return _value_json(value)


def value_from_json(data: Any, path: str = "$.value") -> model.SensorValue:
    return _parse_value(data, path)


def parse_project(text: str) -> ProjectDocument:
    """Parse and fully validate project JSON text."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaViolation("$", f"not valid JSON: {exc}") from None
    root = _need(
        data,
        "$",
        {
            "schema_version": True,
            "epoch": True,
            "house": True,
            "tasks": False,
            "scenarios": False,
        },
    )
    version = _int(root, "$", "schema_version")
    if version != SCHEMA_VERSION:
        raise UnsupportedVersion(
            f"schema_version {version} not supported (expected {SCHEMA_VERSION})"
        )
    doc = ProjectDocument(
        epoch=_datetime(root, "$", "epoch"),
        house=_parse_house(root["house"], "$.house"),
        tasks=[
            _parse_task(raw, f"$.tasks[{i}]")
            for i, raw in enumerate(_opt_list(root, "$", "tasks"))
        ],
        scenarios=[
            _parse_scenario(raw, f"$.scenarios[{i}]")
            for i, raw in enumerate(_opt_list(root, "$", "scenarios"))
        ],
        schema_version=version,
    )
    violations = validate_document(doc)
    if violations:
        first = violations[0]
        raise SchemaViolation(first.entity, first.message)
    return doc


def load_project(path: str | Path) -> ProjectDocument:
    """Load a project file; diagnostics name the first offending path."""
    return parse_project(Path(path).read_text(encoding="utf-8"))


# -- event log export -------------------------------------------------------------


def _log_row(logged: engine.LoggedEvent) -> dict:
    event = logged.event
    return {
        "fire_time_ms": event.fire_time,
        "seq": event.seq,
        "object_id": event.object_id,
        "sensor_id": event.sensor_id,
        "value": event.value_text,
        "outcome": logged.outcome,
        "provenance": event.provenance.text(),
    }


def dumps_event_log(log: Sequence[engine.LoggedEvent], fmt: str = "csv") -> str:
    rows = [_log_row(item) for item in log]
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=EVENT_LOG_FIELDS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        return buf.getvalue()
    if fmt == "jsonl":
        return "".join(
            json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n" for row in rows
        )
    raise ValueError(f"unknown log format {fmt!r}")


def export_event_log(
    log: Sequence[engine.LoggedEvent], path: str | Path, fmt: str = "csv"
) -> int:
    """Write one row per event in (fire_time, seq) order; returns row count."""
    Path(path).write_text(dumps_event_log(log, fmt), encoding="utf-8")
    return len(log)


def read_event_log(path: str | Path, fmt: str = "csv") -> list[dict]:
    """Parse an exported log back into row dicts (numeric fields as ints)."""
    text = Path(path).read_text(encoding="utf-8")
    if fmt == "csv":
        rows = list(csv.DictReader(io.StringIO(text)))
    elif fmt == "jsonl":
        rows = [json.loads(line) for line in text.splitlines() if line]
    else:
        raise ValueError(f"unknown log format {fmt!r}")
    for row in rows:
        row["fire_time_ms"] = int(row["fire_time_ms"])
        row["seq"] = int(row["seq"])
    return rows
