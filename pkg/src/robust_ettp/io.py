"""JSON (de)serialization for instances and timetables."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Union

from .model import Instance, Timetable

PathLike = Union[str, Path]


class FormatError(ValueError):
    pass


def instance_to_dict(instance: Instance) -> dict:
    return {
        "timeslots": instance.timeslot_count,
        "slots_per_day": instance.slots_per_day,
        "rooms": [{"id": r, "capacity": c} for r, c in enumerate(instance.room_capacities)],
        "exams": [{"id": e, "students": s} for e, s in enumerate(instance.students)],
        "conflicts": [[i, j, w] for (i, j), w in sorted(instance.conflicts.items())],
    }


def _dense(items, key, what):
    ids = [item["id"] for item in items]
    if sorted(ids) != list(range(len(ids))):
        raise FormatError(f"{what} ids must be dense and 0-based")
    values = [0] * len(ids)
    for item in items:
        values[item["id"]] = item[key]
    return tuple(values)


def instance_from_dict(data: dict) -> Instance:
    try:
        conflicts = {}
        for i, j, w in data.get("conflicts", []):
            if i > j:
                i, j = j, i
            if w:
                conflicts[(i, j)] = w
        return Instance(
            room_capacities=_dense(data["rooms"], "capacity", "room"),
            students=_dense(data["exams"], "students", "exam"),
            conflicts=conflicts,
            timeslot_count=data["timeslots"],
            slots_per_day=data["slots_per_day"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"malformed instance: {exc!r}") from exc


def timetable_to_dict(tt: Timetable) -> dict:
    return {
        "assignments": [
            {"exam": e, "timeslot": t, "rooms": sorted(p)}
            for e, (t, p) in enumerate(zip(tt.timeslots, tt.rooms))
        ]
    }


def timetable_from_dict(data: dict) -> Timetable:
    try:
        rows = sorted(data["assignments"], key=lambda a: a["exam"])
        if [a["exam"] for a in rows] != list(range(len(rows))):
            raise FormatError("exam ids must be dense and 0-based")
        return Timetable(
            tuple(a["timeslot"] for a in rows),
            tuple(frozenset(a["rooms"]) for a in rows),
        )
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed timetable: {exc!r}") from exc


def dump_json(data: dict, path: PathLike) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=1, sort_keys=True) + "\n")


def load_json(path: PathLike) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def save_instance(instance: Instance, path: PathLike) -> None:
    dump_json(instance_to_dict(instance), path)


def load_instance(path: PathLike) -> Instance:
    return instance_from_dict(load_json(path))


def save_timetable(tt: Timetable, path: PathLike) -> None:
    dump_json(timetable_to_dict(tt), path)


def load_timetable(path: PathLike) -> Timetable:
    return timetable_from_dict(load_json(path))


def seed_path(instance_path: PathLike) -> Path:
    """Sidecar path holding the generator's seed assignment."""
    p = Path(instance_path)
    stem = p.name[:-5] if p.name.endswith(".json") else p.name
    return p.with_name(stem + ".seed.json")
