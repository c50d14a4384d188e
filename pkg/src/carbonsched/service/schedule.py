"""Half-hourly schedule files and the Context that reads them."""
from __future__ import annotations

import json
import logging
import math
import threading
import time
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Iterable, Mapping

from ..model import Assignment, StrategyCatalog, ValidationError

log = logging.getLogger(__name__)


class ScheduleError(ValueError):
    pass


class MissingSlot(KeyError):
    pass


def format_key(key: float) -> str:
    return f"{key:g}"


def slot_key(now: datetime, slot_duration_minutes: int = 30) -> float:
    """Schedule key for wall-clock ``now``: hours plus the slot's start fraction.

    For 30-minute slots this is ``hour + 0.5 * floor(minute / 30)``.
    """
    if slot_duration_minutes == 30:
        return now.hour + 0.5 * math.floor(now.minute / 30)
    minutes = now.hour * 60 + now.minute
    return (minutes // slot_duration_minutes) * slot_duration_minutes / 60


@dataclass(frozen=True)
class ScheduleFile:
    slot_duration_minutes: int
    entries: Mapping[float, str]

    @property
    def slots_per_day(self) -> int:
        return 24 * 60 // self.slot_duration_minutes

    @property
    def is_full_day(self) -> bool:
        return len(self.entries) == self.slots_per_day

    def ordered_names(self) -> list[str]:
        return [self.entries[k] for k in sorted(self.entries)]

    def to_assignment(self, catalog: StrategyCatalog) -> Assignment:
        return Assignment(tuple(catalog.id_of(n) for n in self.ordered_names()))

    def to_json(self, metadata: dict | None = None) -> str:
        doc = {
            "slot_duration_minutes": self.slot_duration_minutes,
            "assignment": {format_key(k): self.entries[k] for k in sorted(self.entries)},
        }
        if metadata:
            doc["metadata"] = metadata
        return json.dumps(doc, indent=2) + "\n"


def schedule_from_assignment(
    assignment: Assignment, catalog: StrategyCatalog, slot_duration_minutes: int = 30
) -> ScheduleFile:
    """Map slot ``i`` of a horizon starting at midnight to its schedule key."""
    per_day = 24 * 60 // slot_duration_minutes
    if len(assignment) > per_day:
        raise ScheduleError(f"assignment has {len(assignment)} slots; a day holds {per_day}")
    step = slot_duration_minutes / 60
    return ScheduleFile(
        slot_duration_minutes,
        {i * step: catalog[j].name for i, j in enumerate(assignment.choices)},
    )


def parse_schedule(text: str, known_names: Iterable[str] | None = None) -> ScheduleFile:
    try:
        doc = json.loads(text)
        duration = int(doc.get("slot_duration_minutes", 30))
        raw = doc["assignment"]
    except (ValueError, KeyError, TypeError, AttributeError) as exc:
        raise ScheduleError(f"malformed schedule file: {exc!r}") from exc
    if duration <= 0 or (24 * 60) % duration:
        raise ScheduleError(f"slot duration {duration} does not divide a day")
    if not isinstance(raw, dict) or not raw:
        raise ScheduleError("schedule assignment must be a nonempty mapping")
    names = set(known_names) if known_names is not None else None
    step = duration / 60
    entries = {}
    for key, name in raw.items():
        try:
            k = float(key)
        except ValueError:
            raise ScheduleError(f"bad schedule key {key!r}") from None
        if not 0 <= k < 24 or not math.isclose(k / step, round(k / step)):
            raise ScheduleError(f"schedule key {key!r} is not a slot start")
        if names is not None and name not in names:
            raise ScheduleError(f"slot {key}: unknown strategy {name!r}")
        entries[k] = name
    return ScheduleFile(duration, entries)


def load_schedule(path: str | Path, known_names: Iterable[str] | None = None) -> ScheduleFile:
    return parse_schedule(Path(path).read_text(), known_names)


def lookup_strategy(
    schedule: ScheduleFile,
    now: datetime,
    force: str | None = None,
    known_names: Iterable[str] | None = None,
) -> str:
    """Strategy to run at ``now``; a ``force`` name overrides the schedule."""
    if force is not None:
        if known_names is not None and force not in set(known_names):
            raise ValidationError(f"unknown strategy {force!r}")
        return force
    key = slot_key(now, schedule.slot_duration_minutes)
    try:
        return schedule.entries[key]
    except KeyError:
        raise MissingSlot(f"schedule has no entry for slot {format_key(key)}") from None


class ScheduleStore:
    """Holds the current schedule and re-reads the file when it changes.

    The file's mtime is checked at most once per ``min_interval`` seconds. A
    reload that fails to parse keeps the previous schedule.
    """

    def __init__(self, path, known_names=None, min_interval: float = 1.0, clock=time.monotonic):
        self.path = Path(path)
        self.known_names = set(known_names) if known_names is not None else None
        self.min_interval = min_interval
        self._clock = clock
        self._lock = threading.Lock()
        self._mtime = self.path.stat().st_mtime_ns
        self._schedule = load_schedule(self.path, self.known_names)
        self._checked = clock()

    @property
    def schedule(self) -> ScheduleFile:
        self._maybe_reload()
        return self._schedule

    def _maybe_reload(self) -> None:
        now = self._clock()
        if now - self._checked < self.min_interval:
            return
        with self._lock:
            if now - self._checked < self.min_interval:
                return
            self._checked = now
            try:
                mtime = self.path.stat().st_mtime_ns
            except OSError as exc:
                log.warning("schedule file unavailable, keeping previous: %s", exc)
                return
            if mtime == self._mtime:
                return
            try:
                fresh = load_schedule(self.path, self.known_names)
            except (OSError, ScheduleError) as exc:
                log.warning("schedule reload failed, keeping previous: %s", exc)
                return
            self._schedule = fresh
            self._mtime = mtime
            log.info("reloaded schedule from %s", self.path)
