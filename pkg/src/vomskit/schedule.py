"""Time schedules for grants: always, fixed windows, weekly recurrences."""

from dataclasses import dataclass
from datetime import datetime, timezone

from .errors import MalformedDocument

DAY_NAMES = ("Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun")
MINUTES_PER_DAY = 1440


class TimeSchedule:
    def active(self, t):
        raise NotImplementedError

    def to_document(self):
        raise NotImplementedError


@dataclass(frozen=True)
class Always(TimeSchedule):
    def active(self, t):
        return True

    def to_document(self):
        return {"kind": "always"}


@dataclass(frozen=True)
class Window(TimeSchedule):
    """Half-open interval ``[start, end)`` in UTC seconds."""

    start: int
    end: int

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError("window start must precede end")

    def active(self, t):
        return self.start <= t < self.end

    def to_document(self):
        return {"kind": "window", "start": self.start, "end": self.end}


@dataclass(frozen=True)
class Weekly(TimeSchedule):
    """Recurring daily interval ``[start_minute, end_minute)`` on selected UTC weekdays.

    ``days`` holds weekday numbers, Monday = 0.
    """

    days: frozenset
    start_minute: int
    end_minute: int

    def __post_init__(self):
        days = frozenset(self.days)
        if not days or not days <= set(range(7)):
            raise ValueError(f"bad weekday set {sorted(days)}")
        if not 0 <= self.start_minute < self.end_minute <= MINUTES_PER_DAY:
            raise ValueError("need 0 <= start_minute < end_minute <= 1440")
        object.__setattr__(self, "days", days)

    def active(self, t):
        dt = datetime.fromtimestamp(t, tz=timezone.utc)
        minute = dt.hour * 60 + dt.minute
        return dt.weekday() in self.days and self.start_minute <= minute < self.end_minute

    def to_document(self):
        return {
            "kind": "weekly",
            "days": [DAY_NAMES[d] for d in sorted(self.days)],
            "start_minute": self.start_minute,
            "end_minute": self.end_minute,
        }


@dataclass(frozen=True)
class Union(TimeSchedule):
    members: tuple

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        if not self.members:
            raise ValueError("union schedule needs at least one member")

    def active(self, t):
        return any(m.active(t) for m in self.members)

    def to_document(self):
        return {"kind": "union", "members": [m.to_document() for m in self.members]}


def schedule_active(schedule, t):
    return schedule.active(t)


def weekdays(*names):
    return frozenset(DAY_NAMES.index(n) for n in names)


def schedule_from_document(doc):
    try:
        kind = doc["kind"]
        if kind == "always":
            return Always()
        if kind == "window":
            return Window(doc["start"], doc["end"])
        if kind == "weekly":
            return Weekly(weekdays(*doc["days"]), doc["start_minute"], doc["end_minute"])
        if kind == "union":
            return Union(tuple(schedule_from_document(m) for m in doc["members"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedDocument(f"bad schedule: {exc}") from None
    raise MalformedDocument(f"unknown schedule kind {kind!r}")
