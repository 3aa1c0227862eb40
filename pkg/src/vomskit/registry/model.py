"""Registry records: groups, grants, requests."""

from dataclasses import dataclass

from ..errors import MalformedDocument
from ..fqan import _check_capability, valid_segment
from ..names import SubjectName, as_subject
from ..schedule import Always, TimeSchedule, schedule_from_document

MEMBERSHIP = "membership"
ROLE = "role"
CAPABILITY = "capability"

PENDING = "pending"
APPROVED = "approved"
REJECTED = "rejected"


@dataclass(frozen=True)
class GroupNode:
    """A vertex of the group DAG.

    ``parents`` is ordered; the first parent defines the group's rendered path.
    """

    id: int
    name: str
    parents: tuple
    forced: bool = False

    def to_document(self):
        return {"id": self.id, "name": self.name, "parents": list(self.parents),
                "forced": self.forced}

    @classmethod
    def from_document(cls, doc):
        return cls(doc["id"], doc["name"], tuple(doc["parents"]), doc["forced"])


@dataclass(frozen=True)
class Grant:
    user: SubjectName
    scope: int
    kind: str = MEMBERSHIP
    value: str = None
    schedule: TimeSchedule = Always()
    id: int = None

    def __post_init__(self):
        object.__setattr__(self, "user", as_subject(self.user))
        if self.kind == MEMBERSHIP:
            if self.value is not None:
                raise ValueError("membership grants carry no value")
        elif self.kind == ROLE:
            if not valid_segment(self.value):
                raise ValueError(f"bad role name {self.value!r}")
        elif self.kind == CAPABILITY:
            _check_capability(self.value)
        else:
            raise ValueError(f"unknown grant kind {self.kind!r}")
        if not isinstance(self.schedule, TimeSchedule):
            raise ValueError("schedule must be a TimeSchedule")

    def to_document(self):
        doc = {"id": self.id, "user": str(self.user), "scope": self.scope,
               "kind": self.kind, "schedule": self.schedule.to_document()}
        if self.value is not None:
            doc["value"] = self.value
        return doc

    @classmethod
    def from_document(cls, doc):
        try:
            return cls(SubjectName.parse(doc["user"]), doc["scope"], doc["kind"],
                       doc.get("value"), schedule_from_document(doc["schedule"]), doc.get("id"))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedDocument(f"bad grant: {exc}") from None


@dataclass(frozen=True)
class MembershipRequest:
    id: int
    candidate: SubjectName
    requested_scopes: tuple
    state: str = PENDING
    created_at: int = 0
    decided_by: SubjectName = None
    decided_at: int = None

    def to_document(self):
        doc = {"id": self.id, "candidate": str(self.candidate),
               "requested_scopes": list(self.requested_scopes),
               "state": self.state, "created_at": self.created_at}
        if self.decided_by is not None:
            doc["decided_by"] = str(self.decided_by)
            doc["decided_at"] = self.decided_at
        return doc

    @classmethod
    def from_document(cls, doc):
        decided_by = doc.get("decided_by")
        return cls(doc["id"], SubjectName.parse(doc["candidate"]),
                   tuple(doc["requested_scopes"]), doc["state"], doc["created_at"],
                   SubjectName.parse(decided_by) if decided_by else None,
                   doc.get("decided_at"))


@dataclass(frozen=True)
class AdminDelegation:
    admin: SubjectName
    scope: int
