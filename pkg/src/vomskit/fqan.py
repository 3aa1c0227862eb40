"""Fully qualified attribute names: ``/vo/group/sub/Role=r/Capability=c``."""

import re
from dataclasses import dataclass

_SEGMENT = re.compile(r"[A-Za-z0-9._-]+\Z")
MAX_CAPABILITY_BYTES = 255


def valid_segment(name):
    return isinstance(name, str) and bool(_SEGMENT.match(name))


def _check_capability(cap):
    if not cap or "/" in cap or len(cap.encode("utf-8")) > MAX_CAPABILITY_BYTES:
        raise ValueError(f"bad capability {cap!r}")


@dataclass(frozen=True)
class Fqan:
    vo: str
    groups: tuple = ()
    role: str = None
    capability: str = None

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(self.groups))
        for seg in (self.vo,) + self.groups:
            if not valid_segment(seg):
                raise ValueError(f"bad group segment {seg!r}")
        if self.role is not None and not valid_segment(self.role):
            raise ValueError(f"bad role {self.role!r}")
        if self.capability is not None:
            _check_capability(self.capability)

    @classmethod
    def parse(cls, text):
        if not isinstance(text, str) or not text.startswith("/"):
            raise ValueError(f"bad FQAN {text!r}")
        parts = text[1:].split("/")
        vo, rest = parts[0], parts[1:]
        groups, role, cap = [], None, None
        for part in rest:
            if part.startswith("Capability="):
                if cap is not None:
                    raise ValueError(f"bad FQAN {text!r}")
                cap = part[len("Capability="):]
            elif part.startswith("Role="):
                if role is not None or cap is not None:
                    raise ValueError(f"bad FQAN {text!r}")
                role = part[len("Role="):]
            elif role is None and cap is None:
                groups.append(part)
            else:
                raise ValueError(f"bad FQAN {text!r}")
        return cls(vo, tuple(groups), role, cap)

    @property
    def group(self):
        """This FQAN with role and capability stripped."""
        return Fqan(self.vo, self.groups)

    @property
    def is_membership(self):
        return self.role is None and self.capability is None

    def with_role(self, role):
        return Fqan(self.vo, self.groups, role, self.capability)

    def with_capability(self, cap):
        return Fqan(self.vo, self.groups, self.role, cap)

    def __str__(self):
        s = "/" + "/".join((self.vo,) + self.groups)
        if self.role is not None:
            s += "/Role=" + self.role
        if self.capability is not None:
            s += "/Capability=" + self.capability
        return s


def as_fqan(value):
    return value if isinstance(value, Fqan) else Fqan.parse(value)


@dataclass(frozen=True)
class FqanPattern:
    """An FQAN, optionally ending in ``/*``.

    ``/vo/g/*`` matches ``/vo/g`` itself and every FQAN rendered below it,
    including role and capability forms.  Without the wildcard the match is
    exact.
    """

    base: str
    wildcard: bool = False

    @classmethod
    def parse(cls, text):
        wildcard = text.endswith("/*")
        base = text[:-2] if wildcard else text
        Fqan.parse(base)
        return cls(base, wildcard)

    def matches(self, fqan):
        s = str(fqan)
        if s == self.base:
            return True
        return self.wildcard and s.startswith(self.base + "/")

    def __str__(self):
        return self.base + ("/*" if self.wildcard else "")
