"""Distinguished names in slash form, e.g. ``/C=IT/O=INFN/CN=Mario Rossi``."""

import re
from dataclasses import dataclass

_ATTR = re.compile(r"[A-Za-z][A-Za-z0-9.]*\Z")
_COMPONENT = re.compile(r"/([A-Za-z][A-Za-z0-9.]*)=([^/]+)")


@dataclass(frozen=True, order=True)
class SubjectName:
    """An ordered sequence of ``(attribute, value)`` pairs.

    Values may contain any character except ``/``; attributes are short
    alphanumeric tokens.  ``SubjectName.parse(str(name)) == name`` always holds.
    """

    components: tuple

    def __post_init__(self):
        comps = tuple((str(a), str(v)) for a, v in self.components)
        if not comps:
            raise ValueError("subject name needs at least one component")
        for attr, value in comps:
            if not _ATTR.match(attr):
                raise ValueError(f"bad attribute {attr!r}")
            if not value or "/" in value:
                raise ValueError(f"bad value {value!r} for {attr}")
        object.__setattr__(self, "components", comps)

    @classmethod
    def parse(cls, text):
        if not isinstance(text, str):
            raise ValueError("subject name must be a string")
        pos = 0
        comps = []
        for m in _COMPONENT.finditer(text):
            if m.start() != pos:
                break
            comps.append((m.group(1), m.group(2)))
            pos = m.end()
        if pos != len(text) or not comps:
            raise ValueError(f"cannot parse subject name {text!r}")
        return cls(tuple(comps))

    def child(self, attr, value):
        return SubjectName(self.components + ((attr, value),))

    @property
    def parent(self):
        if len(self.components) < 2:
            return None
        return SubjectName(self.components[:-1])

    def __str__(self):
        return "".join(f"/{a}={v}" for a, v in self.components)

    def __repr__(self):
        return f"SubjectName({str(self)!r})"


def as_subject(value):
    """Accept either a :class:`SubjectName` or its rendered string."""
    if isinstance(value, SubjectName):
        return value
    return SubjectName.parse(value)
