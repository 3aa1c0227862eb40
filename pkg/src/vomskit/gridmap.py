"""The grid-mapfile: one ``"<subject>" <target>`` line per user.

``target`` is a local account name, or ``.<pool>`` for a pool mapping.
Entries are kept sorted by rendered subject, so output is byte-deterministic.
"""

import os
import re
import tempfile
from dataclasses import dataclass

from .errors import MalformedDocument
from .names import SubjectName, as_subject

_LINE = re.compile(r'^"([^"]+)"\s+(\S+)\s*$')
_TARGET = re.compile(r'^[^\s"]+$')


@dataclass(frozen=True)
class GridMapfile:
    entries: tuple = ()

    def __post_init__(self):
        entries = tuple(sorted(((as_subject(s), t) for s, t in self.entries),
                               key=lambda e: str(e[0])))
        seen = set()
        for subject, target in entries:
            if subject in seen:
                raise ValueError(f"duplicate grid-mapfile subject {subject}")
            if '"' in str(subject):
                raise ValueError(f"subject {subject} cannot be quoted")
            if not _TARGET.match(target):
                raise ValueError(f"bad grid-mapfile target {target!r}")
            seen.add(subject)
        object.__setattr__(self, "entries", entries)

    def lookup(self, subject):
        subject = as_subject(subject)
        for s, target in self.entries:
            if s == subject:
                return target
        return None

    def __contains__(self, subject):
        return self.lookup(subject) is not None

    def __len__(self):
        return len(self.entries)

    def emit(self):
        return "".join(f'"{s}" {t}\n' for s, t in self.entries).encode("utf-8")

    @classmethod
    def parse(cls, data):
        text = data.decode("utf-8") if isinstance(data, bytes) else data
        entries = []
        for n, line in enumerate(text.splitlines(), 1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            m = _LINE.match(line.strip())
            if not m:
                raise MalformedDocument(f"grid-mapfile line {n}: cannot parse {line!r}")
            try:
                entries.append((SubjectName.parse(m.group(1)), m.group(2)))
            except ValueError as exc:
                raise MalformedDocument(f"grid-mapfile line {n}: {exc}") from None
        try:
            return cls(tuple(entries))
        except ValueError as exc:
            raise MalformedDocument(str(exc)) from None

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.parse(fh.read())

    def save(self, path):
        path = os.fspath(path)
        fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)), prefix=".tmp-")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(self.emit())
            os.chmod(tmp, 0o644)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
