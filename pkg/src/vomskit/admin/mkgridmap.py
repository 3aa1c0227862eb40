"""Generate a grid-mapfile from VO user lists plus local directives.

Config grammar, one directive per line, ``#`` starts a comment::

    group <host:port> <vo-or-fqan> <target>
    auth "<subject>" <target>
    deny "<subject>"

Entries are taken in directive order (first mention of a subject wins) and
every subject named by a ``deny`` line is removed, wherever it appears.
"""

import shlex
from dataclasses import dataclass

from ..errors import EndpointUnreachable, MalformedConfig, TransportError, VomsError
from ..fqan import Fqan
from ..gridmap import GridMapfile
from ..names import SubjectName
from ..transport import split_endpoint
from .client import AdminClient

_ARITY = {"group": 3, "auth": 2, "deny": 1}


@dataclass(frozen=True)
class Directive:
    kind: str
    args: tuple
    line: int = 0


@dataclass(frozen=True)
class MkgridmapConfig:
    directives: tuple

    @classmethod
    def parse(cls, text):
        directives = []
        for n, raw in enumerate(text.splitlines(), 1):
            try:
                words = shlex.split(raw, comments=True)
            except ValueError as exc:
                raise MalformedConfig(f"line {n}: {exc}") from None
            if not words:
                continue
            kind, args = words[0], tuple(words[1:])
            if kind not in _ARITY or len(args) != _ARITY[kind]:
                raise MalformedConfig(f"line {n}: cannot parse {raw.strip()!r}")
            try:
                if kind == "group":
                    split_endpoint(args[0])
                    fq = args[1] if args[1].startswith("/") else "/" + args[1]
                    args = (args[0], str(Fqan.parse(fq)), args[2])
                else:
                    SubjectName.parse(args[0])
            except ValueError as exc:
                raise MalformedConfig(f"line {n}: {exc}") from None
            directives.append(Directive(kind, args, n))
        return cls(tuple(directives))

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.parse(fh.read())


def mkgridmap_generate(config, fetcher):
    """Build the grid-mapfile bytes.

    ``fetcher(endpoint, fqan)`` returns the subjects currently holding ``fqan``
    at that endpoint.
    """
    denied = {SubjectName.parse(d.args[0]) for d in config.directives if d.kind == "deny"}
    entries = {}
    for d in config.directives:
        if d.kind == "group":
            endpoint, fqan, target = d.args
            try:
                subjects = fetcher(endpoint, fqan)
            except EndpointUnreachable:
                raise
            except (TransportError, OSError) as exc:
                raise EndpointUnreachable(endpoint, str(exc)) from None
            for s in subjects:
                entries.setdefault(SubjectName.parse(str(s)), target)
        elif d.kind == "auth":
            entries.setdefault(SubjectName.parse(d.args[0]), d.args[1])
    try:
        gm = GridMapfile(tuple((s, t) for s, t in entries.items() if s not in denied))
    except ValueError as exc:
        raise MalformedConfig(str(exc)) from None
    return gm.emit()


def http_userlist_fetcher(chain, key, transport=None, clock=None):
    """A fetcher that asks each endpoint's compatibility service, authenticated."""
    def fetch(endpoint, fqan):
        try:
            return AdminClient(endpoint, chain, key, transport, clock).userlist(fqan)
        except TransportError:
            raise
        except VomsError as exc:
            raise EndpointUnreachable(endpoint, f"{exc.code}: {exc}") from None
    return fetch
