"""Deterministic byte encoding used for everything that gets signed or hashed.

The encoding is a strict subset of JSON: UTF-8, map keys sorted by code point,
no whitespace, base-10 integers, strings escaping only ``"`` and ``\\``, and
``bytes`` written as lowercase hex strings.  :func:`loads` only accepts input
that re-encodes to exactly the same bytes, so every accepted document has a
single byte representation.
"""

import json
import re
import os
import tempfile

from .errors import MalformedDocument, UnsupportedValue

__all__ = ["dumps", "loads", "load_file", "dump_file"]


def _encode_str(s, out):
    out.append('"')
    out.append(s.replace("\\", "\\\\").replace('"', '\\"'))
    out.append('"')


def _encode(value, out):
    # bool before int: bool is an int subclass
    if value is True:
        out.append("true")
    elif value is False:
        out.append("false")
    elif isinstance(value, int):
        out.append(str(int(value)))
    elif isinstance(value, str):
        _encode_str(value, out)
    elif isinstance(value, (bytes, bytearray)):
        out.append('"' + bytes(value).hex() + '"')
    elif isinstance(value, dict):
        out.append("{")
        first = True
        for key in sorted(value):
            if not isinstance(key, str):
                raise UnsupportedValue(f"map key must be a string, got {type(key).__name__}")
            if not first:
                out.append(",")
            first = False
            _encode_str(key, out)
            out.append(":")
            _encode(value[key], out)
        out.append("}")
    elif isinstance(value, (list, tuple)):
        out.append("[")
        for i, item in enumerate(value):
            if i:
                out.append(",")
            _encode(item, out)
        out.append("]")
    else:
        raise UnsupportedValue(f"cannot serialize {type(value).__name__}")


def dumps(value):
    """Return the canonical bytes of ``value``."""
    out = []
    _encode(value, out)
    return "".join(out).encode("utf-8")


def loads(data):
    """Parse canonical bytes, rejecting anything that is not in canonical form."""
    try:
        text = bytes(data).decode("utf-8")
        value = json.loads(text, strict=False)
    except (UnicodeDecodeError, ValueError) as exc:
        raise MalformedDocument(f"not a canonical document: {exc}") from None
    try:
        again = dumps(value)
    except UnsupportedValue as exc:
        raise MalformedDocument(str(exc)) from None
    if again != bytes(data):
        raise MalformedDocument("document is not in canonical form")
    return value


_HEX = re.compile(r"(?:[0-9a-f]{2})*\Z")


def unhex(value, name="value"):
    """Decode a byte string as written by :func:`dumps` (lowercase hex only)."""
    if not isinstance(value, str) or not _HEX.match(value):
        raise MalformedDocument(f"{name} must be lowercase hex")
    return bytes.fromhex(value)


def load_file(path):
    with open(path, "rb") as fh:
        return loads(fh.read())


def dump_file(path, value, mode=None):
    """Write ``value`` atomically (temp file + rename)."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(dumps(value))
            fh.flush()
            os.fsync(fh.fileno())
        if mode is not None:
            os.chmod(tmp, mode)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
