"""Signature keys.

A single scheme (Ed25519) is used system-wide.  Public keys carry the scheme
identifier so documents stay self-describing.
"""

import os
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.serialization import (
    Encoding,
    NoEncryption,
    PrivateFormat,
    PublicFormat,
)

from . import canonical
from .errors import MalformedDocument

SCHEME = "ed25519"


@dataclass(frozen=True)
class PublicKey:
    scheme: str
    key: bytes

    def verify(self, message, signature):
        if self.scheme != SCHEME or len(self.key) != 32:
            return False
        try:
            Ed25519PublicKey.from_public_bytes(self.key).verify(bytes(signature), bytes(message))
        except (InvalidSignature, ValueError):
            return False
        return True

    def to_document(self):
        return {"scheme": self.scheme, "key": self.key}

    @classmethod
    def from_document(cls, doc):
        try:
            return cls(scheme=doc["scheme"], key=canonical.unhex(doc["key"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedDocument(f"bad public key: {exc}") from None


class PrivateKey:
    """An Ed25519 signing key."""

    __slots__ = ("_key",)

    def __init__(self, key=None):
        self._key = key or Ed25519PrivateKey.generate()

    @classmethod
    def generate(cls):
        return cls()

    def sign(self, message):
        return self._key.sign(bytes(message))

    def public_key(self):
        raw = self._key.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
        return PublicKey(SCHEME, raw)

    def raw_bytes(self):
        return self._key.private_bytes(Encoding.Raw, PrivateFormat.Raw, NoEncryption())

    @classmethod
    def from_raw(cls, data):
        return cls(Ed25519PrivateKey.from_private_bytes(bytes(data)))

    def to_document(self):
        return {"type": "private-key", "scheme": SCHEME, "key": self.raw_bytes()}

    @classmethod
    def from_document(cls, doc):
        if not isinstance(doc, dict) or doc.get("type") != "private-key" or doc.get("scheme") != SCHEME:
            raise MalformedDocument("not an ed25519 private key document")
        try:
            return cls.from_raw(canonical.unhex(doc["key"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedDocument(f"bad private key: {exc}") from None

    def __repr__(self):
        return f"PrivateKey({self.public_key().key.hex()[:16]}...)"


def save_private_key(path, key):
    """Write a private key readable by the owner only."""
    path = os.fspath(path)
    fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
    os.fchmod(fd, 0o600)
    with os.fdopen(fd, "wb") as fh:
        fh.write(canonical.dumps(key.to_document()))


def load_private_key(path):
    return PrivateKey.from_document(canonical.load_file(path))
