"""Identity credentials, proxy credentials and revocation lists.

All three are immutable documents signed over their canonical encoding minus
the ``signature`` field.  ``from_bytes`` is strict: a document is accepted only
if it is byte-for-byte canonical and has exactly the expected fields.
"""

import threading
from dataclasses import dataclass, field, replace

from . import canonical
from .errors import MalformedDocument, NotAnAuthority, WindowOutOfRange
from .keys import PrivateKey, PublicKey
from .names import SubjectName

PROXY_COMPONENT = ("CN", "proxy")


def _require(doc, kind, fields):
    if not isinstance(doc, dict) or doc.get("type") != kind:
        raise MalformedDocument(f"expected a {kind} document")
    if set(doc) != set(fields) | {"type"}:
        raise MalformedDocument(f"{kind} document has fields {sorted(doc)}")


def _subject(text):
    try:
        return SubjectName.parse(text)
    except ValueError as exc:
        raise MalformedDocument(str(exc)) from None


def _uint(value, name):
    if not isinstance(value, int) or isinstance(value, bool) or value < 0:
        raise MalformedDocument(f"{name} must be an unsigned integer")
    return value


def _hex(value, name):
    return canonical.unhex(value, name)


class _Signed:
    """Mixin for signed documents."""

    def signed_body(self):
        raise NotImplementedError

    def to_document(self):
        doc = self.signed_body()
        doc["signature"] = self.signature
        return doc

    def to_bytes(self):
        return canonical.dumps(self.to_document())

    def tbs_bytes(self):
        return canonical.dumps(self.signed_body())

    def verify(self, public_key):
        return public_key.verify(self.tbs_bytes(), self.signature)

    @classmethod
    def from_bytes(cls, data):
        return cls.from_document(canonical.loads(data))


@dataclass(frozen=True)
class IdentityCredential(_Signed):
    subject: SubjectName
    issuer: SubjectName
    public_key: PublicKey
    serial: int
    not_before: int
    not_after: int
    is_authority: bool
    signature: bytes = b""

    kind = "identity"

    @property
    def self_signed(self):
        return self.subject == self.issuer

    def valid_at(self, now):
        return self.not_before <= now < self.not_after

    def signed_body(self):
        return {
            "type": self.kind,
            "subject": str(self.subject),
            "issuer": str(self.issuer),
            "public_key": self.public_key.to_document(),
            "serial": self.serial,
            "not_before": self.not_before,
            "not_after": self.not_after,
            "is_authority": self.is_authority,
        }

    @classmethod
    def from_document(cls, doc):
        _require(doc, cls.kind, ("subject", "issuer", "public_key", "serial",
                                 "not_before", "not_after", "is_authority", "signature"))
        if not isinstance(doc["is_authority"], bool):
            raise MalformedDocument("is_authority must be a boolean")
        return cls(
            subject=_subject(doc["subject"]),
            issuer=_subject(doc["issuer"]),
            public_key=PublicKey.from_document(doc["public_key"]),
            serial=_uint(doc["serial"], "serial"),
            not_before=_uint(doc["not_before"], "not_before"),
            not_after=_uint(doc["not_after"], "not_after"),
            is_authority=doc["is_authority"],
            signature=_hex(doc["signature"], "signature"),
        )


@dataclass(frozen=True)
class Extension:
    label: str
    critical: bool
    payload: bytes

    def to_document(self):
        return {"label": self.label, "critical": self.critical, "payload": self.payload}

    @classmethod
    def from_document(cls, doc):
        if not isinstance(doc, dict) or set(doc) != {"label", "critical", "payload"}:
            raise MalformedDocument("bad extension")
        if not isinstance(doc["label"], str) or not isinstance(doc["critical"], bool):
            raise MalformedDocument("bad extension")
        return cls(doc["label"], doc["critical"], _hex(doc["payload"], "payload"))


@dataclass(frozen=True)
class ProxyCredential(_Signed):
    subject: SubjectName
    issuer: SubjectName
    public_key: PublicKey
    serial: int
    not_before: int
    not_after: int
    extensions: tuple = ()
    signature: bytes = b""

    kind = "proxy"
    is_authority = False

    def valid_at(self, now):
        return self.not_before <= now < self.not_after

    def extension(self, label):
        for ext in self.extensions:
            if ext.label == label:
                return ext
        return None

    def signed_body(self):
        return {
            "type": self.kind,
            "subject": str(self.subject),
            "issuer": str(self.issuer),
            "public_key": self.public_key.to_document(),
            "serial": self.serial,
            "not_before": self.not_before,
            "not_after": self.not_after,
            "extensions": [e.to_document() for e in self.extensions],
        }

    @classmethod
    def from_document(cls, doc):
        _require(doc, cls.kind, ("subject", "issuer", "public_key", "serial",
                                 "not_before", "not_after", "extensions", "signature"))
        if not isinstance(doc["extensions"], list):
            raise MalformedDocument("extensions must be a list")
        return cls(
            subject=_subject(doc["subject"]),
            issuer=_subject(doc["issuer"]),
            public_key=PublicKey.from_document(doc["public_key"]),
            serial=_uint(doc["serial"], "serial"),
            not_before=_uint(doc["not_before"], "not_before"),
            not_after=_uint(doc["not_after"], "not_after"),
            extensions=tuple(Extension.from_document(e) for e in doc["extensions"]),
            signature=_hex(doc["signature"], "signature"),
        )


@dataclass(frozen=True)
class RevocationList(_Signed):
    issuer: SubjectName
    revoked_serials: frozenset
    issued_at: int
    signature: bytes = b""

    kind = "crl"

    def signed_body(self):
        return {
            "type": self.kind,
            "issuer": str(self.issuer),
            "revoked": sorted(self.revoked_serials),
            "issued_at": self.issued_at,
        }

    @classmethod
    def from_document(cls, doc):
        _require(doc, cls.kind, ("issuer", "revoked", "issued_at", "signature"))
        if not isinstance(doc["revoked"], list):
            raise MalformedDocument("revoked must be a list")
        return cls(
            issuer=_subject(doc["issuer"]),
            revoked_serials=frozenset(_uint(s, "serial") for s in doc["revoked"]),
            issued_at=_uint(doc["issued_at"], "issued_at"),
            signature=_hex(doc["signature"], "signature"),
        )


CREDENTIAL_TYPES = {c.kind: c for c in (IdentityCredential, ProxyCredential)}


def credential_from_document(doc):
    if not isinstance(doc, dict) or doc.get("type") not in CREDENTIAL_TYPES:
        raise MalformedDocument("not a credential document")
    return CREDENTIAL_TYPES[doc["type"]].from_document(doc)


def sign(document, key):
    """Return ``document`` (a frozen dataclass) with a fresh signature by ``key``."""
    unsigned = replace(document, signature=b"")
    return replace(unsigned, signature=key.sign(unsigned.tbs_bytes()))


@dataclass
class CertificateAuthority:
    """An issuing credential together with its key and serial counter."""

    credential: IdentityCredential
    key: PrivateKey
    next_serial: int = 1
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    @classmethod
    def create_root(cls, subject, not_before, not_after, key=None):
        key = key or PrivateKey.generate()
        subject = subject if isinstance(subject, SubjectName) else SubjectName.parse(subject)
        if not not_before < not_after:
            raise WindowOutOfRange("not_before must precede not_after")
        cred = IdentityCredential(subject, subject, key.public_key(), 0,
                                  not_before, not_after, True)
        return cls(sign(cred, key), key)

    def _take_serial(self):
        with self._lock:
            serial = self.next_serial
            self.next_serial += 1
            return serial

    def issue(self, subject, subject_key, not_before, not_after, is_authority=False):
        return issue_identity(self, subject, subject_key, (not_before, not_after), is_authority)

    def revocation_list(self, serials, issued_at):
        crl = RevocationList(self.credential.subject, frozenset(serials), issued_at)
        return sign(crl, self.key)

    def to_document(self):
        return {
            "type": "authority",
            "credential": self.credential.to_document(),
            "key": self.key.to_document(),
            "next_serial": self.next_serial,
        }

    @classmethod
    def from_document(cls, doc):
        _require(doc, "authority", ("credential", "key", "next_serial"))
        return cls(
            IdentityCredential.from_document(doc["credential"]),
            PrivateKey.from_document(doc["key"]),
            _uint(doc["next_serial"], "next_serial"),
        )

    def save(self, path):
        canonical.dump_file(path, self.to_document(), mode=0o600)

    @classmethod
    def load(cls, path):
        return cls.from_document(canonical.load_file(path))


def issue_identity(issuer, subject, subject_key, window, is_authority=False):
    """Issue an identity credential signed by ``issuer`` (a CertificateAuthority)."""
    ca = issuer.credential
    if not ca.is_authority:
        raise NotAnAuthority(f"{ca.subject} is not an authority")
    not_before, not_after = window
    if not not_before < not_after:
        raise WindowOutOfRange("not_before must precede not_after")
    if not_before < ca.not_before or not_after > ca.not_after:
        raise WindowOutOfRange(
            f"window [{not_before}, {not_after}) exceeds issuer window "
            f"[{ca.not_before}, {ca.not_after})")
    subject = subject if isinstance(subject, SubjectName) else SubjectName.parse(subject)
    cred = IdentityCredential(subject, ca.subject, subject_key, issuer._take_serial(),
                              not_before, not_after, bool(is_authority))
    return sign(cred, issuer.key)
