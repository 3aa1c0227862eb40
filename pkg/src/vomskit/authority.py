"""Attribute authority: signed attribute requests and the assertions issued for them.

The client side builds a signed :class:`AttributeRequest`; the server
(:class:`AttributeServer`) authenticates it, checks the requested FQANs against
the registry and answers with a signed :class:`AttributeAssertion` (the
"pseudo-certificate") or an error document ``{"code", "detail"}``.
"""

import itertools
import logging
import os
import threading
import time
from dataclasses import dataclass, field

from . import canonical
from .chain import DEFAULT_PROXY_LIFETIME, chain_from_document, chain_to_document, end_entity, validate_chain
from .credentials import sign
from .envelope import DEFAULT_SKEW, NONCE_BYTES, NonceCache, authenticate
from .errors import (
    AuthenticationFailed,
    FormatError,
    InvalidChain,
    MalformedDocument,
    MalformedRequest,
    RequestError,
    UnauthorizedAttributes,
    UnknownUser,
    VomsError,
    remote_error,
)
from .fqan import Fqan, as_fqan
from .keys import PublicKey
from .names import SubjectName
from .transport import HttpTransport

log = logging.getLogger(__name__)

ATTRIBUTES_PATH = "/attributes"


def _fqans(values):
    try:
        return tuple(as_fqan(v) for v in values)
    except (TypeError, ValueError) as exc:
        raise MalformedDocument(f"bad FQAN: {exc}") from None


@dataclass(frozen=True)
class AttributeAssertion:
    """The signed statement binding a holder to a list of FQANs for a time window."""

    holder: SubjectName
    holder_serial: int
    issuer: SubjectName
    issuer_key: PublicKey
    vo: str
    fqans: tuple
    not_before: int
    not_after: int
    issued_at: int
    serial: int
    signature: bytes = b""

    def signed_body(self):
        return {
            "type": "attribute-assertion",
            "holder": str(self.holder),
            "holder_serial": self.holder_serial,
            "issuer": str(self.issuer),
            "issuer_key": self.issuer_key.to_document(),
            "vo": self.vo,
            "fqans": [str(f) for f in self.fqans],
            "not_before": self.not_before,
            "not_after": self.not_after,
            "issued_at": self.issued_at,
            "serial": self.serial,
        }

    def tbs_bytes(self):
        return canonical.dumps(self.signed_body())

    def to_document(self):
        doc = self.signed_body()
        doc["signature"] = self.signature
        return doc

    def to_bytes(self):
        return canonical.dumps(self.to_document())

    def verify_signature(self, public_key=None):
        return (public_key or self.issuer_key).verify(self.tbs_bytes(), self.signature)

    def valid_at(self, now):
        return self.not_before <= now < self.not_after

    @classmethod
    def from_document(cls, doc):
        keys = {"type", "holder", "holder_serial", "issuer", "issuer_key", "vo", "fqans",
                "not_before", "not_after", "issued_at", "serial", "signature"}
        if not isinstance(doc, dict) or set(doc) != keys or doc["type"] != "attribute-assertion":
            raise MalformedDocument("not an attribute assertion")
        try:
            a = cls(
                holder=SubjectName.parse(doc["holder"]),
                holder_serial=doc["holder_serial"],
                issuer=SubjectName.parse(doc["issuer"]),
                issuer_key=PublicKey.from_document(doc["issuer_key"]),
                vo=doc["vo"],
                fqans=_fqans(doc["fqans"]),
                not_before=doc["not_before"],
                not_after=doc["not_after"],
                issued_at=doc["issued_at"],
                serial=doc["serial"],
                signature=canonical.unhex(doc["signature"]),
            )
        except (TypeError, ValueError, AttributeError) as exc:
            raise MalformedDocument(f"bad attribute assertion: {exc}") from None
        for name in ("holder_serial", "not_before", "not_after", "issued_at", "serial"):
            value = getattr(a, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 0:
                raise MalformedDocument(f"{name} must be an unsigned integer")
        if not a.fqans:
            raise MalformedDocument("assertion carries no FQANs")
        return a

    @classmethod
    def from_bytes(cls, data):
        return cls.from_document(canonical.loads(data))


@dataclass(frozen=True)
class AttributeRequest:
    chain: tuple
    vo: str
    requested_fqans: tuple  # None means "everything I hold"
    lifetime_seconds: int
    nonce: bytes
    timestamp: int
    signature: bytes = b""

    def signed_body(self):
        doc = {
            "type": "attribute-request",
            "chain": chain_to_document(self.chain),
            "vo": self.vo,
            "lifetime": self.lifetime_seconds,
            "nonce": self.nonce,
            "timestamp": self.timestamp,
        }
        if self.requested_fqans is not None:
            doc["fqans"] = [str(f) for f in self.requested_fqans]
        return doc

    def tbs_bytes(self):
        return canonical.dumps(self.signed_body())

    def to_bytes(self):
        doc = self.signed_body()
        doc["signature"] = self.signature
        return canonical.dumps(doc)

    @classmethod
    def from_bytes(cls, data):
        try:
            doc = canonical.loads(data)
            keys = set(doc)
            if doc.get("type") != "attribute-request" or not (
                    {"type", "chain", "vo", "lifetime", "nonce", "timestamp", "signature"}
                    <= keys <= {"type", "chain", "vo", "lifetime", "nonce", "timestamp",
                                "signature", "fqans"}):
                raise MalformedDocument("not an attribute request")
            req = cls(
                chain=tuple(chain_from_document(doc["chain"])),
                vo=doc["vo"],
                requested_fqans=_fqans(doc["fqans"]) if "fqans" in doc else None,
                lifetime_seconds=doc["lifetime"],
                nonce=canonical.unhex(doc["nonce"]),
                timestamp=doc["timestamp"],
                signature=canonical.unhex(doc["signature"]),
            )
        except (MalformedDocument, TypeError, ValueError, AttributeError) as exc:
            raise MalformedRequest(f"unreadable attribute request: {exc}") from None
        if not isinstance(req.timestamp, int) or not isinstance(req.lifetime_seconds, int) \
                or isinstance(req.lifetime_seconds, bool) or req.lifetime_seconds <= 0:
            raise MalformedRequest("timestamp and lifetime must be positive integers")
        return req


def build_request(chain, key, vo, requested_fqans=None, lifetime=DEFAULT_PROXY_LIFETIME,
                  now=None, trust_anchors=None):
    """Sign an attribute request with the chain's leaf key.

    ``requested_fqans=None`` asks for every attribute the holder has; a list
    asks for exactly that subset.
    """
    now = int(time.time()) if now is None else now
    chain = tuple(chain)
    report = validate_chain(chain, trust_anchors if trust_anchors is not None else chain[-1:],
                            (), now)
    if not report:
        raise InvalidChain(f"own credential chain is invalid: {report.rule}: {report.detail}",
                           report)
    fqans = None if requested_fqans is None else tuple(as_fqan(f) for f in requested_fqans)
    req = AttributeRequest(chain, vo, fqans, int(lifetime), os.urandom(NONCE_BYTES), now)
    return AttributeRequest(req.chain, vo, fqans, req.lifetime_seconds, req.nonce, now,
                            key.sign(req.tbs_bytes()))


@dataclass
class ServerPolicy:
    vo: str
    max_assertion_lifetime: int = DEFAULT_PROXY_LIFETIME
    clock_skew: int = DEFAULT_SKEW
    trust_anchors: list = field(default_factory=list)
    revocation_lists: list = field(default_factory=list)

    def __post_init__(self):
        if self.max_assertion_lifetime <= 0:
            raise ValueError("max_assertion_lifetime must be positive")


class AttributeServer:
    """Issues attribute assertions for one VO registry."""

    def __init__(self, registry, credential, key, policy, clock=None):
        if policy.vo != registry.vo:
            raise ValueError("policy and registry disagree on the VO name")
        self.registry = registry
        self.credential = credential
        self.key = key
        self.policy = policy
        self.clock = clock or time.time
        self.nonces = NonceCache(policy.clock_skew)
        self._serials = itertools.count(1)
        self._serial_lock = threading.Lock()

    def handle_request(self, req, now=None):
        now = int(self.clock()) if now is None else now
        policy = self.policy
        holder = authenticate(
            req.chain, req.tbs_bytes(), req.signature, req.timestamp, req.nonce,
            trust_anchors=policy.trust_anchors, revocation_lists=policy.revocation_lists,
            skew=policy.clock_skew, nonces=self.nonces, now=now)
        if req.vo != policy.vo:
            raise AuthenticationFailed(f"this server issues for VO {policy.vo}, not {req.vo}")
        entitled = self.registry.effective_attributes(holder.subject, now)
        if not entitled:
            raise UnknownUser(f"{holder.subject} holds no attributes in {policy.vo}")
        if req.requested_fqans is not None:
            held = set(entitled)
            offenders = [str(f) for f in req.requested_fqans if f not in held]
            if offenders:
                raise UnauthorizedAttributes(offenders)
            chosen = set(req.requested_fqans)
        else:
            chosen = set(entitled)
        chosen |= set(self.registry.forced_attributes(holder.subject, now))
        lifetime = min(req.lifetime_seconds, policy.max_assertion_lifetime)
        with self._serial_lock:
            serial = next(self._serials)
        assertion = AttributeAssertion(
            holder=holder.subject,
            holder_serial=holder.serial,
            issuer=self.credential.subject,
            issuer_key=self.credential.public_key,
            vo=policy.vo,
            fqans=tuple(sorted(chosen, key=str)),
            not_before=now,
            not_after=now + lifetime,
            issued_at=now,
            serial=serial,
        )
        log.info("issued assertion %d to %s: %s", serial, holder.subject,
                 ", ".join(map(str, assertion.fqans)))
        return sign(assertion, self.key)

    def __call__(self, method, path, query, body):
        if path != ATTRIBUTES_PATH or method != "POST":
            return 404, canonical.dumps({"code": "NOT_FOUND", "detail": path})
        try:
            assertion = self.handle_request(AttributeRequest.from_bytes(body))
        except RequestError as exc:
            status = 401 if isinstance(exc, AuthenticationFailed) else 403
            return status, canonical.dumps(exc.to_document())
        except FormatError as exc:
            return 400, canonical.dumps({"code": exc.code, "detail": str(exc)})
        return 200, assertion.to_bytes()


def handle_request(req, server, now=None):
    """Functional spelling of :meth:`AttributeServer.handle_request`."""
    return server.handle_request(req, now)


def verify_assertion(assertion, trusted_servers, holder_chain, now=None):
    """True iff the assertion is signed by the trusted key for its VO, is inside
    its window, and names the end-entity credential of ``holder_chain``."""
    now = int(time.time()) if now is None else now
    key = trusted_servers.get(assertion.vo)
    if key is None or not assertion.verify_signature(key):
        return False
    if not assertion.valid_at(now):
        return False
    try:
        ee = end_entity(holder_chain)
    except InvalidChain:
        return False
    return ee.subject == assertion.holder and ee.serial == assertion.holder_serial


def parse_response(body):
    """Decode a server reply into an assertion, raising the remote error if any."""
    doc = canonical.loads(body)
    if isinstance(doc, dict) and set(doc) == {"code", "detail"}:
        raise remote_error(doc["code"], doc["detail"])
    return AttributeAssertion.from_document(doc)


def fetch_attributes(servers, chain, key, lifetime=DEFAULT_PROXY_LIFETIME, now=None,
                     transport=None, trusted_servers=None):
    """Collect one verified assertion per ``(endpoint, vo, subset)``, in order.

    Stops at the first failure, re-raising it with ``endpoint`` set.
    """
    if not servers:
        raise ValueError("no attribute servers given")
    now = int(time.time()) if now is None else now
    transport = transport or HttpTransport()
    out = []
    for endpoint, vo, subset in servers:
        try:
            req = build_request(chain, key, vo, subset, lifetime, now)
            assertion = parse_response(transport.post(endpoint, ATTRIBUTES_PATH, req.to_bytes()))
            key_for_vo = (trusted_servers or {}).get(vo, assertion.issuer_key)
            # tolerate a server clock running slightly ahead of ours
            at = now if assertion.not_before - now > DEFAULT_SKEW else max(now, assertion.not_before)
            if assertion.vo != vo or not verify_assertion(assertion, {vo: key_for_vo}, chain, at):
                raise AuthenticationFailed("server returned an assertion that does not verify")
        except VomsError as exc:
            exc.endpoint = endpoint
            exc.args = (f"{endpoint}: {exc}",)
            raise
        out.append(assertion)
    return out
