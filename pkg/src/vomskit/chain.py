"""Credential chains: validation (the trust manager) and proxy delegation."""

import logging
import os
import secrets
import time
import warnings
from dataclasses import dataclass

from . import canonical
from .credentials import (
    PROXY_COMPONENT,
    Extension,
    IdentityCredential,
    ProxyCredential,
    credential_from_document,
    sign,
)
from .errors import InvalidChain, MalformedDocument
from .keys import PrivateKey

log = logging.getLogger(__name__)

DEFAULT_PROXY_LIFETIME = 12 * 3600
VOMS_EXTENSION = "voms-pseudo-certs"
KNOWN_EXTENSIONS = frozenset({VOMS_EXTENSION})

# failure rules reported by validate_chain
EMPTY = "EmptyChain"
STRUCTURE = "Structure"
BROKEN_LINK = "BrokenLink"
BAD_SIGNATURE = "BadSignature"
NOT_YET_VALID = "NotYetValid"
EXPIRED = "Expired"
UNTRUSTED = "UntrustedRoot"
REVOKED = "Revoked"
NOT_AUTHORITY = "NotAnAuthority"
PROXY_NAMING = "ProxyNaming"
PROXY_WINDOW = "ProxyWindow"
CRITICAL_EXTENSION = "UnknownCriticalExtension"


class ProxyLifetimeClamped(UserWarning):
    """Requested proxy lifetime exceeded the issuer's remaining validity."""


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    rule: str = None
    index: int = None
    detail: str = ""

    def __bool__(self):
        return self.ok

    def to_document(self):
        doc = {"ok": self.ok, "detail": self.detail}
        if self.rule is not None:
            doc["rule"] = self.rule
        if self.index is not None:
            doc["index"] = self.index
        return doc


def _fail(rule, index, detail):
    return ValidationReport(False, rule, index, detail)


def end_entity(chain):
    """The first identity credential of a leaf-first chain."""
    for cred in chain:
        if isinstance(cred, IdentityCredential):
            return cred
    raise InvalidChain("chain has no identity credential")


def _check_structure(chain):
    i = 0
    while i < len(chain) and isinstance(chain[i], ProxyCredential):
        i += 1
    if i == len(chain):
        return _fail(STRUCTURE, None, "no identity credential")
    if chain[i].is_authority:
        return _fail(STRUCTURE, i, "end-entity credential is an authority")
    if i + 1 == len(chain):
        return _fail(STRUCTURE, i, "no authority above the end-entity credential")
    for j in range(i + 1, len(chain)):
        if not isinstance(chain[j], IdentityCredential):
            return _fail(STRUCTURE, j, "proxy above the end-entity credential")
    return None


def validate_chain(chain, trust_anchors, revocation_lists=(), now=None):
    """Check a leaf-first chain and report the first rule it breaks.

    The chain is accepted when every signature verifies against the next
    element's key, all windows contain ``now``, the last element is one of
    ``trust_anchors``, no identity credential is listed in a signed revocation
    list from its issuer, proxies follow the ``/CN=proxy`` naming and window
    rules, and no proxy carries an unrecognised critical extension.
    """
    now = int(time.time()) if now is None else now
    chain = list(chain)
    if not chain:
        return _fail(EMPTY, None, "empty chain")
    broken = _check_structure(chain)
    if broken is not None:
        return broken

    for i, cred in enumerate(chain):
        issuer = chain[i + 1] if i + 1 < len(chain) else cred
        if cred.issuer != issuer.subject:
            return _fail(BROKEN_LINK, i, f"issuer {cred.issuer} != {issuer.subject}")
        if not cred.verify(issuer.public_key):
            return _fail(BAD_SIGNATURE, i, f"signature of {cred.subject} does not verify")
        if now < cred.not_before:
            return _fail(NOT_YET_VALID, i, f"{cred.subject} not valid before {cred.not_before}")
        if now >= cred.not_after:
            return _fail(EXPIRED, i, f"{cred.subject} expired at {cred.not_after}")
        if isinstance(cred, IdentityCredential):
            if issuer is not cred and not issuer.is_authority:
                return _fail(NOT_AUTHORITY, i, f"{issuer.subject} is not an authority")
        else:
            if cred.subject != issuer.subject.child(*PROXY_COMPONENT):
                return _fail(PROXY_NAMING, i, f"{cred.subject} does not extend {issuer.subject}")
            if cred.not_before < issuer.not_before or cred.not_after > issuer.not_after:
                return _fail(PROXY_WINDOW, i, "proxy window exceeds its issuer's window")
            for ext in cred.extensions:
                if ext.critical and ext.label not in KNOWN_EXTENSIONS:
                    return _fail(CRITICAL_EXTENSION, i, f"unknown critical extension {ext.label!r}")

    root = chain[-1]
    if not root.self_signed or not any(root == anchor for anchor in trust_anchors):
        return _fail(UNTRUSTED, len(chain) - 1, f"{root.subject} is not a trust anchor")

    for i, cred in enumerate(chain):
        if not isinstance(cred, IdentityCredential) or i + 1 == len(chain):
            continue
        issuer = chain[i + 1]
        for crl in revocation_lists:
            if crl.issuer != issuer.subject or crl.issued_at > now:
                continue
            if not crl.verify(issuer.public_key):
                continue
            if cred.serial in crl.revoked_serials:
                return _fail(REVOKED, i, f"serial {cred.serial} revoked by {issuer.subject}")
    return ValidationReport(True)


def create_proxy(chain, key, lifetime=DEFAULT_PROXY_LIFETIME, extensions=(), now=None,
                 trust_anchors=None):
    """Delegate a fresh proxy credential from the leaf of ``chain``.

    Returns ``(proxy, private_key)``.  A lifetime running past the issuer's
    expiry is clamped and reported with a :class:`ProxyLifetimeClamped` warning.
    """
    now = int(time.time()) if now is None else now
    chain = list(chain)
    anchors = trust_anchors if trust_anchors is not None else chain[-1:]
    report = validate_chain(chain, anchors, (), now)
    if not report:
        raise InvalidChain(f"cannot delegate from invalid chain: {report.rule}: {report.detail}",
                           report)
    if lifetime <= 0:
        raise ValueError("proxy lifetime must be positive")
    issuer = chain[0]
    not_after = now + lifetime
    if not_after > issuer.not_after:
        msg = (f"requested lifetime {lifetime}s exceeds issuer validity; "
               f"clamped to {issuer.not_after - now}s")
        log.warning(msg)
        warnings.warn(msg, ProxyLifetimeClamped, stacklevel=2)
        not_after = issuer.not_after
    new_key = PrivateKey.generate()
    proxy = ProxyCredential(
        subject=issuer.subject.child(*PROXY_COMPONENT),
        issuer=issuer.subject,
        public_key=new_key.public_key(),
        serial=secrets.randbits(63),
        not_before=now,
        not_after=not_after,
        extensions=tuple(Extension(e.label, e.critical, bytes(e.payload)) for e in extensions),
    )
    return sign(proxy, key), new_key


def chain_to_document(chain):
    return [c.to_document() for c in chain]


def chain_from_document(doc):
    if not isinstance(doc, list):
        raise MalformedDocument("chain must be a list")
    return [credential_from_document(d) for d in doc]


def load_chain(path):
    """Read a chain file (or a single credential file) as a leaf-first list."""
    doc = canonical.load_file(path)
    if isinstance(doc, dict):
        return [credential_from_document(doc)]
    return chain_from_document(doc)


def save_chain(path, chain):
    canonical.dump_file(path, chain_to_document(chain))


def load_trust_anchors(directory):
    """Load every credential file in a trust-anchor directory."""
    anchors = []
    for name in sorted(os.listdir(directory)):
        if name.startswith("."):
            continue
        cred = credential_from_document(canonical.load_file(os.path.join(directory, name)))
        if isinstance(cred, IdentityCredential) and cred.self_signed:
            anchors.append(cred)
    return anchors
