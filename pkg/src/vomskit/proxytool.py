"""Proxy creation with embedded attribute assertions, and proxy inspection."""

import os
import time
from dataclasses import dataclass

from . import canonical
from .authority import AttributeAssertion, fetch_attributes
from .chain import DEFAULT_PROXY_LIFETIME, VOMS_EXTENSION, chain_from_document, chain_to_document, create_proxy
from .credentials import Extension, ProxyCredential
from .errors import MalformedDocument, MalformedPayload
from .keys import PrivateKey


@dataclass(frozen=True)
class VomsExtensionPayload:
    assertions: tuple
    user_supplied: tuple = None  # (label, opaque bytes)

    def to_bytes(self):
        doc = {"type": "voms-payload", "assertions": [a.to_document() for a in self.assertions]}
        if self.user_supplied is not None:
            label, data = self.user_supplied
            doc["user_supplied"] = {"label": label, "data": bytes(data)}
        return canonical.dumps(doc)

    @classmethod
    def from_bytes(cls, data):
        try:
            doc = canonical.loads(data)
            if not isinstance(doc, dict) or doc.get("type") != "voms-payload" \
                    or not set(doc) <= {"type", "assertions", "user_supplied"} \
                    or not isinstance(doc.get("assertions"), list):
                raise MalformedDocument("not a VOMS payload")
            extra = doc.get("user_supplied")
            if extra is not None:
                if not isinstance(extra, dict) or set(extra) != {"label", "data"}:
                    raise MalformedDocument("bad user_supplied block")
                extra = (extra["label"], canonical.unhex(extra["data"]))
            return cls(tuple(AttributeAssertion.from_document(a) for a in doc["assertions"]),
                       extra)
        except (MalformedDocument, TypeError, ValueError) as exc:
            raise MalformedPayload(f"undecodable VOMS extension: {exc}") from None


def extract_assertions(proxy):
    """Assertions embedded in a proxy, or ``[]`` when it carries none."""
    payload = extract_payload(proxy)
    return list(payload.assertions) if payload else []


def extract_payload(proxy):
    if not isinstance(proxy, ProxyCredential):
        return None
    ext = proxy.extension(VOMS_EXTENSION)
    if ext is None:
        return None
    return VomsExtensionPayload.from_bytes(ext.payload)


@dataclass(frozen=True)
class ProxyBundle:
    """A proxy file: the full leaf-first chain plus the proxy's private key."""

    chain: tuple
    key: PrivateKey

    @property
    def proxy(self):
        return self.chain[0]

    def to_bytes(self):
        return canonical.dumps({"type": "proxy-bundle", "chain": chain_to_document(self.chain),
                                "key": self.key.to_document()})

    @classmethod
    def from_bytes(cls, data):
        doc = canonical.loads(data)
        if not isinstance(doc, dict) or set(doc) != {"type", "chain", "key"} \
                or doc["type"] != "proxy-bundle":
            raise MalformedDocument("not a proxy bundle")
        chain = tuple(chain_from_document(doc["chain"]))
        if not chain:
            raise MalformedDocument("proxy bundle has an empty chain")
        return cls(chain, PrivateKey.from_document(doc["key"]))

    def save(self, path):
        path = os.fspath(path)
        tmp = path + ".tmp"
        fd = os.open(tmp, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
        with os.fdopen(fd, "wb") as fh:
            fh.write(self.to_bytes())
        os.replace(tmp, path)

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def proxy_init(chain, key, servers, lifetime=DEFAULT_PROXY_LIFETIME, extra=None, now=None,
               transport=None, trusted_servers=None):
    """Fetch assertions from every server, then delegate a proxy carrying them.

    ``servers`` is a list of ``(endpoint, vo, subset_or_None)``.  ``extra`` is
    an optional ``(label, bytes)`` pair copied verbatim into the payload.
    Nothing is produced unless every server answers successfully.
    """
    now = int(time.time()) if now is None else now
    chain = tuple(chain)
    extensions = ()
    if servers:
        assertions = fetch_attributes(servers, chain, key, lifetime, now, transport,
                                      trusted_servers)
        payload = VomsExtensionPayload(tuple(assertions), extra)
        extensions = (Extension(VOMS_EXTENSION, False, payload.to_bytes()),)
    elif extra is not None:
        extensions = (Extension(VOMS_EXTENSION, False,
                                VomsExtensionPayload((), extra).to_bytes()),)
    proxy, proxy_key = create_proxy(chain, key, lifetime, extensions, now)
    return ProxyBundle((proxy,) + chain, proxy_key)


def _status(start, end, now):
    if now < start:
        return "not yet valid"
    if now >= end:
        return "expired"
    return "valid"


def proxy_info(bundle, now=None, trusted_servers=None):
    """Describe a proxy bundle as a document (see :func:`format_info` for text)."""
    now = int(time.time()) if now is None else now
    proxy = bundle.proxy
    report = {
        "subject": str(proxy.subject),
        "issuer": str(proxy.issuer),
        "not_after": proxy.not_after,
        "remaining": max(0, proxy.not_after - now),
        "status": _status(proxy.not_before, proxy.not_after, now),
        "assertions": [],
    }
    payload = extract_payload(proxy)
    for a in (payload.assertions if payload else ()):
        key = (trusted_servers or {}).get(a.vo)
        if trusted_servers is not None and key is None:
            sig = "untrusted"
        else:
            sig = "ok" if a.verify_signature(key) else "bad"
        report["assertions"].append({
            "vo": a.vo,
            "issuer": str(a.issuer),
            "fqans": [str(f) for f in a.fqans],
            "not_before": a.not_before,
            "not_after": a.not_after,
            "status": _status(a.not_before, a.not_after, now),
            "signature": sig,
        })
    if payload and payload.user_supplied is not None:
        report["user_supplied"] = payload.user_supplied[0]
    return report


def format_info(report):
    lines = [
        f"subject   : {report['subject']}",
        f"issuer    : {report['issuer']}",
        f"status    : {report['status']}",
        f"time left : {report['remaining'] // 3600}:{report['remaining'] % 3600 // 60:02d}",
    ]
    if not report["assertions"]:
        lines.append("no VO attributes")
    for a in report["assertions"]:
        lines.append(f"=== VO {a['vo']} extension information ===")
        lines.append(f"issuer    : {a['issuer']}")
        for f in a["fqans"]:
            lines.append(f"attribute : {f}")
        lines.append(f"validity  : [{a['not_before']}, {a['not_after']}) {a['status']}")
        lines.append(f"signature : {a['signature']}")
    if "user_supplied" in report:
        lines.append(f"user-supplied data: {report['user_supplied']}")
    return "\n".join(lines)
