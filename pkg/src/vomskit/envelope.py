"""Message-level authentication shared by the attribute and admin protocols.

A request carries the sender's full credential chain and is signed by the
chain's leaf key.  The receiver validates the chain, the signature, the
timestamp against its clock-skew allowance, and rejects nonces it has already
seen inside that allowance.
"""

import os
import threading
import time
from dataclasses import dataclass

from . import canonical
from .chain import chain_from_document, chain_to_document, end_entity, validate_chain
from .errors import AuthenticationFailed, MalformedDocument, MalformedRequest, ReplayDetected

NONCE_BYTES = 16
DEFAULT_SKEW = 300


class NonceCache:
    """Nonces seen within the skew window; the only shared mutable server state."""

    def __init__(self, skew=DEFAULT_SKEW):
        self.skew = skew
        self._seen = {}
        self._lock = threading.Lock()

    def check_and_add(self, nonce, timestamp, now):
        """Record ``nonce``; False if it was already seen and not yet expired."""
        with self._lock:
            for n in [n for n, exp in self._seen.items() if exp <= now]:
                del self._seen[n]
            if nonce in self._seen:
                return False
            # a request stays acceptable until timestamp + skew inclusive
            self._seen[nonce] = timestamp + self.skew + 1
            return True

    def __len__(self):
        return len(self._seen)


def authenticate(chain, tbs, signature, timestamp, nonce, *, trust_anchors,
                 revocation_lists, skew, nonces, now):
    """Run the shared checks; returns the chain's end-entity credential."""
    if not chain:
        raise AuthenticationFailed("empty credential chain")
    report = validate_chain(chain, trust_anchors, revocation_lists, now)
    if not report:
        raise AuthenticationFailed(f"credential chain rejected: {report.rule}: {report.detail}")
    if not chain[0].public_key.verify(tbs, signature):
        raise AuthenticationFailed("request signature does not verify")
    if abs(timestamp - now) > skew:
        raise AuthenticationFailed(f"request timestamp {timestamp} outside clock skew")
    if not nonces.check_and_add(nonce, timestamp, now):
        raise ReplayDetected("request nonce already seen")
    return end_entity(chain)


@dataclass(frozen=True)
class SignedEnvelope:
    """A signed admin-protocol request: ``path`` and ``args`` under the sender's key."""

    chain: tuple
    path: str
    args: dict
    nonce: bytes
    timestamp: int
    signature: bytes = b""

    def signed_body(self):
        return {
            "type": "signed-request",
            "chain": chain_to_document(self.chain),
            "path": self.path,
            "args": self.args,
            "nonce": self.nonce,
            "timestamp": self.timestamp,
        }

    def to_bytes(self):
        doc = self.signed_body()
        doc["signature"] = self.signature
        return canonical.dumps(doc)

    @classmethod
    def seal(cls, chain, key, path, args, now=None):
        now = int(time.time()) if now is None else now
        env = cls(tuple(chain), path, dict(args), os.urandom(NONCE_BYTES), now)
        sig = key.sign(canonical.dumps(env.signed_body()))
        return cls(env.chain, path, env.args, env.nonce, now, sig)

    @classmethod
    def from_bytes(cls, data):
        try:
            doc = canonical.loads(data)
            if set(doc) != {"type", "chain", "path", "args", "nonce", "timestamp", "signature"} \
                    or doc["type"] != "signed-request" or not isinstance(doc["args"], dict) \
                    or not isinstance(doc["timestamp"], int) or not isinstance(doc["path"], str):
                raise MalformedDocument("not a signed request")
            return cls(tuple(chain_from_document(doc["chain"])), doc["path"], doc["args"],
                       canonical.unhex(doc["nonce"]), doc["timestamp"],
                       canonical.unhex(doc["signature"]))
        except (MalformedDocument, TypeError, ValueError, AttributeError) as exc:
            raise MalformedRequest(f"unreadable request: {exc}") from None

    def open(self, *, trust_anchors, revocation_lists, skew, nonces, now):
        return authenticate(self.chain, canonical.dumps(self.signed_body()), self.signature,
                            self.timestamp, self.nonce, trust_anchors=trust_anchors,
                            revocation_lists=revocation_lists, skew=skew, nonces=nonces, now=now)
