"""Append-only, hash-chained audit log.

Each record hashes ``prev_hash || canonical(header)`` where the header holds
the sequence number, timestamp, actor, action and payload.  The first record
links to 32 zero bytes.
"""

import hashlib
from dataclasses import dataclass

from .. import canonical
from ..errors import MalformedDocument

GENESIS = bytes(32)
DIGEST = "sha256"


def _digest(data):
    return hashlib.sha256(data).digest()


@dataclass(frozen=True)
class AuditRecord:
    seq: int
    timestamp: int
    actor: str
    action: str
    payload: dict
    prev_hash: bytes
    hash: bytes

    def header(self):
        return {
            "seq": self.seq,
            "timestamp": self.timestamp,
            "actor": self.actor,
            "action": self.action,
            "payload": self.payload,
        }

    def expected_hash(self):
        return _digest(self.prev_hash + canonical.dumps(self.header()))

    def to_document(self):
        doc = self.header()
        doc["prev_hash"] = self.prev_hash
        doc["hash"] = self.hash
        return doc

    @classmethod
    def from_document(cls, doc):
        fields = {"seq", "timestamp", "actor", "action", "payload", "prev_hash", "hash"}
        if not isinstance(doc, dict) or set(doc) != fields:
            raise MalformedDocument("bad audit record")
        try:
            return cls(doc["seq"], doc["timestamp"], doc["actor"], doc["action"],
                       doc["payload"], canonical.unhex(doc["prev_hash"], "prev_hash"),
                       canonical.unhex(doc["hash"], "hash"))
        except (TypeError, ValueError):
            raise MalformedDocument("bad audit record digest") from None


class AuditLog:
    def __init__(self, records=()):
        self.records = list(records)

    @property
    def head(self):
        return self.records[-1].hash if self.records else GENESIS

    def append(self, actor, action, payload, timestamp):
        seq = len(self.records)
        header = {"seq": seq, "timestamp": timestamp, "actor": actor,
                  "action": action, "payload": payload}
        # fails early on payloads that cannot be serialized
        digest = _digest(self.head + canonical.dumps(header))
        record = AuditRecord(seq, timestamp, actor, action, payload, self.head, digest)
        self.records.append(record)
        return record

    def since(self, seq):
        return [r for r in self.records if r.seq >= seq]

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


def verify_audit_chain(log):
    """Recompute the chain from genesis; True iff every link matches."""
    prev = GENESIS
    for expected_seq, record in enumerate(log):
        if record.seq != expected_seq or record.prev_hash != prev:
            return False
        if record.expected_hash() != record.hash:
            return False
        prev = record.hash
    return True


def audit_header(vo):
    return {"type": "audit-log", "vo": vo, "digest": DIGEST}


def dump_audit(vo, records):
    """Serialize a whole log: a header line, then one record per line."""
    lines = [canonical.dumps(audit_header(vo))]
    lines.extend(canonical.dumps(r.to_document()) for r in records)
    return b"\n".join(lines) + b"\n"


def parse_audit(data):
    """Return ``(vo, records)`` from audit-file bytes."""
    if not data.endswith(b"\n"):
        raise MalformedDocument("audit log must end with a newline")
    lines = data[:-1].split(b"\n")
    header = canonical.loads(lines[0])
    if not isinstance(header, dict) or set(header) != {"type", "vo", "digest"}:
        raise MalformedDocument("bad audit header")
    if header["type"] != "audit-log" or header["digest"] != DIGEST:
        raise MalformedDocument(f"unsupported audit log header {header}")
    records = [AuditRecord.from_document(canonical.loads(line)) for line in lines[1:]]
    return header["vo"], records


def verify_audit_bytes(data, vo):
    """Parse and verify a serialized log that must belong to ``vo``."""
    try:
        log_vo, records = parse_audit(data)
    except MalformedDocument:
        return False
    return log_vo == vo and verify_audit_chain(records)
