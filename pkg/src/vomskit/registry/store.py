"""On-disk persistence for one VO: a snapshot file plus an append-only audit file.

Layout inside the store directory::

    <vo>.audit      header line, then one canonical audit record per line
    <vo>.registry   canonical snapshot of the registry state

A mutation appends (and fsyncs) its audit record first, then rewrites the
snapshot through a temporary file and an atomic rename.  On load the audit
file is authoritative: if the snapshot lags behind it the state is rebuilt by
replay.

Several processes may open the same store (a running server and the admin
command line, say).  Writers serialize on an exclusive ``flock`` of
``<vo>.lock`` and every instance tails the audit file before it reads or
writes, so a stale in-memory view never forks the chain.
"""

import fcntl
import os
import threading
from contextlib import contextmanager

from .. import canonical
from ..errors import MalformedDocument
from .audit import AuditRecord, audit_header, parse_audit, verify_audit_chain
from .registry import Registry


class RegistryStore:
    def __init__(self, directory, vo):
        self.directory = os.fspath(directory)
        self.vo = vo
        self.audit_path = os.path.join(self.directory, f"{vo}.audit")
        self.snapshot_path = os.path.join(self.directory, f"{vo}.registry")
        self.lock_path = os.path.join(self.directory, f"{vo}.lock")
        self._offset = 0  # bytes of the audit file already applied in memory
        self._lock_depth = 0
        self._lock_fh = None
        self._thread_lock = threading.RLock()

    def exists(self):
        return os.path.exists(self.audit_path)

    def _init_files(self, registry):
        os.makedirs(self.directory, exist_ok=True)
        with open(self.audit_path, "wb") as fh:
            fh.write(canonical.dumps(audit_header(self.vo)) + b"\n")
            fh.flush()
            os.fsync(fh.fileno())
            self._offset = fh.tell()
        self.write_snapshot(registry)

    @contextmanager
    def locked(self):
        """Exclusive writer lock, shared with other processes; reentrant per instance."""
        with self._thread_lock:
            if self._lock_depth == 0:
                self._lock_fh = open(self.lock_path, "a")
                fcntl.flock(self._lock_fh, fcntl.LOCK_EX)
            self._lock_depth += 1
            try:
                yield
            finally:
                self._lock_depth -= 1
                if self._lock_depth == 0:
                    fcntl.flock(self._lock_fh, fcntl.LOCK_UN)
                    self._lock_fh.close()
                    self._lock_fh = None

    def catch_up(self, registry):
        """Apply records appended to the audit file since this instance last looked."""
        if os.path.getsize(self.audit_path) == self._offset:
            return
        with open(self.audit_path, "rb") as fh:
            fh.seek(self._offset)
            data = fh.read()
        complete = data[:data.rfind(b"\n") + 1]
        for line in complete.split(b"\n")[:-1]:
            record = AuditRecord.from_document(canonical.loads(line))
            if record.seq != len(registry.audit) or record.prev_hash != registry.audit.head \
                    or record.expected_hash() != record.hash:
                raise MalformedDocument(f"audit log of {self.vo} changed under us at seq {record.seq}")
            registry._apply(record.action, record.payload)
            registry.audit.records.append(record)
        self._offset += len(complete)

    def append(self, record):
        with open(self.audit_path, "ab") as fh:
            fh.write(canonical.dumps(record.to_document()) + b"\n")
            fh.flush()
            os.fsync(fh.fileno())
            self._offset = fh.tell()

    def write_snapshot(self, registry):
        canonical.dump_file(self.snapshot_path, registry.snapshot_document())

    def read_audit(self):
        with open(self.audit_path, "rb") as fh:
            data = fh.read()
        vo, records = parse_audit(data)
        self._offset = len(data)
        if vo != self.vo:
            raise MalformedDocument(f"audit log belongs to VO {vo!r}, not {self.vo!r}")
        return records

    def load(self, clock=None):
        with self.locked():
            return self._load(clock)

    def _load(self, clock):
        records = self.read_audit()
        if not verify_audit_chain(records):
            raise MalformedDocument(f"audit chain of {self.vo} does not verify")
        snap = canonical.load_file(self.snapshot_path)
        if snap.get("vo") != self.vo:
            raise MalformedDocument("snapshot belongs to another VO")
        head = records[-1].hash.hex() if records else bytes(32).hex()
        if snap["audit_len"] == len(records) and snap["audit_head"] == head:
            reg = Registry(self.vo, snap["owner"], clock=clock)
            reg._restore(snap, records)
        else:
            reg = Registry.replay(self.vo, snap["owner"], records, clock=clock)
        reg._store = self
        if snap["audit_len"] != len(records):
            self.write_snapshot(reg)
        return reg


def open_registry(directory, vo, owner=None, clock=None):
    """Load the VO registry stored in ``directory``, creating it if absent."""
    store = RegistryStore(directory, vo)
    if store.exists():
        return store.load(clock=clock)
    if owner is None:
        raise FileNotFoundError(f"no registry for VO {vo} in {directory}")
    reg = Registry(vo, owner, clock=clock, store=store)
    store._init_files(reg)
    return reg
