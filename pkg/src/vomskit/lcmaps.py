"""Local credential mapping: grid identity + FQANs -> uid/gid.

Pool accounts are leased through a directory ledger in the style of
gridmapdir::

    <leasedir>/<pool>/<encoded_subject>     lease record (mtime = last use)
    <leasedir>/<pool>/.accounts/<account>   claim file holding the encoded subject

An account is claimed with an exclusive create of its claim file, and the
subject's record is published by hard-linking a fully written temporary file,
so concurrent processes can never share an account or hold two leases for one
subject.
"""

import logging
import os
import tempfile
import time
from dataclasses import dataclass, field

from . import canonical
from .errors import ConfigurationError, MalformedDocument, NoMappingRule, NoSuchLease, PoolExhausted
from .fqan import FqanPattern
from .names import as_subject

log = logging.getLogger(__name__)

CLAIMS = ".accounts"
ORPHAN_GRACE = 60
_SAFE = frozenset(b"abcdefghijklmnopqrstuvwxyz0123456789")


def encode_subject(subject):
    """Lower-case the rendered subject and percent-encode everything but ``[a-z0-9]``."""
    raw = str(subject)
    lowered = "".join(c.lower() if "A" <= c <= "Z" else c for c in raw).encode("utf-8")
    return "".join(chr(b) if b in _SAFE else f"%{b:02x}" for b in lowered)


@dataclass(frozen=True)
class LocalCredential:
    account: str
    uid: int
    primary_gid: int
    supplementary_gids: frozenset = frozenset()

    def __post_init__(self):
        if not self.account:
            raise ValueError("account must be non-empty")
        gids = frozenset(self.supplementary_gids)
        if self.primary_gid in gids:
            raise ValueError("primary gid repeated among supplementary gids")
        object.__setattr__(self, "supplementary_gids", gids)

    def to_document(self):
        return {"account": self.account, "uid": self.uid, "primary_gid": self.primary_gid,
                "supplementary_gids": sorted(self.supplementary_gids)}

    @classmethod
    def from_document(cls, doc):
        return cls(doc["account"], doc["uid"], doc["primary_gid"],
                   frozenset(doc["supplementary_gids"]))


@dataclass(frozen=True)
class Pool:
    name: str
    accounts: tuple  # ((account, uid), ...)
    default_gid: int

    def __post_init__(self):
        accounts = tuple(sorted((str(a), int(u)) for a, u in self.accounts))
        names = [a for a, _ in accounts]
        if len(set(names)) != len(names):
            raise ValueError(f"pool {self.name} lists an account twice")
        if any(a.startswith(".") or "/" in a or not a for a in names):
            raise ValueError(f"pool {self.name} has an unusable account name")
        object.__setattr__(self, "accounts", accounts)

    def uid_of(self, account):
        return dict(self.accounts).get(account)


@dataclass(frozen=True)
class Lease:
    pool: str
    account: str
    uid: int
    subject: str
    leased_at: int
    last_used: int


class LeaseLedger:
    def __init__(self, directory):
        self.directory = os.fspath(directory)

    def _pool_dir(self, pool_name):
        return os.path.join(self.directory, pool_name)

    def _read(self, path):
        try:
            with open(path, "rb") as fh:
                doc = canonical.loads(fh.read())
            last_used = int(os.stat(path).st_mtime)
        except FileNotFoundError:
            return None
        return Lease(doc["pool"], doc["account"], doc["uid"], doc["subject"],
                     doc["leased_at"], last_used)

    def _touch(self, path, now):
        try:
            os.utime(path, (now, now))
            return True
        except FileNotFoundError:
            return False

    def lookup(self, pool_name, subject):
        return self._read(os.path.join(self._pool_dir(pool_name), encode_subject(subject)))

    def acquire(self, pool, subject, now=None):
        """Return ``(account, uid)`` leased to ``subject`` from ``pool``.

        An existing lease is returned unchanged (leases are sticky); otherwise
        the lexicographically first free account is claimed.
        """
        now = int(time.time()) if now is None else int(now)
        pdir = self._pool_dir(pool.name)
        os.makedirs(os.path.join(pdir, CLAIMS), exist_ok=True)
        enc = encode_subject(subject)
        record_path = os.path.join(pdir, enc)

        lease = self._read(record_path)
        if lease is not None and self._touch(record_path, now):
            return lease.account, lease.uid

        for account, uid in pool.accounts:
            claim = os.path.join(pdir, CLAIMS, account)
            try:
                fd = os.open(claim, os.O_WRONLY | os.O_CREAT | os.O_EXCL, 0o644)
            except FileExistsError:
                continue
            with os.fdopen(fd, "w") as fh:
                fh.write(enc)
            doc = {"type": "lease", "pool": pool.name, "account": account, "uid": uid,
                   "subject": str(subject), "leased_at": now}
            tfd, tmp = tempfile.mkstemp(dir=pdir, prefix=".tmp-")
            with os.fdopen(tfd, "wb") as fh:
                fh.write(canonical.dumps(doc))
            os.utime(tmp, (now, now))
            try:
                os.link(tmp, record_path)
            except FileExistsError:
                # a concurrent acquire for the same subject won; give our claim back
                os.unlink(claim)
                lease = self._read(record_path)
                if lease is None:
                    continue
                return lease.account, lease.uid
            finally:
                os.unlink(tmp)
            log.info("leased %s/%s to %s", pool.name, account, subject)
            return account, uid
        raise PoolExhausted(f"no free account in pool {pool.name}")

    def release(self, subject, pool_name):
        pdir = self._pool_dir(pool_name)
        enc = encode_subject(subject)
        record_path = os.path.join(pdir, enc)
        lease = self._read(record_path)
        if lease is None:
            raise NoSuchLease(f"{subject} holds no lease in pool {pool_name}")
        self._free(pdir, enc, lease.account)
        return lease.account

    def _free(self, pdir, enc, account):
        try:
            os.unlink(os.path.join(pdir, enc))
        except FileNotFoundError:
            return False
        claim = os.path.join(pdir, CLAIMS, account)
        try:
            with open(claim) as fh:
                owner = fh.read()
            if owner == enc:
                os.unlink(claim)
        except FileNotFoundError:
            pass
        return True

    def leases(self, pool_name=None):
        pools = [pool_name] if pool_name else self.pools()
        out = []
        for name in pools:
            pdir = self._pool_dir(name)
            if not os.path.isdir(pdir):
                continue
            for entry in sorted(os.listdir(pdir)):
                if entry.startswith("."):
                    continue
                lease = self._read(os.path.join(pdir, entry))
                if lease is not None:
                    out.append(lease)
        return out

    def pools(self):
        if not os.path.isdir(self.directory):
            return []
        return sorted(d for d in os.listdir(self.directory)
                      if os.path.isdir(os.path.join(self.directory, d)))

    def gc(self, idle_seconds, now=None):
        """Free leases idle for at least ``idle_seconds``; returns the freed leases."""
        now = int(time.time()) if now is None else int(now)
        freed = []
        for lease in self.leases():
            if now - lease.last_used >= idle_seconds:
                if self._free(self._pool_dir(lease.pool), encode_subject(lease.subject),
                              lease.account):
                    freed.append(lease)
        self._reclaim_orphans()
        return freed

    def _reclaim_orphans(self):
        # claims left behind by a crash between claiming and publishing a record
        cutoff = time.time() - ORPHAN_GRACE
        for name in self.pools():
            cdir = os.path.join(self._pool_dir(name), CLAIMS)
            if not os.path.isdir(cdir):
                continue
            for account in os.listdir(cdir):
                claim = os.path.join(cdir, account)
                try:
                    if os.stat(claim).st_mtime > cutoff:
                        continue
                    with open(claim) as fh:
                        enc = fh.read()
                except FileNotFoundError:
                    continue
                lease = self._read(os.path.join(self._pool_dir(name), enc)) if enc else None
                if lease is None or lease.account != account:
                    log.warning("reclaiming orphaned claim %s/%s", name, account)
                    os.unlink(claim)


def lease_acquire(ledger, pool, subject, now=None):
    return ledger.acquire(pool, subject, now)


def lease_release(ledger, subject, pool_name):
    return ledger.release(subject, pool_name)


def lease_gc(ledger, idle_seconds, now=None):
    return ledger.gc(idle_seconds, now)


@dataclass(frozen=True)
class StaticMap:
    mapping: dict  # rendered subject -> account


@dataclass(frozen=True)
class PoolMap:
    pattern: FqanPattern
    pool: str


@dataclass(frozen=True)
class GroupMap:
    pattern: FqanPattern
    gid: int
    primary: bool = False


@dataclass(frozen=True)
class MappingPolicy:
    uid_rules: tuple
    gid_rules: tuple = ()
    pools: dict = field(default_factory=dict)
    accounts: dict = field(default_factory=dict)  # account -> (uid, gid)

    def __post_init__(self):
        if not self.uid_rules:
            raise ConfigurationError("mapping policy needs at least one uid rule")
        names = [a for p in self.pools.values() for a, _ in p.accounts]
        if len(set(names)) != len(names):
            raise ConfigurationError("pool account names must be unique")
        for rule in self.uid_rules:
            if isinstance(rule, PoolMap) and rule.pool not in self.pools:
                raise ConfigurationError(f"uid rule names unknown pool {rule.pool!r}")
            if isinstance(rule, StaticMap):
                missing = set(rule.mapping.values()) - set(self.accounts)
                if missing:
                    raise ConfigurationError(f"static map names unknown accounts {sorted(missing)}")

    @classmethod
    def from_document(cls, doc):
        try:
            accounts = {a: (v["uid"], v["gid"]) for a, v in doc.get("accounts", {}).items()}
            pools = {
                name: Pool(name, tuple((a["name"], a["uid"]) for a in p["accounts"]),
                           p["default_gid"])
                for name, p in doc.get("pools", {}).items()
            }
            uid_rules = []
            for r in doc["uid_rules"]:
                if r["type"] == "static":
                    uid_rules.append(StaticMap({str(as_subject(s)): a for s, a in r["map"].items()}))
                elif r["type"] == "pool":
                    uid_rules.append(PoolMap(FqanPattern.parse(r["pattern"]), r["pool"]))
                else:
                    raise ConfigurationError(f"unknown uid rule type {r['type']!r}")
            gid_rules = tuple(GroupMap(FqanPattern.parse(r["pattern"]), r["gid"],
                                       bool(r.get("primary", False)))
                              for r in doc.get("gid_rules", []))
        except (KeyError, TypeError, ValueError, MalformedDocument) as exc:
            raise ConfigurationError(f"bad mapping policy: {exc}") from None
        return cls(tuple(uid_rules), gid_rules, pools, accounts)


def lcmaps_map(policy, ledger, subject, fqans, now=None, gridmap=None):
    """Map a subject and its (verified) FQANs to a :class:`LocalCredential`.

    The first applicable uid rule wins.  When none applies, a grid-mapfile
    entry for the subject (account name or ``.pool``) is used if given.
    """
    now = int(time.time()) if now is None else int(now)
    subject = as_subject(subject)
    fqans = list(fqans)

    account = uid = default_gid = None
    for rule in policy.uid_rules:
        if isinstance(rule, StaticMap):
            name = rule.mapping.get(str(subject))
            if name is not None:
                account, (uid, default_gid) = name, policy.accounts[name]
                break
        elif any(rule.pattern.matches(f) for f in fqans):
            pool = policy.pools[rule.pool]
            account, uid = ledger.acquire(pool, subject, now)
            default_gid = pool.default_gid
            break
    else:
        target = gridmap.lookup(subject) if gridmap is not None else None
        if target is None:
            raise NoMappingRule(f"no mapping rule applies to {subject}")
        if target.startswith("."):
            pool = policy.pools.get(target[1:])
            if pool is None:
                raise NoMappingRule(f"grid-mapfile names unknown pool {target}")
            account, uid = ledger.acquire(pool, subject, now)
            default_gid = pool.default_gid
        elif target in policy.accounts:
            account, (uid, default_gid) = target, policy.accounts[target]
        else:
            raise NoMappingRule(f"grid-mapfile account {target} is not defined locally")

    primary = None
    gids = []
    for rule in policy.gid_rules:
        if any(rule.pattern.matches(f) for f in fqans):
            gids.append(rule.gid)
            if rule.primary and primary is None:
                primary = rule.gid
    if primary is None:
        primary = default_gid
    return LocalCredential(account, uid, primary, frozenset(g for g in gids if g != primary))
