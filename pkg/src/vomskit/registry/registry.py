"""The per-VO membership database.

Every mutation follows the same path: check preconditions, append one audit
record, hand the record to the store (if any), then apply it to in-memory
state.  Replaying the audit log through :meth:`Registry._apply` rebuilds the
exact same state, which is also how a registry is recovered from disk.
"""

import threading
import time
from contextlib import contextmanager
from dataclasses import replace

from ..errors import (
    AlreadyDecided,
    ConflictError,
    CycleWouldForm,
    DuplicateName,
    MalformedDocument,
    NotAuthorized,
    UnknownRequest,
    UnknownScope,
)
from ..fqan import Fqan, as_fqan, valid_segment
from ..names import SubjectName, as_subject
from .audit import AuditLog
from .model import (
    APPROVED,
    CAPABILITY,
    MEMBERSHIP,
    PENDING,
    REJECTED,
    ROLE,
    Grant,
    GroupNode,
    MembershipRequest,
)
from ..schedule import Always

ROOT = 0


class Registry:
    """Groups, grants, delegations and requests of a single VO."""

    def __init__(self, vo, owner, clock=None, store=None):
        if not valid_segment(vo):
            raise ValueError(f"bad VO name {vo!r}")
        self.vo = vo
        self.owner = as_subject(owner)
        self.clock = clock or time.time
        self.audit = AuditLog()
        self._store = store
        self._lock = threading.RLock()
        self.groups = {ROOT: GroupNode(ROOT, vo, ())}
        self.grants = {}
        self.delegations = set()
        self.requests = {}
        self._next = {"group": 1, "grant": 0, "request": 0}
        self._paths = None

    # -- helpers ---------------------------------------------------------

    def _now(self, now):
        return int(self.clock()) if now is None else int(now)

    def _group(self, gid):
        try:
            return self.groups[gid]
        except (KeyError, TypeError):
            raise UnknownScope(f"no group {gid!r} in VO {self.vo}") from None

    def children(self, gid):
        return [g for g in self.groups.values() if gid in g.parents]

    def ancestors(self, gid):
        """Reflexive ancestor closure of ``gid`` over every parent edge."""
        seen = {gid}
        stack = [gid]
        while stack:
            for p in self.groups[stack.pop()].parents:
                if p not in seen:
                    seen.add(p)
                    stack.append(p)
        return seen

    def _paths_index(self):
        if self._paths is None:
            paths = {}

            def path(gid):
                if gid not in paths:
                    node = self.groups[gid]
                    paths[gid] = (path(node.parents[0]) + (node.name,)) if node.parents else ()
                return paths[gid]

            for gid in self.groups:
                path(gid)
            self._paths = paths
        return self._paths

    def group_fqan(self, gid):
        self._group(gid)
        return Fqan(self.vo, self._paths_index()[gid])

    def resolve(self, ref):
        """Group id from an id or a group FQAN such as ``/datagrid/wp6``."""
        if isinstance(ref, int) and not isinstance(ref, bool):
            self._group(ref)
            return ref
        try:
            fq = as_fqan(ref)
        except ValueError:
            raise UnknownScope(f"bad group reference {ref!r}") from None
        if fq.vo != self.vo or not fq.is_membership:
            raise UnknownScope(f"{ref} is not a group of VO {self.vo}")
        with self._reading():
            for gid, path in self._paths_index().items():
                if path == fq.groups:
                    return gid
        raise UnknownScope(f"no group {ref}")

    @contextmanager
    def _reading(self):
        """Hold the in-process lock, first picking up records other writers appended."""
        with self._lock:
            if self._store is not None:
                self._store.catch_up(self)
            yield

    @contextmanager
    def _writing(self):
        """Like :meth:`_reading`, but also exclusive across processes sharing the store."""
        with self._lock:
            if self._store is None:
                yield
                return
            with self._store.locked():
                self._store.catch_up(self)
                yield

    # -- authorization ---------------------------------------------------

    def authorize_admin(self, actor, scope):
        actor = as_subject(actor)
        with self._reading():
            if actor == self.owner:
                return True
            if scope not in self.groups:
                return False
            return any((actor, a) in self.delegations for a in self.ancestors(scope))

    def is_admin(self, actor):
        actor = as_subject(actor)
        with self._reading():
            return actor == self.owner or any(a == actor for a, _ in self.delegations)

    def _require_admin(self, actor, scopes):
        for scope in scopes:
            if not self.authorize_admin(actor, scope):
                raise NotAuthorized(f"{actor} may not administer {self.group_fqan(scope)}")

    # -- mutation plumbing -----------------------------------------------

    def _commit(self, actor, action, payload, now):
        record = self.audit.append(str(actor), action, payload, now)
        if self._store is not None:
            self._store.append(record)
        self._apply(action, payload)
        if self._store is not None:
            self._store.write_snapshot(self)
        return record

    def _apply(self, action, p):
        if action == "create_group":
            self.groups[p["id"]] = GroupNode(p["id"], p["name"], tuple(p["parents"]), p["forced"])
            self._next["group"] = max(self._next["group"], p["id"] + 1)
        elif action == "add_parent":
            node = self.groups[p["group"]]
            self.groups[p["group"]] = replace(node, parents=node.parents + (p["parent"],))
        elif action == "delete_group":
            gid = p["group"]
            del self.groups[gid]
            self.grants = {k: g for k, g in self.grants.items() if g.scope != gid}
            self.delegations = {d for d in self.delegations if d[1] != gid}
        elif action == "grant":
            g = Grant.from_document(p)
            self.grants[g.id] = g
            self._next["grant"] = max(self._next["grant"], g.id + 1)
        elif action == "revoke_grant":
            del self.grants[p["id"]]
        elif action == "delegate":
            self.delegations.add((SubjectName.parse(p["admin"]), p["scope"]))
        elif action == "revoke_delegation":
            self.delegations.discard((SubjectName.parse(p["admin"]), p["scope"]))
        elif action == "submit_request":
            req = MembershipRequest(p["id"], SubjectName.parse(p["candidate"]),
                                    tuple(p["scopes"]), PENDING, p["created_at"])
            self.requests[req.id] = req
            self._next["request"] = max(self._next["request"], req.id + 1)
        elif action == "decide_request":
            req = self.requests[p["id"]]
            self.requests[req.id] = replace(
                req, state=APPROVED if p["approve"] else REJECTED,
                decided_by=SubjectName.parse(p["decided_by"]), decided_at=p["decided_at"])
            for gid, scope in zip(p["grants"], req.requested_scopes):
                self.grants[gid] = Grant(req.candidate, scope, MEMBERSHIP, None, Always(), gid)
                self._next["grant"] = max(self._next["grant"], gid + 1)
        else:
            raise MalformedDocument(f"unknown audit action {action!r}")
        self._paths = None

    # -- groups ------------------------------------------------------------

    def create_group(self, actor, parent_ids, name, forced=False, now=None):
        """Create a group under one or more parents; the first parent names it."""
        actor = as_subject(actor)
        if not valid_segment(name):
            raise ValueError(f"bad group name {name!r}")
        with self._writing():
            parents = [self.resolve(p) for p in parent_ids]
            if not parents:
                raise ValueError("a group needs at least one parent")
            if len(set(parents)) != len(parents):
                raise ValueError("duplicate parent")
            self._require_admin(actor, parents)
            for p in parents:
                if any(c.name == name for c in self.children(p)):
                    raise DuplicateName(f"{self.group_fqan(p)} already has a child {name!r}")
            gid = self._next["group"]
            self._commit(actor, "create_group",
                         {"id": gid, "name": name, "parents": parents, "forced": bool(forced)},
                         self._now(now))
            return self.groups[gid]

    def add_parent(self, actor, group, parent, now=None):
        """Add a parent edge to an existing group, refusing edges that close a cycle."""
        actor = as_subject(actor)
        with self._writing():
            gid, pid = self.resolve(group), self.resolve(parent)
            self._require_admin(actor, [gid, pid])
            if gid in self.ancestors(pid):
                raise CycleWouldForm(f"{self.group_fqan(pid)} descends from {self.group_fqan(gid)}")
            node = self.groups[gid]
            if pid in node.parents:
                raise DuplicateName(f"{self.group_fqan(gid)} is already under {self.group_fqan(pid)}")
            if any(c.name == node.name for c in self.children(pid)):
                raise DuplicateName(f"{self.group_fqan(pid)} already has a child {node.name!r}")
            self._commit(actor, "add_parent", {"group": gid, "parent": pid}, self._now(now))
            return self.groups[gid]

    def delete_group(self, actor, group, now=None):
        actor = as_subject(actor)
        with self._writing():
            gid = self.resolve(group)
            if gid == ROOT:
                raise NotAuthorized("the VO root cannot be deleted")
            self._require_admin(actor, [gid])
            if self.children(gid):
                raise ConflictError(f"{self.group_fqan(gid)} still has subgroups")
            self._commit(actor, "delete_group", {"group": gid}, self._now(now))

    # -- grants ------------------------------------------------------------

    def grant(self, actor, grant, now=None):
        actor = as_subject(actor)
        with self._writing():
            scope = grant.scope if isinstance(grant.scope, int) else self.resolve(grant.scope)
            self._group(scope)
            self._require_admin(actor, [scope])
            stored = replace(grant, scope=scope, id=self._next["grant"])
            self._commit(actor, "grant", stored.to_document(), self._now(now))
            return stored

    def revoke_grant(self, actor, grant_id, now=None):
        actor = as_subject(actor)
        with self._writing():
            if grant_id not in self.grants:
                raise UnknownScope(f"no grant {grant_id}")
            self._require_admin(actor, [self.grants[grant_id].scope])
            self._commit(actor, "revoke_grant", {"id": grant_id}, self._now(now))

    def delegate(self, actor, admin, scope, now=None):
        actor, admin = as_subject(actor), as_subject(admin)
        with self._writing():
            gid = self.resolve(scope)
            self._require_admin(actor, [gid])
            self._commit(actor, "delegate", {"admin": str(admin), "scope": gid}, self._now(now))

    def revoke_delegation(self, actor, admin, scope, now=None):
        actor, admin = as_subject(actor), as_subject(admin)
        with self._writing():
            gid = self.resolve(scope)
            self._require_admin(actor, [gid])
            if (admin, gid) not in self.delegations:
                raise UnknownScope(f"{admin} holds no delegation on {self.group_fqan(gid)}")
            self._commit(actor, "revoke_delegation", {"admin": str(admin), "scope": gid},
                         self._now(now))

    # -- requests ----------------------------------------------------------

    def submit_request(self, actor, scopes, now=None):
        actor = as_subject(actor)
        with self._writing():
            gids = [self.resolve(s) for s in scopes]
            if not gids:
                raise ValueError("a request needs at least one group")
            rid = self._next["request"]
            now = self._now(now)
            self._commit(actor, "submit_request",
                         {"id": rid, "candidate": str(actor), "scopes": gids, "created_at": now},
                         now)
            return self.requests[rid]

    def decide_request(self, actor, request_id, approve, now=None):
        actor = as_subject(actor)
        with self._writing():
            req = self.requests.get(request_id)
            if req is None:
                raise UnknownRequest(f"no request {request_id}")
            if req.state != PENDING:
                raise AlreadyDecided(f"request {request_id} is already {req.state}")
            self._require_admin(actor, req.requested_scopes)
            first = self._next["grant"]
            grants = list(range(first, first + len(req.requested_scopes))) if approve else []
            now = self._now(now)
            self._commit(actor, "decide_request",
                         {"id": request_id, "approve": bool(approve), "decided_by": str(actor),
                          "decided_at": now, "grants": grants}, now)
            return self.requests[request_id]

    # -- queries -----------------------------------------------------------

    def _active(self, user, t):
        key = as_subject(user)
        return [g for g in self.grants.values() if g.user == key and g.schedule.active(t)]

    def membership_closure(self, user, t):
        """Group ids the user belongs to at ``t``, ancestors included."""
        with self._reading():
            closure = set()
            for g in self._active(user, t):
                if g.kind == MEMBERSHIP:
                    closure |= self.ancestors(g.scope)
            return closure

    def effective_attributes(self, user, t):
        """Sorted FQANs held by ``user`` at time ``t``.

        Membership propagates to every ancestor group.  Roles and capabilities
        are reported only for their own group, and only while the user is a
        member of that group.
        """
        with self._reading():
            closure = self.membership_closure(user, t)
            out = {self.group_fqan(gid) for gid in closure}
            for g in self._active(user, t):
                if g.scope not in closure:
                    continue
                if g.kind == ROLE:
                    out.add(self.group_fqan(g.scope).with_role(g.value))
                elif g.kind == CAPABILITY:
                    out.add(self.group_fqan(g.scope).with_capability(g.value))
            return sorted(out, key=str)

    def forced_attributes(self, user, t):
        """Membership FQANs of forced groups the user belongs to at ``t``."""
        with self._reading():
            return sorted((self.group_fqan(gid) for gid in self.membership_closure(user, t)
                           if self.groups[gid].forced), key=str)

    def users(self):
        with self._reading():
            return sorted({g.user for g in self.grants.values()}, key=str)

    def holders_of(self, fqan, t):
        """Subjects holding ``fqan`` at ``t``, sorted by rendered subject."""
        target = as_fqan(fqan)
        with self._reading():
            return [u for u in self.users() if target in self.effective_attributes(u, t)]

    def grants_of(self, user):
        key = as_subject(user)
        with self._reading():
            return sorted((g for g in self.grants.values() if g.user == key), key=lambda g: g.id)

    # -- snapshots and replay ----------------------------------------------

    def snapshot_document(self):
        with self._reading():
            return {
                "type": "registry-snapshot",
                "vo": self.vo,
                "owner": str(self.owner),
                "groups": [g.to_document() for _, g in sorted(self.groups.items())],
                "grants": [g.to_document() for _, g in sorted(self.grants.items())],
                "delegations": sorted([str(a), s] for a, s in self.delegations),
                "requests": [r.to_document() for _, r in sorted(self.requests.items())],
                "counters": dict(self._next),
                "audit_len": len(self.audit),
                "audit_head": self.audit.head,
            }

    def _restore(self, doc, records):
        self.groups = {g["id"]: GroupNode.from_document(g) for g in doc["groups"]}
        self.grants = {g["id"]: Grant.from_document(g) for g in doc["grants"]}
        self.delegations = {(SubjectName.parse(a), s) for a, s in doc["delegations"]}
        self.requests = {r["id"]: MembershipRequest.from_document(r) for r in doc["requests"]}
        self._next = dict(doc["counters"])
        self.audit = AuditLog(records)
        self._paths = None

    @classmethod
    def replay(cls, vo, owner, records, clock=None):
        """Rebuild a registry by applying audit records to an empty one."""
        reg = cls(vo, owner, clock=clock)
        for record in records:
            reg._apply(record.action, record.payload)
        reg.audit = AuditLog(records)
        return reg
