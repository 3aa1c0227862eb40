"""Administration server for one VO registry.

Endpoints fall into five groups:

* Core: ``GET /core/whoami``
* Admin: groups, grants, delegations and user listings under ``/admin/...``
* History: ``GET /history`` (audit records since a sequence number)
* Request: ``/request/submit``, ``/request/list``, ``/request/decide``
* Compatibility: ``GET /compat/userlist`` for grid-mapfile generation

Every call carries a :class:`~vomskit.envelope.SignedEnvelope`; arguments are
taken from the signed ``args`` only.  Replies are ``{"result": ...}`` or an
error document ``{"code", "detail"}``.
"""

import logging
import time

from .. import canonical
from ..envelope import DEFAULT_SKEW, NonceCache, SignedEnvelope
from ..errors import (
    ConflictError,
    FormatError,
    MalformedDocument,
    MalformedRequest,
    NotAuthorized,
    RequestError,
    UnknownEntity,
)
from ..fqan import Fqan
from ..registry import Grant, verify_audit_chain
from ..registry.model import MEMBERSHIP, PENDING
from ..schedule import Always, schedule_from_document

log = logging.getLogger(__name__)

_routes = {}


def route(method, path):
    def deco(fn):
        _routes[(method, path)] = fn
        return fn
    return deco


class AdminService:
    def __init__(self, registry, trust_anchors, revocation_lists=(), skew=DEFAULT_SKEW,
                 clock=None):
        self.registry = registry
        self.trust_anchors = list(trust_anchors)
        self.revocation_lists = list(revocation_lists)
        self.skew = skew
        self.nonces = NonceCache(skew)
        self.clock = clock or time.time

    def __call__(self, method, path, query, body):
        handler = _routes.get((method, path))
        if handler is None:
            return 404, _error("NOT_FOUND", f"{method} {path}")
        now = int(self.clock())
        try:
            env = SignedEnvelope.from_bytes(body)
            if env.path != path:
                raise MalformedRequest("signed path does not match the request path")
            actor = env.open(trust_anchors=self.trust_anchors,
                             revocation_lists=self.revocation_lists,
                             skew=self.skew, nonces=self.nonces, now=now).subject
        except FormatError as exc:
            return 400, _error(exc.code, str(exc))
        except RequestError as exc:
            return 401, _error(exc.code, str(exc))
        try:
            result = handler(self, actor, env.args, now)
        except NotAuthorized as exc:
            return 403, _error(exc.code, str(exc))
        except UnknownEntity as exc:
            return 404, _error("UNKNOWN_ENTITY", str(exc))
        except ConflictError as exc:
            return 409, _error(exc.code, str(exc))
        except (KeyError, TypeError, ValueError, MalformedDocument) as exc:
            return 400, _error("BAD_ARGUMENTS", f"{type(exc).__name__}: {exc}")
        return 200, canonical.dumps({"result": result})

    def _require_reader(self, actor):
        if not self.registry.is_admin(actor):
            raise NotAuthorized(f"{actor} is not an administrator of {self.registry.vo}")

    def _group_doc(self, gid):
        reg = self.registry
        node = reg.groups[gid]
        return {"id": gid, "fqan": str(reg.group_fqan(gid)),
                "parents": [str(reg.group_fqan(p)) for p in node.parents],
                "forced": node.forced}

    def _grant_doc(self, g):
        doc = {"id": g.id, "user": str(g.user), "group": str(self.registry.group_fqan(g.scope)),
               "kind": g.kind, "schedule": g.schedule.to_document()}
        if g.value is not None:
            doc["value"] = g.value
        return doc

    def _request_doc(self, r):
        doc = r.to_document()
        doc["requested_scopes"] = [str(self.registry.group_fqan(s))
                                   for s in r.requested_scopes if s in self.registry.groups]
        return doc


def _error(code, detail):
    return canonical.dumps({"code": code, "detail": detail})


# -- core ----------------------------------------------------------------

@route("GET", "/core/whoami")
def _whoami(svc, actor, args, now):
    reg = svc.registry
    return {"subject": str(actor), "vo": reg.vo,
            "fqans": [str(f) for f in reg.effective_attributes(actor, now)],
            "is_admin": reg.is_admin(actor)}


# -- admin -----------------------------------------------------------------

@route("GET", "/admin/groups")
def _list_groups(svc, actor, args, now):
    svc._require_reader(actor)
    return [svc._group_doc(gid) for gid in sorted(svc.registry.groups)]


@route("POST", "/admin/groups")
def _create_group(svc, actor, args, now):
    node = svc.registry.create_group(actor, args["parents"], args["name"],
                                     bool(args.get("forced", False)), now)
    return svc._group_doc(node.id)


@route("POST", "/admin/groups/link")
def _link_group(svc, actor, args, now):
    node = svc.registry.add_parent(actor, args["group"], args["parent"], now)
    return svc._group_doc(node.id)


@route("POST", "/admin/groups/delete")
def _delete_group(svc, actor, args, now):
    svc.registry.delete_group(actor, args["group"], now)
    return {"deleted": args["group"]}


@route("GET", "/admin/grants")
def _list_grants(svc, actor, args, now):
    svc._require_reader(actor)
    reg = svc.registry
    users = [args["user"]] if "user" in args else reg.users()
    return [svc._grant_doc(g) for u in users for g in reg.grants_of(u)]


@route("POST", "/admin/grants")
def _create_grant(svc, actor, args, now):
    reg = svc.registry
    schedule = schedule_from_document(args["schedule"]) if "schedule" in args else Always()
    grant = Grant(args["user"], reg.resolve(args.get("group", "/" + reg.vo)), args.get("kind", MEMBERSHIP),
                  args.get("value"), schedule)
    return svc._grant_doc(reg.grant(actor, grant, now))


@route("POST", "/admin/grants/revoke")
def _revoke_grant(svc, actor, args, now):
    svc.registry.revoke_grant(actor, args["id"], now)
    return {"revoked": args["id"]}


@route("GET", "/admin/users")
def _list_users(svc, actor, args, now):
    svc._require_reader(actor)
    return [str(u) for u in svc.registry.users()]


@route("GET", "/admin/delegations")
def _list_delegations(svc, actor, args, now):
    svc._require_reader(actor)
    reg = svc.registry
    return sorted([str(a), str(reg.group_fqan(s))] for a, s in reg.delegations)


@route("POST", "/admin/delegations")
def _delegate(svc, actor, args, now):
    svc.registry.delegate(actor, args["admin"], args["group"], now)
    return {"admin": args["admin"], "group": args["group"]}


@route("POST", "/admin/delegations/revoke")
def _revoke_delegation(svc, actor, args, now):
    svc.registry.revoke_delegation(actor, args["admin"], args["group"], now)
    return {"admin": args["admin"], "group": args["group"]}


# -- history -----------------------------------------------------------------

@route("GET", "/history")
def _history(svc, actor, args, now):
    svc._require_reader(actor)
    log_ = svc.registry.audit
    since = int(args.get("since", 0))
    return {"verified": verify_audit_chain(log_.records),
            "records": [r.to_document() for r in log_.since(since)]}


# -- requests ----------------------------------------------------------------

@route("POST", "/request/submit")
def _submit(svc, actor, args, now):
    return svc._request_doc(svc.registry.submit_request(actor, args["groups"], now))


@route("GET", "/request/list")
def _list_requests(svc, actor, args, now):
    reg = svc.registry
    out = []
    for _, r in sorted(reg.requests.items()):
        mine = r.candidate == actor
        can_decide = all(reg.authorize_admin(actor, s) for s in r.requested_scopes)
        if mine or can_decide:
            if args.get("pending_only") and r.state != PENDING:
                continue
            out.append(svc._request_doc(r))
    return out


@route("POST", "/request/decide")
def _decide(svc, actor, args, now):
    return svc._request_doc(svc.registry.decide_request(actor, args["id"],
                                                        bool(args["approve"]), now))


# -- compatibility -------------------------------------------------------------

@route("GET", "/compat/userlist")
def _userlist(svc, actor, args, now):
    fqan = Fqan.parse(args["fqan"])
    return {"fqan": str(fqan),
            "subjects": [str(s) for s in svc.registry.holders_of(fqan, now)]}
