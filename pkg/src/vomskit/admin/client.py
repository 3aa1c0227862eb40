"""Client side of the admin protocol."""

import time

from .. import canonical
from ..envelope import SignedEnvelope
from ..errors import MalformedDocument, remote_error
from ..transport import HttpTransport


class AdminClient:
    def __init__(self, endpoint, chain, key, transport=None, clock=None):
        self.endpoint = endpoint
        self.chain = tuple(chain)
        self.key = key
        self.transport = transport or HttpTransport()
        self.clock = clock or time.time

    def call(self, method, path, **args):
        args = {k: v for k, v in args.items() if v is not None}
        env = SignedEnvelope.seal(self.chain, self.key, path, args, int(self.clock()))
        body = self.transport.request(self.endpoint, method, path, env.to_bytes())
        doc = canonical.loads(body)
        if isinstance(doc, dict) and set(doc) == {"result"}:
            return doc["result"]
        if isinstance(doc, dict) and set(doc) == {"code", "detail"}:
            raise remote_error(doc["code"], doc["detail"], self.endpoint)
        raise MalformedDocument(f"unexpected reply from {self.endpoint}")

    def whoami(self):
        return self.call("GET", "/core/whoami")

    def list_groups(self):
        return self.call("GET", "/admin/groups")

    def create_group(self, parents, name, forced=False):
        return self.call("POST", "/admin/groups", parents=list(parents), name=name,
                         forced=forced)

    def link_group(self, group, parent):
        return self.call("POST", "/admin/groups/link", group=group, parent=parent)

    def delete_group(self, group):
        return self.call("POST", "/admin/groups/delete", group=group)

    def grant(self, user, group, kind="membership", value=None, schedule=None):
        return self.call("POST", "/admin/grants", user=str(user), group=group, kind=kind,
                         value=value, schedule=schedule.to_document() if schedule else None)

    def revoke_grant(self, grant_id):
        return self.call("POST", "/admin/grants/revoke", id=grant_id)

    def list_grants(self, user=None):
        return self.call("GET", "/admin/grants", user=None if user is None else str(user))

    def list_users(self):
        return self.call("GET", "/admin/users")

    def delegate(self, admin, group):
        return self.call("POST", "/admin/delegations", admin=str(admin), group=group)

    def revoke_delegation(self, admin, group):
        return self.call("POST", "/admin/delegations/revoke", admin=str(admin), group=group)

    def history(self, since=0):
        return self.call("GET", "/history", since=since)

    def submit_request(self, groups):
        return self.call("POST", "/request/submit", groups=list(groups))

    def list_requests(self, pending_only=False):
        return self.call("GET", "/request/list", pending_only=pending_only or None)

    def decide(self, request_id, approve):
        return self.call("POST", "/request/decide", id=request_id, approve=approve)

    def userlist(self, fqan):
        return self.call("GET", "/compat/userlist", fqan=str(fqan))["subjects"]
