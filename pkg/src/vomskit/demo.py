"""Scripted end-to-end scenario, runnable with ``vomskit demo``.

CA bootstrap, a VO with a three-level group DAG and a forced group, attribute
issuance with subset selection, proxy creation, an allowed gatekeeper
submission, then a blacklist update that turns the same submission into a
deny.  Everything runs in-process over :class:`LocalTransport`.
"""

import tempfile
import time

from .authority import AttributeServer, ServerPolicy
from .credentials import CertificateAuthority
from .fqan import FqanPattern
from .gatekeeper import GateConfig, GateRequest, gate_handle
from .keys import PrivateKey
from .lcas import JobSpec, SitePolicy
from .lcmaps import LeaseLedger, MappingPolicy, Pool, PoolMap
from .proxytool import extract_assertions, proxy_init
from .registry import ROLE, Grant, open_registry
from .transport import LocalTransport

YEAR = 365 * 86400
VO = "datagrid"
ENDPOINT = "voms.datagrid.example:15000"


def site_policy(trusted, banned=()):
    return SitePolicy.build([
        ("blacklist", {"banned_subjects": [str(s) for s in banned]}),
        ("wallclock", {"max_seconds": 86400}),
        ("voms", {"acl": [{"pattern": "/datagrid/banned-watch", "effect": "deny"},
                          {"pattern": "/datagrid/*", "effect": "permit"}],
                  "require_assertion": True}),
    ], trusted)


def run_demo(workdir=None, report=print, now=None):
    """Run the scenario; returns a dict of the interesting intermediate results."""
    started = time.perf_counter()
    now = int(time.time()) if now is None else now
    tmp = None
    if workdir is None:
        tmp = tempfile.TemporaryDirectory(prefix="vomskit-demo-")
        workdir = tmp.name
    try:
        ca = CertificateAuthority.create_root("/C=IT/O=INFN/CN=INFN CA", now - 3600, now + 5 * YEAR)
        report(f"CA bootstrapped: {ca.credential.subject}")
        host_key = PrivateKey.generate()
        host = ca.issue("/C=IT/O=INFN/CN=voms.datagrid.example", host_key.public_key(),
                        now - 3600, now + YEAR)
        user_key = PrivateKey.generate()
        user = ca.issue("/C=IT/O=INFN/CN=Mario Rossi", user_key.public_key(), now - 3600, now + YEAR)
        user_chain = (user, ca.credential)
        admin = "/C=IT/O=INFN/CN=VO Admin"

        reg = open_registry(f"{workdir}/store", VO, owner=admin, clock=lambda: now)
        wp6 = reg.create_group(admin, ["/datagrid"], "wp6")
        sub = reg.create_group(admin, ["/datagrid/wp6"], "admin")
        watch = reg.create_group(admin, ["/datagrid"], "monitored", forced=True)
        reg.grant(admin, Grant(user.subject, sub.id))
        reg.grant(admin, Grant(user.subject, watch.id))
        reg.grant(admin, Grant(user.subject, wp6.id, ROLE, "admin"))
        entitled = [str(f) for f in reg.effective_attributes(user.subject, now)]
        report(f"VO {VO}: user entitled to {', '.join(entitled)}")

        server = AttributeServer(reg, host, host_key,
                                 ServerPolicy(VO, trust_anchors=[ca.credential]),
                                 clock=lambda: now)
        transport = LocalTransport({ENDPOINT: server})
        trusted = {VO: host.public_key}
        bundle = proxy_init(user_chain, user_key, [(ENDPOINT, VO, ["/datagrid/wp6"])],
                            now=now, transport=transport, trusted_servers=trusted)
        issued = [str(f) for a in extract_assertions(bundle.proxy) for f in a.fqans]
        report(f"proxy {bundle.proxy.subject} valid until {bundle.proxy.not_after}; "
               f"attributes {', '.join(issued)}")

        mapping = MappingPolicy(
            uid_rules=(PoolMap(FqanPattern.parse("/datagrid/*"), "dteam"),),
            pools={"dteam": Pool("dteam", tuple((f"dteam{i:03d}", 20000 + i)
                                                for i in range(1, 6)), 2000)},
        )
        cfg = GateConfig(trust_anchors=[ca.credential], site_policy=site_policy(trusted),
                         mapping_policy=mapping, ledger=LeaseLedger(f"{workdir}/leases"))
        job = JobSpec("/bin/simulate", 3600, "long")
        req = GateRequest(bundle.to_bytes(), job)
        allowed = gate_handle(cfg, req, now)
        report(f"gate (open policy): allowed={allowed.allowed} "
               f"account={allowed.local.account if allowed.local else None}")

        cfg.site_policy = site_policy(trusted, banned=[user.subject])
        denied = gate_handle(cfg, req, now)
        report(f"gate (user blacklisted): allowed={denied.allowed} stage={denied.stage}")

        elapsed = time.perf_counter() - started
        report(f"demo finished in {elapsed:.2f}s")
        return {"entitled": entitled, "issued": issued, "proxy": bundle.proxy,
                "allowed": allowed, "denied": denied, "elapsed": elapsed}
    finally:
        if tmp is not None:
            tmp.cleanup()
