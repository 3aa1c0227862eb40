"""Command line entry point: ``vomskit <command> ...``.

Exit status: 0 on success, 1 when authorization or validation refused the
operation, 2 on transport, parse or usage problems.
"""

import argparse
import json
import logging
import os
import sys
import time

from . import canonical
from .admin import AdminClient, AdminService, MkgridmapConfig, http_userlist_fetcher, mkgridmap_generate
from .authority import AttributeServer, ServerPolicy, verify_assertion
from .chain import DEFAULT_PROXY_LIFETIME, end_entity, load_chain, load_trust_anchors, save_chain
from .credentials import CertificateAuthority, RevocationList
from .errors import DeniedError, FormatError, TransportError, VomsError
from .fqan import Fqan
from .gatekeeper import GateConfig, GateRequest, GatekeeperService, gate_handle
from .keys import PrivateKey, PublicKey, load_private_key, save_private_key
from .lcas import JobSpec, SitePolicy, lcas_evaluate, load_config
from .lcmaps import LeaseLedger, MappingPolicy, lcmaps_map
from .proxytool import ProxyBundle, extract_assertions, format_info, proxy_info, proxy_init
from .registry import Grant, ROLE, CAPABILITY, MEMBERSHIP, open_registry
from .schedule import schedule_from_document
from .transport import LocalTransport, serve

log = logging.getLogger("vomskit")

DAY = 86400


def _now(args):
    return int(args.now) if getattr(args, "now", None) is not None else int(time.time())


def _print_doc(doc):
    print(json.dumps(doc, indent=2, sort_keys=True))


def _load_trusted(path):
    if not path:
        return None
    return {vo: PublicKey.from_document(k) for vo, k in load_config(path).items()}


def _rel(base, path):
    return os.path.join(os.path.dirname(os.path.abspath(base)), path)


# -- certificate authority -----------------------------------------------------

def cmd_ca_init(args):
    now = _now(args)
    os.makedirs(args.dir, exist_ok=True)
    ca = CertificateAuthority.create_root(args.subject, now, now + args.days * DAY)
    ca.save(os.path.join(args.dir, "authority"))
    canonical.dump_file(os.path.join(args.dir, "cacert"), ca.credential.to_document())
    print(f"created authority {ca.credential.subject}")


def cmd_ca_issue(args):
    now = _now(args)
    path = os.path.join(args.dir, "authority")
    ca = CertificateAuthority.load(path)
    key = PrivateKey.generate()
    cred = ca.issue(args.subject, key.public_key(), now,
                    min(now + args.days * DAY, ca.credential.not_after), args.authority)
    ca.save(path)
    save_chain(args.out + ".chain", [cred, ca.credential])
    save_private_key(args.out + ".key", key)
    print(f"issued serial {cred.serial} to {cred.subject}")


def cmd_ca_crl(args):
    ca = CertificateAuthority.load(os.path.join(args.dir, "authority"))
    crl = ca.revocation_list([int(s) for s in args.revoke], _now(args))
    canonical.dump_file(args.out, crl.to_document())
    print(f"revocation list with {len(crl.revoked_serials)} serial(s) written to {args.out}")


def cmd_trusted_key(args):
    cred = load_chain(args.cred)[0]
    _print_doc({args.vo: {"scheme": cred.public_key.scheme, "key": cred.public_key.key.hex()}})


# -- VO server -------------------------------------------------------------------

def cmd_vo_init(args):
    reg = open_registry(args.store, args.vo, owner=args.owner)
    print(f"registry for VO {reg.vo} owned by {reg.owner} at {args.store}")


def _server_apps(config_path):
    cfg = load_config(config_path)
    anchors = load_trust_anchors(_rel(config_path, cfg["trust_anchors"]))
    crls = [RevocationList.from_document(canonical.load_file(_rel(config_path, p)))
            for p in cfg.get("revocation_lists", [])]
    reg = open_registry(_rel(config_path, cfg["store"]), cfg["vo"])
    cred = load_chain(_rel(config_path, cfg["credential"]))[0]
    key = load_private_key(_rel(config_path, cfg["key"]))
    policy = ServerPolicy(cfg["vo"], cfg.get("max_assertion_lifetime", DEFAULT_PROXY_LIFETIME),
                          cfg.get("clock_skew", 300), anchors, crls)
    attributes = AttributeServer(reg, cred, key, policy)
    admin = AdminService(reg, anchors, crls, policy.clock_skew)

    def app(method, path, query, body):
        if path == "/attributes":
            return attributes(method, path, query, body)
        return admin(method, path, query, body)
    return cfg, app


def cmd_serve(args):
    cfg, app = _server_apps(args.config)
    host, _, port = cfg.get("listen", "127.0.0.1:15000").rpartition(":")
    server = serve(app, host, int(port))
    print(f"serving VO {cfg['vo']} on {host}:{server.server_address[1]}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass


def cmd_serve_gate(args):
    cfg = load_config(args.config)
    host, _, port = cfg.get("listen", "127.0.0.1:2119").rpartition(":")
    server = serve(GatekeeperService(lambda: GateConfig.load(args.config)), host, int(port))
    print(f"gatekeeper listening on {host}:{server.server_address[1]}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass


# -- proxy tools -----------------------------------------------------------------

def _server_list(args):
    endpoints = args.server or []
    vos = args.voms or []
    if vos and not endpoints:
        raise FormatError("--voms needs at least one --server")
    if len(endpoints) not in (1, len(vos)):
        raise FormatError("give one --server for all VOs or one per --voms")
    subsets = {}
    order = []
    for i, spec in enumerate(vos):
        vo, _, fq = spec.partition(":")
        endpoint = endpoints[i] if len(endpoints) > 1 else endpoints[0]
        order.append((endpoint, vo))
        if fq:
            subsets.setdefault(vo, []).append(fq)
    for fq in args.subset or []:
        subsets.setdefault(Fqan.parse(fq).vo, []).append(fq)
    return [(endpoint, vo, subsets.get(vo)) for endpoint, vo in order]


def cmd_proxy_init(args):
    chain = load_chain(args.chain)
    key = load_private_key(args.key)
    extra = None
    if args.include_auth:
        with open(args.include_auth, "rb") as fh:
            extra = (os.path.basename(args.include_auth), fh.read())
    bundle = proxy_init(chain, key, _server_list(args), args.lifetime, extra, _now(args),
                        trusted_servers=_load_trusted(args.trusted))
    bundle.save(args.out)
    print(f"proxy written to {args.out}, valid until {bundle.proxy.not_after}")


def cmd_proxy_info(args):
    try:
        bundle = ProxyBundle.load(args.file)
    except VomsError as exc:
        raise FormatError(f"{args.file}: {exc}") from None
    report = proxy_info(bundle, _now(args), _load_trusted(args.trusted))
    if args.json:
        _print_doc(report)
    else:
        print(format_info(report))


# -- site tools ------------------------------------------------------------------

def cmd_lcas_eval(args):
    policy = SitePolicy.load(args.policy)
    bundle = ProxyBundle.load(args.proxy)
    job = JobSpec.from_document(load_config(args.job))
    decision = lcas_evaluate(policy, bundle.chain, extract_assertions(bundle.proxy), job,
                             _now(args))
    _print_doc(decision.to_document())
    return 0 if decision.allowed else 1


def cmd_lcmaps_map(args):
    policy = MappingPolicy.from_document(load_config(args.policy))
    bundle = ProxyBundle.load(args.proxy)
    now = _now(args)
    trusted = _load_trusted(args.trusted)
    assertions = extract_assertions(bundle.proxy)
    if trusted is not None:
        assertions = [a for a in assertions if verify_assertion(a, trusted, bundle.chain, now)]
    fqans = [f for a in assertions for f in a.fqans]
    local = lcmaps_map(policy, LeaseLedger(args.leasedir), end_entity(bundle.chain).subject,
                       fqans, now)
    _print_doc(local.to_document())


def cmd_gate(args):
    cfg = GateConfig.load(args.config)
    with open(args.proxy, "rb") as fh:
        bundle = fh.read()
    job = JobSpec.from_document(load_config(args.job))
    resp = gate_handle(cfg, GateRequest(bundle, job), _now(args))
    _print_doc(resp.to_document())
    return 0 if resp.allowed else 1


def cmd_mkgridmap(args):
    config = MkgridmapConfig.load(args.conf)
    data = mkgridmap_generate(config, http_userlist_fetcher(load_chain(args.chain),
                                                            load_private_key(args.key)))
    tmp = args.out + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, args.out)
    print(f"{len(data.splitlines())} entries written to {args.out}")


def cmd_demo(args):
    from .demo import run_demo

    result = run_demo()
    return 0 if result["allowed"].allowed and not result["denied"].allowed else 1


# -- admin -------------------------------------------------------------------------

def _admin_client(args):
    chain = load_chain(args.chain)
    key = load_private_key(args.key)
    if args.server:
        return AdminClient(args.server, chain, key)
    if not args.config:
        raise FormatError("admin needs --server or --config")
    _, app = _server_apps(args.config)
    return AdminClient("local:0", chain, key, LocalTransport({"local:0": app}))


def cmd_admin(args):
    c = _admin_client(args)
    verb = args.verb
    if verb == "create-group":
        path = Fqan.parse(args.group)
        if not path.groups:
            raise FormatError("cannot create the VO root")
        parents = [str(Fqan(path.vo, path.groups[:-1]))] + (args.also_parent or [])
        result = c.create_group(parents, path.groups[-1], args.forced)
    elif verb == "add-user":
        result = c.grant(args.subject, args.group)
    elif verb == "grant":
        schedule = schedule_from_document(json.loads(args.schedule)) if args.schedule else None
        if args.role:
            result = c.grant(args.subject, args.group, ROLE, args.role, schedule)
        elif args.capability:
            result = c.grant(args.subject, args.group, CAPABILITY, args.capability, schedule)
        else:
            result = c.grant(args.subject, args.group, MEMBERSHIP, None, schedule)
    elif verb == "revoke-grant":
        result = c.revoke_grant(args.id)
    elif verb == "delegate":
        result = c.delegate(args.subject, args.group)
    elif verb == "list-users":
        result = c.list_users()
    elif verb == "show-history":
        result = c.history(args.since)
    elif verb == "request":
        result = c.submit_request(args.groups)
    elif verb == "decide":
        result = c.decide(args.id, args.decision == "approve")
    elif verb == "userlist":
        result = c.userlist(args.fqan)
    else:  # pragma: no cover - argparse restricts verbs
        raise FormatError(f"unknown verb {verb}")
    _print_doc(result)


def build_parser():
    p = argparse.ArgumentParser(prog="vomskit", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, **kw):
        sp = sub.add_parser(name, **kw)
        sp.set_defaults(func=func)
        return sp

    ca = add("ca", None, help="minimal certificate authority")
    ca_sub = ca.add_subparsers(dest="ca_command", required=True)
    s = ca_sub.add_parser("init")
    s.set_defaults(func=cmd_ca_init)
    s.add_argument("--dir", required=True)
    s.add_argument("--subject", required=True)
    s.add_argument("--days", type=int, default=3650)
    s.add_argument("--now", type=int)
    s = ca_sub.add_parser("issue")
    s.set_defaults(func=cmd_ca_issue)
    s.add_argument("--dir", required=True)
    s.add_argument("--subject", required=True)
    s.add_argument("--out", required=True, help="output prefix (.chain and .key)")
    s.add_argument("--days", type=int, default=365)
    s.add_argument("--authority", action="store_true")
    s.add_argument("--now", type=int)
    s = ca_sub.add_parser("crl")
    s.set_defaults(func=cmd_ca_crl)
    s.add_argument("--dir", required=True)
    s.add_argument("--revoke", nargs="*", default=[])
    s.add_argument("--out", required=True)
    s.add_argument("--now", type=int)

    s = add("trusted-key", cmd_trusted_key, help="print a trusted-server key entry")
    s.add_argument("--cred", required=True)
    s.add_argument("--vo", required=True)

    s = add("vo-init", cmd_vo_init, help="create an empty VO registry")
    s.add_argument("--store", required=True)
    s.add_argument("--vo", required=True)
    s.add_argument("--owner", required=True)

    s = add("serve", cmd_serve, help="run the attribute and admin server for a VO")
    s.add_argument("--config", required=True)
    s = add("serve-gate", cmd_serve_gate, help="run the gatekeeper service")
    s.add_argument("--config", required=True)

    s = add("proxy-init", cmd_proxy_init, help="create a proxy carrying VO attributes")
    s.add_argument("--server", action="append", help="host:port (repeat to pair with --voms)")
    s.add_argument("--voms", action="append", help="VO[:FQAN]")
    s.add_argument("--lifetime", type=int, default=DEFAULT_PROXY_LIFETIME)
    s.add_argument("--subset", action="append", help="FQAN to request (default: all)")
    s.add_argument("--include-auth", metavar="FILE")
    s.add_argument("--trusted", metavar="FILE", help="trusted server keys (JSON)")
    s.add_argument("--chain", required=True)
    s.add_argument("--key", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--now", type=int)

    s = add("proxy-info", cmd_proxy_info, help="describe a proxy file")
    s.add_argument("--file", required=True)
    s.add_argument("--trusted", metavar="FILE")
    s.add_argument("--json", action="store_true")
    s.add_argument("--now", type=int)

    s = add("lcas-eval", cmd_lcas_eval, help="evaluate a site policy for a proxy and job")
    s.add_argument("--policy", required=True)
    s.add_argument("--proxy", required=True)
    s.add_argument("--job", required=True)
    s.add_argument("--now", type=int)

    s = add("lcmaps-map", cmd_lcmaps_map, help="map a proxy to a local account")
    s.add_argument("--policy", required=True)
    s.add_argument("--leasedir", required=True)
    s.add_argument("--proxy", required=True)
    s.add_argument("--trusted", metavar="FILE")
    s.add_argument("--now", type=int)

    s = add("gate", cmd_gate, help="run one request through the gatekeeper offline")
    s.add_argument("--config", required=True)
    s.add_argument("--proxy", required=True)
    s.add_argument("--job", required=True)
    s.add_argument("--now", type=int)

    s = add("mkgridmap", cmd_mkgridmap, help="generate a grid-mapfile")
    s.add_argument("--conf", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--chain", required=True)
    s.add_argument("--key", required=True)

    add("demo", cmd_demo, help="run the scripted end-to-end scenario")

    s = add("admin", cmd_admin, help="VO administration")
    s.add_argument("--server", help="host:port of the VO server")
    s.add_argument("--config", help="operate on a local server config instead")
    s.add_argument("--chain", required=True)
    s.add_argument("--key", required=True)
    verbs = s.add_subparsers(dest="verb", required=True)
    v = verbs.add_parser("create-group")
    v.add_argument("group", help="full path, e.g. /datagrid/wp6")
    v.add_argument("--also-parent", action="append")
    v.add_argument("--forced", action="store_true")
    v = verbs.add_parser("add-user")
    v.add_argument("subject")
    v.add_argument("--group", default=None)
    v = verbs.add_parser("grant")
    v.add_argument("subject")
    v.add_argument("group")
    v.add_argument("--role")
    v.add_argument("--capability")
    v.add_argument("--schedule", help="schedule document as JSON")
    v = verbs.add_parser("revoke-grant")
    v.add_argument("id", type=int)
    v = verbs.add_parser("delegate")
    v.add_argument("subject")
    v.add_argument("group")
    verbs.add_parser("list-users")
    v = verbs.add_parser("show-history")
    v.add_argument("--since", type=int, default=0)
    v = verbs.add_parser("request")
    v.add_argument("groups", nargs="+")
    v = verbs.add_parser("decide")
    v.add_argument("id", type=int)
    v.add_argument("decision", choices=["approve", "reject"])
    v = verbs.add_parser("userlist")
    v.add_argument("fqan")
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args) or 0
    except DeniedError as exc:
        print(f"vomskit: denied ({exc.code}): {exc}", file=sys.stderr)
        return 1
    except (FormatError, TransportError) as exc:
        print(f"vomskit: {exc.code}: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"vomskit: {exc}", file=sys.stderr)
        return 2
    except VomsError as exc:
        print(f"vomskit: {exc.code}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
