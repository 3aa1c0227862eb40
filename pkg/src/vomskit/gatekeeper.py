"""The gatekeeper: validate -> extract attributes -> authorize -> map.

Any stage failure ends the pipeline with ``allowed=False`` and the stage name
recorded.  A proxy without VO attributes (or any proxy, when the gatekeeper
runs VOMS-unaware) must be listed in the grid-mapfile.
"""

import logging
import os
import time
from dataclasses import dataclass, field

from . import canonical
from .authority import verify_assertion
from .chain import ValidationReport, end_entity, load_trust_anchors, validate_chain
from .credentials import RevocationList
from .errors import FormatError, MalformedDocument, MalformedPayload, MalformedRequest, NoMappingRule, PoolExhausted
from .gridmap import GridMapfile
from .lcas import Decision, JobSpec, SitePolicy, lcas_evaluate, load_config
from .lcmaps import LeaseLedger, LocalCredential, MappingPolicy, lcmaps_map
from .proxytool import ProxyBundle, extract_assertions

log = logging.getLogger(__name__)

SUBMIT_PATH = "/submit"

VALIDATION = "validation"
EXTRACTION = "extraction"
GRIDMAP = "gridmap"
AUTHORIZATION = "authorization"
MAPPING = "mapping"
DONE = "done"


@dataclass(frozen=True)
class GateRequest:
    proxy_bundle: bytes
    job: JobSpec

    def to_bytes(self):
        return canonical.dumps({"type": "gate-request", "proxy_bundle": self.proxy_bundle,
                                "job": self.job.to_document()})

    @classmethod
    def from_bytes(cls, data):
        try:
            doc = canonical.loads(data)
            if not isinstance(doc, dict) or set(doc) != {"type", "proxy_bundle", "job"} \
                    or doc["type"] != "gate-request":
                raise MalformedDocument("not a gate request")
            return cls(canonical.unhex(doc["proxy_bundle"]), JobSpec.from_document(doc["job"]))
        except (MalformedDocument, TypeError, ValueError) as exc:
            raise MalformedRequest(f"unreadable gate request: {exc}") from None


@dataclass(frozen=True)
class GateResponse:
    allowed: bool
    stage: str
    local: LocalCredential = None
    decision: Decision = None
    validation: ValidationReport = None
    detail: str = ""

    def __post_init__(self):
        if (self.local is not None) != self.allowed:
            raise ValueError("a local credential is returned exactly when allowed")

    @property
    def decision_trace(self):
        return self.decision.trace if self.decision else ()

    def to_document(self):
        doc = {"allowed": self.allowed, "stage": self.stage, "detail": self.detail,
               "trace": Decision(False, self.decision_trace).to_document()["trace"]}
        if self.local is not None:
            doc["local"] = self.local.to_document()
        if self.validation is not None:
            doc["validation"] = self.validation.to_document()
        return doc


@dataclass
class GateConfig:
    trust_anchors: list
    site_policy: SitePolicy
    mapping_policy: MappingPolicy
    ledger: LeaseLedger
    revocation_lists: list = field(default_factory=list)
    voms_aware: bool = True
    gridmapfile: GridMapfile = None

    @classmethod
    def load(cls, path):
        """Read a gatekeeper config; relative paths resolve against its directory."""
        doc = load_config(path)
        base = os.path.dirname(os.path.abspath(path))

        def rel(p):
            return os.path.join(base, p)

        crls = [RevocationList.from_document(canonical.load_file(rel(p)))
                for p in doc.get("revocation_lists", [])]
        gridmap = doc.get("gridmapfile")
        return cls(
            trust_anchors=load_trust_anchors(rel(doc["trust_anchors"])),
            site_policy=SitePolicy.load(rel(doc["site_policy"])),
            mapping_policy=MappingPolicy.from_document(load_config(rel(doc["mapping_policy"]))),
            ledger=LeaseLedger(rel(doc["leasedir"])),
            revocation_lists=crls,
            voms_aware=bool(doc.get("voms_aware", True)),
            gridmapfile=GridMapfile.load(rel(gridmap)) if gridmap else None,
        )


def _deny(stage, detail, decision=None, validation=None):
    log.info("gate denied at %s: %s", stage, detail)
    return GateResponse(False, stage, None, decision, validation, detail)


def gate_handle(cfg, req, now=None):
    now = int(time.time()) if now is None else now
    try:
        bundle = ProxyBundle.from_bytes(req.proxy_bundle)
    except FormatError as exc:
        raise MalformedRequest(f"unreadable proxy bundle: {exc}") from None
    chain = bundle.chain

    report = validate_chain(chain, cfg.trust_anchors, cfg.revocation_lists, now)
    if not report:
        return _deny(VALIDATION, f"{report.rule}: {report.detail}", validation=report)
    subject = end_entity(chain).subject

    assertions = []
    if cfg.voms_aware:
        try:
            assertions = extract_assertions(chain[0])
        except MalformedPayload as exc:
            return _deny(EXTRACTION, str(exc), validation=report)

    if not assertions and (cfg.gridmapfile is None or subject not in cfg.gridmapfile):
        return _deny(GRIDMAP, f"{subject} presents no VO attributes and is not in the grid-mapfile",
                     validation=report)

    decision = lcas_evaluate(cfg.site_policy, chain, assertions, req.job, now, cfg.gridmapfile)
    if not decision.allowed:
        return _deny(AUTHORIZATION, "site policy denied the request", decision, report)

    fqans = [f for a in assertions
             if verify_assertion(a, cfg.site_policy.trusted_servers, chain, now)
             for f in a.fqans]
    try:
        local = lcmaps_map(cfg.mapping_policy, cfg.ledger, subject, fqans, now, cfg.gridmapfile)
    except (NoMappingRule, PoolExhausted) as exc:
        return _deny(MAPPING, str(exc), decision, report)
    log.info("gate allowed %s as %s", subject, local.account)
    return GateResponse(True, DONE, local, decision, report)


class GatekeeperService:
    """HTTP-style app serving ``POST /submit``.

    ``config`` is either a :class:`GateConfig` or a zero-argument callable
    returning one (re-read per request, so policy edits apply immediately).
    """

    def __init__(self, config, clock=None):
        self._config = config
        self.clock = clock or time.time

    @property
    def config(self):
        return self._config() if callable(self._config) else self._config

    def __call__(self, method, path, query, body):
        if path != SUBMIT_PATH or method != "POST":
            return 404, canonical.dumps({"code": "NOT_FOUND", "detail": path})
        try:
            resp = gate_handle(self.config, GateRequest.from_bytes(body), int(self.clock()))
        except FormatError as exc:
            return 400, canonical.dumps({"code": exc.code, "detail": str(exc)})
        return (200 if resp.allowed else 403), canonical.dumps(resp.to_document())
