"""Site authorization: an ordered chain of named plugins with AND semantics.

Plugins are registered in-process by name.  A chain runs in order, stops at
the first deny, and an empty chain denies.  A plugin that raises counts as a
deny and the fault is recorded in the trace.
"""

import json
import logging
import time
from dataclasses import dataclass, field

from .authority import verify_assertion
from .chain import end_entity
from .errors import ConfigurationError, MalformedDocument, UnknownMethod
from .fqan import FqanPattern
from .keys import PublicKey
from .names import as_subject
from .schedule import schedule_from_document

log = logging.getLogger(__name__)

PERMIT = "permit"
DENY = "deny"


@dataclass(frozen=True)
class JobSpec:
    executable: str
    requested_wallclock_seconds: int
    queue: str = "default"
    attributes: dict = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.requested_wallclock_seconds, int) \
                or self.requested_wallclock_seconds <= 0:
            raise ValueError("requested_wallclock_seconds must be a positive integer")

    def to_document(self):
        return {"executable": self.executable,
                "requested_wallclock_seconds": self.requested_wallclock_seconds,
                "queue": self.queue, "attributes": dict(self.attributes)}

    @classmethod
    def from_document(cls, doc):
        try:
            return cls(doc["executable"], doc["requested_wallclock_seconds"],
                       doc.get("queue", "default"), dict(doc.get("attributes", {})))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedDocument(f"bad job description: {exc}") from None


@dataclass(frozen=True)
class Verdict:
    permit: bool
    reason: str = ""

    @property
    def label(self):
        return PERMIT if self.permit else DENY


@dataclass(frozen=True)
class RequestContext:
    """Everything a plugin may look at."""

    chain: tuple
    assertions: tuple
    job: JobSpec
    now: int
    trusted_servers: dict
    gridmap: object = None

    @property
    def subject(self):
        return end_entity(self.chain).subject

    @property
    def presented_fqans(self):
        return [f for a in self.assertions for f in a.fqans]


@dataclass(frozen=True)
class Decision:
    allowed: bool
    trace: tuple = ()

    def to_document(self):
        return {"allowed": self.allowed,
                "trace": [{"plugin": p, "verdict": v, "reason": r} for p, v, r in self.trace]}


class FqanAcl:
    """Ordered ``(pattern, effect)`` rules; first match per FQAN, default deny.

    Over a set of FQANs, any FQAN whose first match is a deny rule denies the
    whole set; otherwise the set is permitted if some FQAN hit a permit rule.
    """

    def __init__(self, rules):
        self.rules = []
        for pattern, effect in rules:
            if effect not in (PERMIT, DENY):
                raise ValueError(f"bad ACL effect {effect!r}")
            p = pattern if isinstance(pattern, FqanPattern) else FqanPattern.parse(pattern)
            self.rules.append((p, effect))

    @classmethod
    def from_document(cls, doc):
        return cls((r["pattern"], r["effect"]) for r in doc)

    def first_match(self, fqan):
        for pattern, effect in self.rules:
            if pattern.matches(fqan):
                return pattern, effect
        return None, None

    def evaluate(self, fqans):
        permitted = None
        for fqan in fqans:
            pattern, effect = self.first_match(fqan)
            if effect == DENY:
                return Verdict(False, f"{fqan} denied by {pattern}")
            if effect == PERMIT and permitted is None:
                permitted = Verdict(True, f"{fqan} permitted by {pattern}")
        return permitted or Verdict(False, "no ACL rule permits the presented attributes")


PLUGINS = {}


def register_plugin(name):
    """Register ``factory(config) -> evaluator(ctx) -> Verdict`` under ``name``.

    The factory validates its configuration at policy-load time and should
    raise ``ValueError``/``KeyError`` on bad input.
    """
    def deco(factory):
        PLUGINS[name] = factory
        return factory
    return deco


def _verified(ctx):
    ok, bad = [], []
    for a in ctx.assertions:
        (ok if verify_assertion(a, ctx.trusted_servers, ctx.chain, ctx.now) else bad).append(a)
    return ok, bad


@register_plugin("blacklist")
def plugin_blacklist(config):
    banned = {as_subject(s) for s in config.get("banned_subjects", [])}
    patterns = [FqanPattern.parse(p) for p in config.get("banned_fqan_patterns", [])]

    def evaluate(ctx):
        if ctx.subject in banned:
            return Verdict(False, f"subject {ctx.subject} is banned")
        for fqan in ctx.presented_fqans:
            for p in patterns:
                if p.matches(fqan):
                    return Verdict(False, f"{fqan} matches banned pattern {p}")
        return Verdict(True, "not blacklisted")
    return evaluate


@register_plugin("wallclock")
def plugin_wallclock(config):
    max_seconds = int(config["max_seconds"])
    window = config.get("allowed_window")
    window = schedule_from_document(window) if window is not None else None

    def evaluate(ctx):
        if ctx.job.requested_wallclock_seconds > max_seconds:
            return Verdict(False, f"requested {ctx.job.requested_wallclock_seconds}s "
                                  f"exceeds limit {max_seconds}s")
        if window is not None and not window.active(ctx.now):
            return Verdict(False, "submission outside the allowed window")
        return Verdict(True, "within wall-clock limits")
    return evaluate


@register_plugin("voms")
def plugin_voms(config):
    acl = FqanAcl.from_document(config.get("acl", []))
    require = bool(config.get("require_assertion", True))

    def evaluate(ctx):
        verified, invalid = _verified(ctx)
        if invalid and require:
            return Verdict(False, f"{len(invalid)} assertion(s) failed verification")
        if verified:
            return acl.evaluate([f for a in verified for f in a.fqans])
        if ctx.gridmap is not None and ctx.subject in ctx.gridmap:
            return Verdict(True, "listed in grid-mapfile")
        if require:
            return Verdict(False, "no valid VO assertion presented")
        return Verdict(True, "no assertion; abstaining")
    return evaluate


def _trusted_from_document(doc):
    return {vo: PublicKey.from_document(k) for vo, k in (doc or {}).items()}


@dataclass(frozen=True)
class PluginSpec:
    name: str
    config: dict
    evaluator: object = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class SitePolicy:
    plugins: tuple = ()
    trusted_servers: dict = field(default_factory=dict)

    @classmethod
    def build(cls, specs, trusted_servers=None):
        """Instantiate ``[(name, config), ...]``; unknown or duplicate names are errors."""
        plugins, seen = [], set()
        for name, config in specs:
            if name not in PLUGINS:
                raise ConfigurationError(f"unknown plugin {name!r}")
            if name in seen:
                raise ConfigurationError(f"plugin {name!r} listed twice")
            seen.add(name)
            try:
                evaluator = PLUGINS[name](config)
            except (KeyError, TypeError, ValueError, MalformedDocument) as exc:
                raise ConfigurationError(f"bad config for plugin {name!r}: {exc}") from None
            plugins.append(PluginSpec(name, config, evaluator))
        return cls(tuple(plugins), dict(trusted_servers or {}))

    @classmethod
    def from_document(cls, doc):
        try:
            specs = [(p["name"], p.get("config", {})) for p in doc["plugins"]]
            trusted = _trusted_from_document(doc.get("trusted_servers"))
        except (KeyError, TypeError, MalformedDocument) as exc:
            raise ConfigurationError(f"bad site policy: {exc}") from None
        return cls.build(specs, trusted)

    def to_document(self):
        return {"plugins": [{"name": p.name, "config": p.config} for p in self.plugins],
                "trusted_servers": {vo: k.to_document() for vo, k in self.trusted_servers.items()}}

    @classmethod
    def load(cls, path):
        return cls.from_document(load_config(path))


def load_config(path):
    """Read a JSON configuration document (canonical form is not required)."""
    with open(path, "rb") as fh:
        try:
            return json.loads(fh.read())
        except ValueError as exc:
            raise ConfigurationError(f"{path}: {exc}") from None


def lcas_evaluate(policy, chain, assertions, job, now=None, gridmap=None):
    """Run the plugin chain; stop at the first deny."""
    now = int(time.time()) if now is None else now
    ctx = RequestContext(tuple(chain), tuple(assertions), job, now, policy.trusted_servers,
                         gridmap)
    trace = []
    for plugin in policy.plugins:
        try:
            verdict = plugin.evaluator(ctx)
        except Exception as exc:  # any plugin crash is a deny
            log.exception("plugin %s crashed", plugin.name)
            verdict = Verdict(False, f"plugin fault: {type(exc).__name__}: {exc}")
        trace.append((plugin.name, verdict.label, verdict.reason))
        if not verdict.permit:
            return Decision(False, tuple(trace))
    return Decision(bool(trace), tuple(trace))


@dataclass(frozen=True)
class ServicePolicy:
    """Coarse-grained per-method authorization for a service.

    ``methods`` maps a method name to FQAN patterns, any one of which
    suffices; ``"*"`` is the default for unlisted methods.
    """

    methods: dict
    trusted_servers: dict = field(default_factory=dict)
    gridmap_fallback: object = None

    @classmethod
    def build(cls, methods, trusted_servers=None, gridmap_fallback=None):
        parsed = {m: tuple(FqanPattern.parse(p) for p in pats) for m, pats in methods.items()}
        return cls(parsed, dict(trusted_servers or {}), gridmap_fallback)


def service_authorize(policy, chain, assertions, method, now=None):
    """Return ``"permit"`` or ``"deny"`` for calling ``method``."""
    now = int(time.time()) if now is None else now
    required = policy.methods.get(method, policy.methods.get("*"))
    if required is None:
        raise UnknownMethod(f"no authorization rule for method {method!r}")
    for a in assertions:
        if not verify_assertion(a, policy.trusted_servers, chain, now):
            continue
        if any(p.matches(f) for f in a.fqans for p in required):
            return PERMIT
    gridmap = policy.gridmap_fallback
    if gridmap is not None and end_entity(chain).subject in gridmap:
        return PERMIT
    return DENY
