from .audit import AuditLog, AuditRecord, dump_audit, parse_audit, verify_audit_bytes, verify_audit_chain
from .model import (
    CAPABILITY,
    MEMBERSHIP,
    ROLE,
    AdminDelegation,
    Grant,
    GroupNode,
    MembershipRequest,
)
from .registry import ROOT, Registry
from .store import RegistryStore, open_registry

__all__ = [
    "AuditLog", "AuditRecord", "dump_audit", "parse_audit", "verify_audit_bytes",
    "verify_audit_chain", "CAPABILITY", "MEMBERSHIP", "ROLE", "AdminDelegation", "Grant",
    "GroupNode", "MembershipRequest", "ROOT", "Registry", "RegistryStore", "open_registry",
]
