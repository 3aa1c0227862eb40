import random

import pytest

import oracles
from conftest import NOW, OWNER, datagrid_registry
from vomskit.errors import (
    AlreadyDecided,
    ConflictError,
    CycleWouldForm,
    DuplicateName,
    MalformedDocument,
    NotAuthorized,
    UnknownRequest,
    UnknownScope,
)
from vomskit.fqan import Fqan
from vomskit.registry import (
    CAPABILITY,
    ROLE,
    Grant,
    Registry,
    dump_audit,
    open_registry,
    parse_audit,
    verify_audit_bytes,
    verify_audit_chain,
)
from vomskit.schedule import Weekly, Window, weekdays

MARIO = "/C=IT/O=INFN/CN=Mario Rossi"
ANNA = "/C=IT/O=INFN/CN=Anna Bianchi"
WEDNESDAY_10 = 1048672800
SATURDAY_10 = 1048932000


def strs(fqans):
    return [str(f) for f in fqans]


def test_group_paths(registry):
    assert str(registry.group_fqan(registry.resolve("/datagrid/wp6/admin"))) == "/datagrid/wp6/admin"
    with pytest.raises(UnknownScope):
        registry.resolve("/datagrid/nope")
    with pytest.raises(UnknownScope):
        registry.resolve("/cms/wp6")
    with pytest.raises(DuplicateName):
        registry.create_group(OWNER, ["/datagrid"], "wp6")


def test_membership_propagates_upwards(registry):
    registry.grant(OWNER, Grant(MARIO, "/datagrid/wp6/admin"))
    assert strs(registry.effective_attributes(MARIO, NOW)) == [
        "/datagrid", "/datagrid/wp6", "/datagrid/wp6/admin"]
    assert registry.effective_attributes(ANNA, NOW) == []


def test_role_needs_membership(registry):
    registry.grant(OWNER, Grant(MARIO, "/datagrid/wp6", ROLE, "admin"))
    assert registry.effective_attributes(MARIO, NOW) == []
    registry.grant(OWNER, Grant(MARIO, "/datagrid/wp6"))
    registry.grant(OWNER, Grant(MARIO, "/datagrid/wp6", CAPABILITY, "cpu=10"))
    assert strs(registry.effective_attributes(MARIO, NOW)) == [
        "/datagrid", "/datagrid/wp6", "/datagrid/wp6/Capability=cpu=10", "/datagrid/wp6/Role=admin"]


def test_role_does_not_propagate(registry):
    registry.grant(OWNER, Grant(MARIO, "/datagrid/wp6/admin"))
    registry.grant(OWNER, Grant(MARIO, "/datagrid/wp6/admin", ROLE, "lead"))
    attrs = strs(registry.effective_attributes(MARIO, NOW))
    assert "/datagrid/wp6/admin/Role=lead" in attrs
    assert "/datagrid/wp6/Role=lead" not in attrs


def test_diamond():
    reg = Registry("vo", OWNER)
    reg.create_group(OWNER, ["/vo"], "a", now=NOW)
    reg.create_group(OWNER, ["/vo"], "b", now=NOW)
    d = reg.create_group(OWNER, ["/vo/a", "/vo/b"], "d", now=NOW)
    assert str(reg.group_fqan(d.id)) == "/vo/a/d"
    reg.grant(OWNER, Grant(MARIO, d.id), now=NOW)
    assert strs(reg.effective_attributes(MARIO, NOW)) == ["/vo", "/vo/a", "/vo/a/d", "/vo/b"]
    with pytest.raises(CycleWouldForm):
        reg.add_parent(OWNER, "/vo/a", "/vo/a/d", now=NOW)
    with pytest.raises(CycleWouldForm):
        reg.add_parent(OWNER, "/vo/a", "/vo/a", now=NOW)


def test_scheduled_grant(registry):
    registry.grant(OWNER, Grant(MARIO, "/datagrid/wp6",
                                schedule=Weekly(weekdays("Mon", "Tue", "Wed", "Thu", "Fri"), 540, 1020)))
    assert "/datagrid/wp6" in strs(registry.effective_attributes(MARIO, WEDNESDAY_10))
    assert registry.effective_attributes(MARIO, SATURDAY_10) == []
    registry.grant(OWNER, Grant(ANNA, "/datagrid", schedule=Window(100, 200)))
    assert registry.effective_attributes(ANNA, 199) and not registry.effective_attributes(ANNA, 200)


def test_delegation(registry):
    with pytest.raises(NotAuthorized):
        registry.grant(ANNA, Grant(MARIO, "/datagrid/wp6"))
    registry.delegate(OWNER, ANNA, "/datagrid/wp6")
    registry.grant(ANNA, Grant(MARIO, "/datagrid/wp6/admin"))
    assert registry.authorize_admin(ANNA, registry.resolve("/datagrid/wp6/admin"))
    assert not registry.authorize_admin(ANNA, registry.resolve("/datagrid"))
    with pytest.raises(NotAuthorized):
        registry.grant(ANNA, Grant(MARIO, "/datagrid"))
    assert registry.is_admin(ANNA) and not registry.is_admin(MARIO)
    registry.revoke_delegation(OWNER, ANNA, "/datagrid/wp6")
    assert not registry.is_admin(ANNA)


def test_revoke_and_delete(registry):
    g = registry.grant(OWNER, Grant(MARIO, "/datagrid/wp6/admin"))
    with pytest.raises(ConflictError):
        registry.delete_group(OWNER, "/datagrid/wp6")
    registry.revoke_grant(OWNER, g.id)
    assert registry.effective_attributes(MARIO, NOW) == []
    registry.grant(OWNER, Grant(MARIO, "/datagrid/wp6/admin"))
    registry.delete_group(OWNER, "/datagrid/wp6/admin")
    assert registry.effective_attributes(MARIO, NOW) == []
    with pytest.raises(NotAuthorized):
        registry.delete_group(OWNER, "/datagrid")


def test_requests(registry):
    req = registry.submit_request(MARIO, ["/datagrid/wp6"])
    assert req.state == "pending"
    assert registry.effective_attributes(MARIO, NOW) == []
    with pytest.raises(NotAuthorized):
        registry.decide_request(MARIO, req.id, True)
    done = registry.decide_request(OWNER, req.id, True)
    assert done.state == "approved" and str(done.decided_by) == OWNER
    assert strs(registry.effective_attributes(MARIO, NOW)) == ["/datagrid", "/datagrid/wp6"]
    with pytest.raises(AlreadyDecided):
        registry.decide_request(OWNER, req.id, False)
    with pytest.raises(UnknownRequest):
        registry.decide_request(OWNER, 99, True)
    rejected = registry.decide_request(OWNER, registry.submit_request(ANNA, ["/datagrid"]).id, False)
    assert rejected.state == "rejected" and registry.effective_attributes(ANNA, NOW) == []


def test_forced_and_holders(registry):
    registry.grant(OWNER, Grant(MARIO, "/datagrid/banned-watch"))
    registry.grant(OWNER, Grant(ANNA, "/datagrid/wp6"))
    assert strs(registry.forced_attributes(MARIO, NOW)) == ["/datagrid/banned-watch"]
    assert registry.forced_attributes(ANNA, NOW) == []
    assert [str(u) for u in registry.holders_of("/datagrid", NOW)] == [ANNA, MARIO]
    assert [str(u) for u in registry.holders_of("/datagrid/wp6", NOW)] == [ANNA]


def random_registry(rng, n_groups=12, n_users=5, n_grants=15, extra_edges=8):
    """Build a random registry; returns it with an independent parent map and grant list."""
    reg = Registry("vo", OWNER, clock=lambda: NOW)
    parents = {0: []}
    for _ in range(n_groups):
        existing = list(parents)
        ps = rng.sample(existing, rng.randint(1, min(3, len(existing))))
        node = reg.create_group(OWNER, ps, f"g{len(parents)}")
        parents[node.id] = list(ps)
    for _ in range(extra_edges):
        child, parent = rng.sample(list(parents), 2)
        trial = {k: list(v) for k, v in parents.items()}
        trial[child].append(parent)
        if parent in parents[child]:
            continue
        try:
            reg.add_parent(OWNER, child, parent)
        except CycleWouldForm:
            assert oracles.has_cycle(trial)
            continue
        except DuplicateName:
            continue
        assert not oracles.has_cycle(trial)
        parents[child].append(parent)
    users = [f"/O=Grid/CN=user{i}" for i in range(n_users)]
    memberships = {u: set() for u in users}
    for _ in range(n_grants):
        u = rng.choice(users)
        g = rng.choice(list(parents))
        reg.grant(OWNER, Grant(u, g))
        memberships[u].add(g)
    return reg, parents, memberships


def test_closure_against_oracle():
    rng = random.Random(3)
    for _ in range(30):
        reg, parents, memberships = random_registry(rng)
        assert not oracles.has_cycle(parents)
        for user, direct in memberships.items():
            expected = {str(reg.group_fqan(g)) for g in oracles.ancestor_closure(parents, direct)}
            assert set(strs(reg.effective_attributes(user, NOW))) == expected


def test_audit_chain_and_tamper(registry):
    registry.grant(OWNER, Grant(MARIO, "/datagrid/wp6"))
    records = list(registry.audit)
    assert verify_audit_chain(records)
    data = dump_audit("datagrid", records)
    assert verify_audit_bytes(data, "datagrid")
    assert not verify_audit_bytes(data, "cms")
    vo, parsed = parse_audit(data)
    assert parsed == records
    assert not verify_audit_chain(records[1:])
    assert not verify_audit_chain(records[:1] + records[2:])
    swapped = records[:]
    swapped[1], swapped[2] = swapped[2], swapped[1]
    assert not verify_audit_chain(swapped)
    rng = random.Random(5)
    for _ in range(200):
        mutated = bytearray(data)
        i = rng.randrange(len(mutated))
        mutated[i] ^= 1 << rng.randrange(8)
        assert not verify_audit_bytes(bytes(mutated), "datagrid")


def test_replay_equivalence():
    rng = random.Random(9)
    reg, _, _ = random_registry(rng)
    reg.submit_request("/CN=late", ["/vo/g1"], now=NOW)
    reg.decide_request(OWNER, 0, True, now=NOW)
    reg.delegate(OWNER, "/CN=deputy", "/vo/g2", now=NOW)
    again = Registry.replay("vo", OWNER, list(reg.audit))
    assert again.snapshot_document() == reg.snapshot_document()
    for user in reg.users():
        assert again.effective_attributes(user, NOW) == reg.effective_attributes(user, NOW)


def test_unknown_action_rejected():
    reg = Registry("vo", OWNER)
    with pytest.raises(MalformedDocument):
        reg._apply("explode", {})


def test_persistence(tmp_path):
    reg = open_registry(tmp_path, "datagrid", OWNER, clock=lambda: NOW)
    reg.create_group(OWNER, ["/datagrid"], "wp6")
    reg.grant(OWNER, Grant(MARIO, "/datagrid/wp6"))
    again = open_registry(tmp_path, "datagrid")
    assert again.snapshot_document() == reg.snapshot_document()
    again.grant(OWNER, Grant(ANNA, "/datagrid"))
    # a stale snapshot is recovered by replaying the audit file
    stale = (tmp_path / "datagrid.registry").read_bytes()
    again.grant(OWNER, Grant(ANNA, "/datagrid/wp6"))
    (tmp_path / "datagrid.registry").write_bytes(stale)
    third = open_registry(tmp_path, "datagrid")
    assert strs(third.effective_attributes(ANNA, NOW)) == ["/datagrid", "/datagrid/wp6"]
    # corrupting the audit log is detected
    audit = tmp_path / "datagrid.audit"
    audit.write_bytes(audit.read_bytes().replace(b"Anna", b"Anne"))
    with pytest.raises(MalformedDocument):
        open_registry(tmp_path, "datagrid")


def test_missing_store(tmp_path):
    with pytest.raises(FileNotFoundError):
        open_registry(tmp_path, "nothing")


def test_users_sorted_and_grants(registry):
    registry.grant(OWNER, Grant(MARIO, "/datagrid"))
    registry.grant(OWNER, Grant(ANNA, "/datagrid"))
    assert [str(u) for u in registry.users()] == [ANNA, MARIO]
    assert [g.scope for g in registry.grants_of(MARIO)] == [0]
    assert registry.holders_of(Fqan("datagrid"), NOW)


def test_two_instances_share_a_store(tmp_path):
    first = open_registry(tmp_path, "datagrid", OWNER, clock=lambda: NOW)
    first.create_group(OWNER, ["/datagrid"], "wp6")
    second = open_registry(tmp_path, "datagrid", clock=lambda: NOW)
    second.grant(OWNER, Grant(MARIO, "/datagrid/wp6"))
    # the first instance sees the other writer's record before reading or writing
    assert strs(first.effective_attributes(MARIO, NOW)) == ["/datagrid", "/datagrid/wp6"]
    first.grant(OWNER, Grant(ANNA, "/datagrid"))
    assert [str(u) for u in second.users()] == [ANNA, MARIO]
    reloaded = open_registry(tmp_path, "datagrid")
    assert verify_audit_chain(list(reloaded.audit)) and len(reloaded.audit) == 3
    assert reloaded.snapshot_document() == first.snapshot_document() == second.snapshot_document()
