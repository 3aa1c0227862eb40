import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from vomskit.errors import MalformedDocument
from vomskit.fqan import Fqan, FqanPattern
from vomskit.schedule import (
    Always,
    Union,
    Weekly,
    Window,
    schedule_active,
    schedule_from_document,
    weekdays,
)

# 2003-03-26T10:00Z (Wednesday) and 2003-03-29T10:00Z (Saturday), from the civil-date oracle
WEDNESDAY_10 = 1048672800
SATURDAY_10 = 1048932000

segment = st.from_regex(r"[A-Za-z0-9._-]{1,8}", fullmatch=True).filter(
    lambda s: not s.startswith(("Role=", "Capability=")))


def test_frozen_dates_match_oracle():
    assert oracles.utc_timestamp(2003, 3, 26, 10) == WEDNESDAY_10
    assert oracles.utc_timestamp(2003, 3, 29, 10) == SATURDAY_10
    assert oracles.sakamoto_weekday(2003, 3, 26) == 2
    assert oracles.sakamoto_weekday(2003, 3, 29) == 5


@given(segment, st.lists(segment, max_size=4), st.none() | segment,
       st.none() | st.text(st.characters(blacklist_characters="/", blacklist_categories=("Cs",)),
                           min_size=1, max_size=30))
def test_fqan_round_trip(vo, groups, role, cap):
    f = Fqan(vo, tuple(groups), role, cap)
    assert Fqan.parse(str(f)) == f


@pytest.mark.parametrize("text", ["", "datagrid", "/", "/dg//x", "/dg/Role=a/Role=b",
                                  "/dg/Capability=c/Role=a", "/dg/Role=a/g", "/dg/Capability=",
                                  "/dg/g h"])
def test_fqan_rejects(text):
    with pytest.raises(ValueError):
        Fqan.parse(text)


def test_capability_limit():
    Fqan("dg", capability="x" * 255)
    with pytest.raises(ValueError):
        Fqan("dg", capability="x" * 256)


def test_fqan_forms():
    f = Fqan.parse("/datagrid/wp6/Role=admin")
    assert f.group == Fqan("datagrid", ("wp6",))
    assert not f.is_membership
    assert str(f.with_capability("cpu")) == "/datagrid/wp6/Role=admin/Capability=cpu"


@pytest.mark.parametrize("pattern, fqan, expected", [
    ("/datagrid/*", "/datagrid", True),
    ("/datagrid/*", "/datagrid/wp6/Role=admin", True),
    ("/datagrid/wp6/*", "/datagrid/wp60", False),
    ("/datagrid/wp6", "/datagrid/wp6", True),
    ("/datagrid/wp6", "/datagrid/wp6/admin", False),
    ("/cms/*", "/datagrid", False),
])
def test_pattern(pattern, fqan, expected):
    assert FqanPattern.parse(pattern).matches(Fqan.parse(fqan)) is expected


def test_weekly_frozen():
    s = Weekly(weekdays("Mon", "Tue", "Wed", "Thu", "Fri"), 540, 1020)
    assert s.active(WEDNESDAY_10)
    assert not s.active(SATURDAY_10)


def test_window_half_open():
    w = Window(100, 200)
    assert not w.active(99) and w.active(100) and w.active(199) and not w.active(200)
    with pytest.raises(ValueError):
        Window(5, 5)


def _random_spec(rng, depth=0):
    kind = rng.choice(["always", "window", "weekly", "union"] if depth < 2 else ["window", "weekly"])
    if kind == "always":
        return ("always",), Always()
    if kind == "window":
        a = rng.randint(0, 2_000_000_000)
        b = a + rng.randint(1, 10 * 86400)
        return ("window", a, b), Window(a, b)
    if kind == "weekly":
        days = frozenset(rng.sample(range(7), rng.randint(1, 7)))
        s = rng.randint(0, 1439)
        e = rng.randint(s + 1, 1440)
        return ("weekly", days, s, e), Weekly(days, s, e)
    members = [_random_spec(rng, depth + 1) for _ in range(rng.randint(1, 3))]
    return ("union", [m[0] for m in members]), Union(tuple(m[1] for m in members))


def test_schedules_against_brute_force():
    rng = random.Random(11)
    for _ in range(300):
        spec, sched = _random_spec(rng)
        again = schedule_from_document(sched.to_document())
        assert again == sched
        for _ in range(20):
            if spec[0] == "window" and rng.random() < 0.5:
                t = rng.choice([spec[1] - 1, spec[1], spec[2] - 1, spec[2]])
            else:
                t = rng.randint(0, 2_100_000_000)
            expected = oracles.brute_schedule(spec, t)
            assert schedule_active(sched, t) is expected
            assert again.active(t) is expected


@pytest.mark.parametrize("doc", [{"kind": "hourly"}, {"kind": "window", "start": 3},
                                 {"kind": "weekly", "days": ["Xyz"], "start_minute": 0,
                                  "end_minute": 10}, {}])
def test_bad_schedule_documents(doc):
    with pytest.raises(MalformedDocument):
        schedule_from_document(doc)
