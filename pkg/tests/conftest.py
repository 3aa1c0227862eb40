import pytest

from vomskit.authority import AttributeServer, ServerPolicy
from vomskit.credentials import CertificateAuthority
from vomskit.keys import PrivateKey
from vomskit.registry import Registry

# 2004-11-09T08:53:20Z
NOW = 1_100_000_000
YEAR = 365 * 86400
OWNER = "/C=IT/O=INFN/CN=VO Owner"

_acceptance_lines = []


def record_criterion(number, title, passed, detail=""):
    status = "PASS" if passed else "FAIL"
    _acceptance_lines.append(f"[{status}] criterion {number}: {title}" + (f" ({detail})" if detail else ""))


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


class Pki:
    """A CA with a VOMS host credential and two users, all valid around NOW."""

    def __init__(self, now=NOW):
        self.now = now
        self.ca = CertificateAuthority.create_root("/C=IT/O=INFN/CN=INFN CA", now - YEAR, now + 10 * YEAR)
        self.host_key = PrivateKey.generate()
        self.host = self.ca.issue("/C=IT/O=INFN/CN=voms.example.org", self.host_key.public_key(),
                                  now - YEAR, now + YEAR)
        self.user_key = PrivateKey.generate()
        self.user = self.ca.issue("/C=IT/O=INFN/CN=Mario Rossi", self.user_key.public_key(),
                                  now - YEAR, now + YEAR)
        self.other_key = PrivateKey.generate()
        self.other = self.ca.issue("/C=IT/O=INFN/CN=Anna Bianchi", self.other_key.public_key(),
                                   now - YEAR, now + YEAR)

    @property
    def anchors(self):
        return [self.ca.credential]

    @property
    def user_chain(self):
        return (self.user, self.ca.credential)

    @property
    def other_chain(self):
        return (self.other, self.ca.credential)

    def trusted(self, vo="datagrid"):
        return {vo: self.host.public_key}


@pytest.fixture(scope="session")
def pki():
    return Pki()


def datagrid_registry(pki, forced=True):
    """/datagrid -> wp6 -> admin, plus the forced group /datagrid/banned-watch."""
    reg = Registry("datagrid", OWNER, clock=lambda: NOW)
    reg.create_group(OWNER, ["/datagrid"], "wp6")
    reg.create_group(OWNER, ["/datagrid/wp6"], "admin")
    reg.create_group(OWNER, ["/datagrid"], "banned-watch", forced=forced)
    return reg


@pytest.fixture
def registry(pki):
    return datagrid_registry(pki)


def attribute_server(pki, reg, **policy):
    return AttributeServer(reg, pki.host, pki.host_key,
                           ServerPolicy(reg.vo, trust_anchors=pki.anchors, **policy),
                           clock=lambda: NOW)
