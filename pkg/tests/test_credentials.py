import random
import warnings

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import NOW, YEAR
from vomskit import canonical
from vomskit.chain import (
    DEFAULT_PROXY_LIFETIME,
    ProxyLifetimeClamped,
    create_proxy,
    end_entity,
    load_chain,
    load_trust_anchors,
    save_chain,
    validate_chain,
)
from vomskit.credentials import (
    CertificateAuthority,
    Extension,
    IdentityCredential,
    ProxyCredential,
    RevocationList,
    credential_from_document,
    sign,
)
from vomskit.errors import InvalidChain, MalformedDocument, NotAnAuthority, WindowOutOfRange
from vomskit.keys import PrivateKey, PublicKey, load_private_key, save_private_key
from vomskit.names import SubjectName

attr = st.from_regex(r"[A-Za-z][A-Za-z0-9.]{0,4}", fullmatch=True)
value = st.text(st.characters(blacklist_characters="/", blacklist_categories=("Cs",)), min_size=1, max_size=12)


@given(st.lists(st.tuples(attr, value), min_size=1, max_size=6))
def test_subject_round_trip(components):
    name = SubjectName(tuple(components))
    assert SubjectName.parse(str(name)) == name


@pytest.mark.parametrize("text", ["", "CN=x", "/CN=", "/=x", "/CN=a//O=b", "/1N=x"])
def test_subject_rejects(text):
    with pytest.raises(ValueError):
        SubjectName.parse(text)


def test_subject_child_parent():
    name = SubjectName.parse("/C=IT/O=INFN/CN=Mario Rossi")
    assert str(name.child("CN", "proxy")) == "/C=IT/O=INFN/CN=Mario Rossi/CN=proxy"
    assert name.child("CN", "proxy").parent == name


def test_keys(tmp_path):
    key = PrivateKey.generate()
    sig = key.sign(b"message")
    assert key.public_key().verify(b"message", sig)
    assert not key.public_key().verify(b"messagf", sig)
    assert not key.public_key().verify(b"message", b"short")
    doc = canonical.loads(canonical.dumps(key.public_key().to_document()))
    assert PublicKey.from_document(doc) == key.public_key()
    path = tmp_path / "k"
    save_private_key(path, key)
    assert (path.stat().st_mode & 0o777) == 0o600
    assert load_private_key(path).raw_bytes() == key.raw_bytes()
    assert not PublicKey.from_document({"scheme": "rsa", "key": "00" * 32}).verify(b"m", sig)
    with pytest.raises(MalformedDocument):
        PublicKey.from_document({"scheme": "ed25519", "key": "zz"})


def test_issue_identity(pki):
    cred = pki.user
    assert cred.issuer == pki.ca.credential.subject
    assert cred.verify(pki.ca.key.public_key())
    assert not cred.is_authority
    assert IdentityCredential.from_bytes(cred.to_bytes()) == cred
    assert validate_chain(pki.user_chain, pki.anchors, now=NOW)


def test_issue_requires_authority(pki):
    leaf_as_ca = CertificateAuthority(pki.user, pki.user_key)
    with pytest.raises(NotAnAuthority):
        leaf_as_ca.issue("/CN=x", PrivateKey.generate().public_key(), NOW, NOW + 10)


def test_issue_window(pki):
    k = PrivateKey.generate().public_key()
    ca = pki.ca.credential
    with pytest.raises(WindowOutOfRange):
        pki.ca.issue("/CN=x", k, ca.not_before - 1, NOW)
    with pytest.raises(WindowOutOfRange):
        pki.ca.issue("/CN=x", k, NOW, ca.not_after + 1)
    with pytest.raises(WindowOutOfRange):
        pki.ca.issue("/CN=x", k, NOW, NOW)


def test_serials_unique(pki):
    k = PrivateKey.generate().public_key()
    serials = {pki.ca.issue(f"/CN=u{i}", k, NOW, NOW + 10).serial for i in range(20)}
    assert len(serials) == 20


def test_authority_persistence(tmp_path, pki):
    path = tmp_path / "ca"
    pki.ca.save(path)
    again = CertificateAuthority.load(path)
    assert again.credential == pki.ca.credential
    assert again.next_serial == pki.ca.next_serial


def test_strict_documents(pki):
    doc = pki.user.to_document()
    doc["extra"] = 1
    with pytest.raises(MalformedDocument):
        credential_from_document(doc)
    doc = pki.user.to_document()
    del doc["serial"]
    with pytest.raises(MalformedDocument):
        credential_from_document(doc)


def test_proxy_default_lifetime(pki):
    proxy, key = create_proxy(pki.user_chain, pki.user_key, now=NOW)
    assert proxy.not_after - proxy.not_before == DEFAULT_PROXY_LIFETIME == 43200
    assert str(proxy.subject) == "/C=IT/O=INFN/CN=Mario Rossi/CN=proxy"
    chain = (proxy,) + pki.user_chain
    assert validate_chain(chain, pki.anchors, now=NOW)
    assert end_entity(chain) == pki.user
    # second-level delegation
    proxy2, _ = create_proxy(chain, key, lifetime=600, now=NOW + 1)
    assert validate_chain((proxy2,) + chain, pki.anchors, now=NOW + 2)


def test_proxy_clamped(pki):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        proxy, _ = create_proxy(pki.user_chain, pki.user_key, lifetime=2 * YEAR, now=NOW)
    assert proxy.not_after == pki.user.not_after
    assert any(issubclass(w.category, ProxyLifetimeClamped) for w in caught)


def test_proxy_from_expired_chain(pki):
    with pytest.raises(InvalidChain) as err:
        create_proxy(pki.user_chain, pki.user_key, now=pki.user.not_after)
    assert err.value.report.rule == "Expired"


def test_validate_rules(pki):
    chain = pki.user_chain
    assert validate_chain([], pki.anchors, now=NOW).rule == "EmptyChain"
    assert validate_chain(chain, [], now=NOW).rule == "UntrustedRoot"
    assert validate_chain(chain, pki.anchors, now=pki.user.not_before - 1).rule == "NotYetValid"
    assert validate_chain(chain, pki.anchors, now=pki.user.not_after).rule == "Expired"
    assert validate_chain((pki.user, pki.other, pki.ca.credential), pki.anchors, now=NOW).rule \
        in ("BrokenLink", "Structure")
    assert validate_chain((pki.ca.credential,), pki.anchors, now=NOW).rule == "Structure"
    forged = sign(pki.user, PrivateKey.generate())
    assert validate_chain((forged, pki.ca.credential), pki.anchors, now=NOW).rule == "BadSignature"


def test_window_half_open(pki):
    proxy, _ = create_proxy(pki.user_chain, pki.user_key, lifetime=100, now=NOW)
    chain = (proxy,) + pki.user_chain
    assert validate_chain(chain, pki.anchors, now=NOW)
    assert validate_chain(chain, pki.anchors, now=NOW + 99)
    assert validate_chain(chain, pki.anchors, now=NOW + 100).rule == "Expired"


def test_intermediate_authority(pki):
    sub_key = PrivateKey.generate()
    sub = pki.ca.issue("/C=IT/O=INFN/CN=Sub CA", sub_key.public_key(), NOW - 10, NOW + YEAR,
                       is_authority=True)
    sub_ca = CertificateAuthority(sub, sub_key)
    leaf_key = PrivateKey.generate()
    leaf = sub_ca.issue("/C=IT/CN=leaf", leaf_key.public_key(), NOW - 10, NOW + 100)
    assert validate_chain((leaf, sub, pki.ca.credential), pki.anchors, now=NOW)
    # a non-authority cannot issue
    fake = sign(IdentityCredential(SubjectName.parse("/CN=x"), pki.user.subject,
                                   leaf_key.public_key(), 1, NOW - 1, NOW + 10, False),
                pki.user_key)
    assert validate_chain((fake, pki.user, pki.ca.credential), pki.anchors, now=NOW).rule \
        == "NotAnAuthority"


def test_revocation(pki):
    ca = CertificateAuthority.create_root("/CN=Rev CA", NOW - 100, NOW + YEAR)
    k = PrivateKey.generate()
    cred = ca.issue("/CN=victim", k.public_key(), NOW - 10, NOW + 1000)
    chain = (cred, ca.credential)
    anchors = [ca.credential]
    crl = ca.revocation_list([cred.serial], NOW)
    assert validate_chain(chain, anchors, [crl], now=NOW).rule == "Revoked"
    # a CRL from the future is not yet in force
    assert validate_chain(chain, anchors, [ca.revocation_list([cred.serial], NOW + 5)], now=NOW)
    # a forged CRL is ignored
    forged = sign(RevocationList(ca.credential.subject, frozenset([cred.serial]), NOW),
                  PrivateKey.generate())
    assert validate_chain(chain, anchors, [forged], now=NOW)
    # monotone: adding an empty, later CRL does not un-revoke
    empty = ca.revocation_list([], NOW)
    assert not validate_chain(chain, anchors, [empty, crl], now=NOW + 10)
    assert RevocationList.from_bytes(crl.to_bytes()) == crl


def _with_extension(pki, ext):
    proxy, _ = create_proxy(pki.user_chain, pki.user_key, extensions=[ext], now=NOW)
    return (proxy,) + pki.user_chain


def test_extensions(pki):
    known = _with_extension(pki, Extension("voms-pseudo-certs", True, b"x"))
    assert validate_chain(known, pki.anchors, now=NOW)
    ignorable = _with_extension(pki, Extension("site-local", False, b"x"))
    assert validate_chain(ignorable, pki.anchors, now=NOW)
    critical = _with_extension(pki, Extension("site-local", True, b"x"))
    report = validate_chain(critical, pki.anchors, now=NOW)
    assert report.rule == "UnknownCriticalExtension" and report.index == 0
    assert ProxyCredential.from_bytes(known[0].to_bytes()) == known[0]


def test_proxy_naming_and_window(pki):
    proxy, _ = create_proxy(pki.user_chain, pki.user_key, now=NOW)
    from dataclasses import replace
    renamed = sign(replace(proxy, subject=pki.user.subject.child("CN", "other")), pki.user_key)
    assert validate_chain((renamed,) + pki.user_chain, pki.anchors, now=NOW).rule == "ProxyNaming"
    stretched = sign(replace(proxy, not_after=pki.user.not_after + 1), pki.user_key)
    assert validate_chain((stretched,) + pki.user_chain, pki.anchors, now=NOW).rule == "ProxyWindow"


def test_chain_files(tmp_path, pki):
    proxy, _ = create_proxy(pki.user_chain, pki.user_key, now=NOW)
    chain = [proxy, *pki.user_chain]
    save_chain(tmp_path / "chain", chain)
    assert load_chain(tmp_path / "chain") == chain
    anchors = tmp_path / "anchors"
    anchors.mkdir()
    canonical.dump_file(anchors / "root", pki.ca.credential.to_document())
    canonical.dump_file(anchors / "user", pki.user.to_document())
    assert load_trust_anchors(anchors) == [pki.ca.credential]


def test_tamper_single_byte(pki):
    proxy, _ = create_proxy(pki.user_chain, pki.user_key, now=NOW)
    blob = proxy.to_bytes()
    rng = random.Random(7)
    for _ in range(300):
        mutated = bytearray(blob)
        i = rng.randrange(len(mutated))
        mutated[i] = rng.choice([b for b in range(256) if b != mutated[i]])
        try:
            forged = ProxyCredential.from_bytes(bytes(mutated))
        except (MalformedDocument, ValueError):
            continue
        assert not validate_chain((forged,) + pki.user_chain, pki.anchors, now=NOW)


def test_random_window_lifetime(pki):
    rng = random.Random(4)
    for _ in range(50):
        lifetime = rng.randint(1, 86400)
        proxy, _ = create_proxy(pki.user_chain, pki.user_key, lifetime=lifetime, now=NOW)
        assert proxy.not_after - proxy.not_before == lifetime
