from dataclasses import replace

import pytest

from conftest import NOW, OWNER, attribute_server, datagrid_registry
from vomskit.chain import VOMS_EXTENSION, validate_chain
from vomskit.credentials import Extension, sign
from vomskit.errors import EndpointUnreachable, MalformedPayload
from vomskit.proxytool import (
    ProxyBundle,
    VomsExtensionPayload,
    extract_assertions,
    format_info,
    proxy_info,
    proxy_init,
)
from vomskit.registry import Grant, Registry
from vomskit.transport import LocalTransport

MARIO = "/C=IT/O=INFN/CN=Mario Rossi"


@pytest.fixture
def transport(pki):
    dg = datagrid_registry(pki)
    dg.grant(OWNER, Grant(MARIO, "/datagrid/wp6"))
    cms = Registry("cms", OWNER)
    cms.grant(OWNER, Grant(MARIO, "/cms"))
    return LocalTransport({"voms.dg:15000": attribute_server(pki, dg),
                           "voms.cms:15001": attribute_server(pki, cms)})


def trusted(pki):
    return {"datagrid": pki.host.public_key, "cms": pki.host.public_key}


def test_two_vos_in_order(pki, transport):
    bundle = proxy_init(pki.user_chain, pki.user_key,
                        [("voms.dg:15000", "datagrid", None), ("voms.cms:15001", "cms", None)],
                        now=NOW, transport=transport, trusted_servers=trusted(pki))
    assert validate_chain(bundle.chain, pki.anchors, now=NOW)
    ext = bundle.proxy.extension(VOMS_EXTENSION)
    assert ext is not None and not ext.critical
    assert [a.vo for a in extract_assertions(bundle.proxy)] == ["datagrid", "cms"]
    assert bundle.proxy.not_after - bundle.proxy.not_before == 43200


def test_extra_payload(pki, transport):
    bundle = proxy_init(pki.user_chain, pki.user_key, [("voms.dg:15000", "datagrid", None)],
                        extra=("site-notes", b"\x00\x01opaque"), now=NOW, transport=transport)
    payload = VomsExtensionPayload.from_bytes(bundle.proxy.extension(VOMS_EXTENSION).payload)
    assert payload.user_supplied == ("site-notes", b"\x00\x01opaque")
    assert proxy_info(bundle, NOW)["user_supplied"] == "site-notes"


def test_plain_proxy(pki):
    bundle = proxy_init(pki.user_chain, pki.user_key, [], now=NOW)
    assert bundle.proxy.extensions == ()
    assert extract_assertions(bundle.proxy) == []
    assert "no VO attributes" in format_info(proxy_info(bundle, NOW))


def test_failure_produces_nothing(pki, transport, tmp_path):
    with pytest.raises(EndpointUnreachable):
        proxy_init(pki.user_chain, pki.user_key,
                   [("voms.dg:15000", "datagrid", None), ("gone:1", "cms", None)],
                   now=NOW, transport=transport)


def test_truncated_payload(pki, transport):
    bundle = proxy_init(pki.user_chain, pki.user_key, [("voms.dg:15000", "datagrid", None)],
                        now=NOW, transport=transport)
    ext = bundle.proxy.extension(VOMS_EXTENSION)
    for cut in (1, len(ext.payload) // 2, len(ext.payload) - 1):
        broken = sign(replace(bundle.proxy, extensions=(Extension(ext.label, False,
                                                                  ext.payload[:cut]),)),
                      pki.user_key)
        with pytest.raises(MalformedPayload):
            extract_assertions(broken)


def test_bundle_file(pki, transport, tmp_path):
    bundle = proxy_init(pki.user_chain, pki.user_key, [("voms.dg:15000", "datagrid", None)],
                        now=NOW, transport=transport)
    path = tmp_path / "x509up"
    bundle.save(path)
    assert (path.stat().st_mode & 0o777) == 0o600
    again = ProxyBundle.load(path)
    assert again.chain == bundle.chain
    assert again.key.raw_bytes() == bundle.key.raw_bytes()


def test_proxy_info_states(pki, transport):
    bundle = proxy_init(pki.user_chain, pki.user_key, [("voms.dg:15000", "datagrid", None)],
                        lifetime=3600, now=NOW, transport=transport)
    info = proxy_info(bundle, NOW + 10, trusted(pki))
    assert info["status"] == "valid" and info["remaining"] == 3590
    a = info["assertions"][0]
    assert a["signature"] == "ok" and a["status"] == "valid"
    assert a["fqans"] == ["/datagrid", "/datagrid/wp6"]
    assert proxy_info(bundle, NOW + 3600)["status"] == "expired"
    assert proxy_info(bundle, NOW - 1)["status"] == "not yet valid"
    assert proxy_info(bundle, NOW, {"cms": pki.host.public_key})["assertions"][0]["signature"] \
        == "untrusted"
    assert proxy_info(bundle, NOW, {"datagrid": pki.other.public_key})["assertions"][0]["signature"] \
        == "bad"
    text = format_info(info)
    assert "attribute : /datagrid/wp6" in text and "time left : 0:59" in text
