from __future__ import annotations

from datetime import datetime, timezone

import pytest
from hypothesis import given, strategies as st

from oracles import keccak256 as keccak_oracle
from proxyprobe.model import (
    Address,
    CallType,
    Month,
    format_trace_address,
    keccak256,
    month_range,
    parent_of,
    parse_hex,
    parse_timestamp,
    parse_trace_address,
    selector_from_signature,
    selector_of,
)


@pytest.mark.parametrize(
    "sig, expected",
    [
        ("transfer(address,uint256)", "a9059cbb"),
        ("implementation()", "5c60da1b"),
        ("proxyType()", "4555d5c9"),
        ("upgradeTo(address)", "3659cfe6"),
        ("masterCopy()", "a619486e"),
    ],
)
def test_selector_from_signature(sig, expected):
    assert selector_from_signature(sig).hex() == expected
    assert keccak_oracle(sig.encode())[:4].hex() == expected


def test_selector_of():
    assert selector_of(bytes.fromhex("a9059cbb") + bytes(64)) == bytes.fromhex("a9059cbb")
    assert selector_of(b"") is None
    assert selector_of(b"\x01\x02\x03") is None
    assert selector_of(bytes.fromhex("deadbeef")) == bytes.fromhex("deadbeef")


@given(st.binary(max_size=300))
def test_keccak_matches_oracle(data):
    assert keccak256(data) == keccak_oracle(data)


@pytest.mark.parametrize(
    "ta, siblings, parent",
    [
        ((0, 1), {(), (0,), (0, 1)}, (0,)),
        ((), {()}, None),
        ((2, 0, 3), {(), (2,), (2, 0), (2, 0, 3)}, (2, 0)),
        ((2, 0, 3), {(), (2,)}, (2,)),  # gap: nearest present ancestor
    ],
)
def test_parent_of(ta, siblings, parent):
    assert parent_of(ta, siblings) == parent


def test_address_parse_and_format():
    a = Address.parse("0xABCDEF0000000000000000000000000000000001")
    assert str(a) == "0xabcdef0000000000000000000000000000000001"
    assert Address.parse(str(a)) == a
    with pytest.raises(ValueError):
        Address.parse("0x1234")
    with pytest.raises(ValueError):
        Address.parse("0x" + "zz" * 20)
    assert Address.from_word(bytes(12) + a) == a


def test_parse_hex():
    assert parse_hex("0x") == b""
    assert parse_hex("") == b""
    assert parse_hex("0xDEAD") == b"\xde\xad"
    with pytest.raises(ValueError):
        parse_hex("0xabc")


@pytest.mark.parametrize("text", ["", None, "0", "0.1", "0,1", "3.0.12"])
def test_trace_address_roundtrip(text):
    parsed = parse_trace_address(text)
    assert parse_trace_address(format_trace_address(parsed)) == parsed


def test_trace_address_rejects_negative():
    with pytest.raises(ValueError):
        parse_trace_address("0.-1")
    with pytest.raises(ValueError):
        parse_trace_address([0, -1])


@given(st.lists(st.integers(0, 10_000), max_size=8))
def test_trace_address_property(parts):
    assert parse_trace_address(format_trace_address(tuple(parts))) == tuple(parts)


@pytest.mark.parametrize(
    "value",
    ["2020-03-01T12:00:00Z", "2020-03-01 12:00:00 UTC", "2020-03-01T13:00:00+01:00", 1583064000, "2020-03-01T12:00:00.250Z"],
)
def test_parse_timestamp_forms(value):
    assert parse_timestamp(value) == datetime(2020, 3, 1, 12, 0, 0, tzinfo=timezone.utc)


def test_call_type_closed():
    assert CallType.parse("DELEGATECALL") is CallType.DELEGATECALL
    assert CallType.parse("selfdestruct") is CallType.SELFDESTRUCT
    with pytest.raises(ValueError):
        CallType.parse("delegatecall2")


def test_month_range_spans_year():
    ms = month_range(Month(2019, 11), Month(2020, 2))
    assert [str(m) for m in ms] == ["2019-11", "2019-12", "2020-01", "2020-02"]
    with pytest.raises(ValueError):
        Month(2020, 13)
