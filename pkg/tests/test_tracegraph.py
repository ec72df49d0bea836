from __future__ import annotations

from datetime import datetime, timezone

from conftest import C1, C2, C3, EOA, addr, contract, group, trace
from proxyprobe.model import CallType, Month
from proxyprobe.tracegraph import (
    MonthlySeries,
    build_call_graph,
    has_call_type,
    is_multi_contract,
    monthly_multi_contract_ratio,
)

CONTRACTS = {addr(n): contract(n) for n in (C1, C2, C3, 0xD1, 0xD2)}


def test_forwarding_tx_call_graph(forwarding_tx):
    g = build_call_graph(forwarding_tx)
    assert [(p, c) for p, c, _ in g.edges] == [((), (0,)), ((), (1,)), ((1,), (1, 0))]
    assert g.nodes == (addr(EOA), addr(C1), addr(C2), addr(C3))
    assert g.children(()) == [(0,), (1,)]


def test_single_root_graph():
    g = build_call_graph(group(trace(1, (), EOA, C1)))
    assert len(g.nodes) == 2 and g.edges == ()


def test_nested_chain_is_path():
    tx = group(trace(1, (), EOA, C1), trace(1, (0,), C1, C2), trace(1, (0, 0), C2, C3))
    g = build_call_graph(tx)
    assert [(p, c) for p, c, _ in g.edges] == [((), (0,)), ((0,), (0, 0))]


def test_forwarding_tx_is_multi_contract(forwarding_tx):
    assert is_multi_contract(forwarding_tx, CONTRACTS)
    assert has_call_type(forwarding_tx, CallType.DELEGATECALL)


def test_plain_eoa_call_is_not_multi():
    assert not is_multi_contract(group(trace(1, (), EOA, C1)), CONTRACTS)


def test_self_call_is_not_multi():
    assert not is_multi_contract(group(trace(1, (), EOA, C1), trace(1, (0,), C1, C1)), CONTRACTS)


def test_call_to_eoa_is_not_multi():
    assert not is_multi_contract(group(trace(1, (), EOA, C1), trace(1, (0,), C1, 0xBEEF)), CONTRACTS)


def _month_corpus():
    ts = datetime(2021, 5, 3, tzinfo=timezone.utc)
    txs = []
    for i in range(10):
        traces = [trace(i, (), EOA, C1, ts=ts, block=i)]
        if i < 3:
            traces.append(trace(i, (0,), C1, 0xD1, ts=ts, block=i, ct="delegatecall" if i == 0 else "call"))
        txs.append(group(*traces))
    return txs


def test_monthly_ratio():
    s = monthly_multi_contract_ratio(_month_corpus(), CONTRACTS)
    assert s.points == {Month(2021, 5): (3, 10)}
    assert s.ratio(Month(2021, 5)) == 0.3
    d = monthly_multi_contract_ratio(_month_corpus(), CONTRACTS, CallType.DELEGATECALL)
    assert d.ratio(Month(2021, 5)) == 0.1


def test_series_fill_and_csv(tmp_path):
    s = MonthlySeries()
    s.add(Month(2020, 1), 1, 4)
    s.add(Month(2020, 3), 2, 2)
    f = s.filled()
    assert f.points[Month(2020, 2)] == (0, 0)
    assert f.ratio(Month(2020, 2)) is None
    f.write_csv(tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines() == [
        "month,numerator,denominator,ratio",
        "2020-01,1,4,0.25",
        "2020-02,0,0,",
        "2020-03,2,2,1.0",
    ]
