from __future__ import annotations

import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from conftest import C1, EOA, addr, forwarding_traces, row, trace, txh, write_jsonl
from proxyprobe.ingest import (
    IngestError,
    IngestReport,
    build_index,
    contract_lookup,
    group_by_transaction,
    iter_index_groups,
    load_traces,
)
from proxyprobe.model import CallType


def test_delegatecall_line(tmp_path):
    p = write_jsonl(tmp_path / "t.jsonl", [row(1, ct="delegatecall", input="0xa9059cbb")])
    recs = list(load_traces(p))
    assert len(recs) == 1
    assert recs[0].call_type is CallType.DELEGATECALL
    assert recs[0].input == bytes.fromhex("a9059cbb")
    assert recs[0].is_root


def test_unknown_call_type_reports_line(tmp_path):
    p = write_jsonl(tmp_path / "t.jsonl", [row(1), row(2, ct="delegatecall2")])
    report = IngestReport()
    assert len(list(load_traces(p, report))) == 1
    assert report.errors == [("t.jsonl", 2, "unknown call type: 'delegatecall2'")]
    with pytest.raises(IngestError, match=":2:"):
        list(load_traces(p, strict=True))


def test_empty_file(tmp_path):
    p = tmp_path / "t.jsonl"
    p.write_text("")
    report = IngestReport()
    assert list(load_traces(p, report)) == []
    assert report.errors == [] and report.accepted == 0


@pytest.mark.parametrize(
    "bad, needle",
    [
        ("{not json", "malformed JSON"),
        ("[1, 2]", "not a JSON object"),
        (json.dumps(row(1, status=2)), "status"),
        (json.dumps(row(1, status=1.0)), "status"),
        (json.dumps(row(1, gas_used=-5)), "non-negative"),
        (json.dumps({k: v for k, v in row(1).items() if k != "block_number"}), "block_number"),
        (json.dumps(row(1, transaction_hash="0x1234")), "32 bytes"),
        (json.dumps(row(1, from_address="0x12")), "address"),
        (json.dumps(row(1, input="0xabc")), "invalid hex"),
        (json.dumps(row(1, input=17)), "invalid hex"),
    ],
)
def test_schema_violations(tmp_path, bad, needle):
    p = write_jsonl(tmp_path / "t.jsonl", [row(9), bad])
    report = IngestReport()
    assert len(list(load_traces(p, report))) == 1
    assert len(report.errors) == 1
    _, line, msg = report.errors[0]
    assert line == 2 and needle in msg


def test_blank_lines_skipped(tmp_path):
    p = tmp_path / "t.jsonl"
    p.write_text(json.dumps(row(1)) + "\n\n   \n" + json.dumps(row(2)) + "\n")
    report = IngestReport()
    assert len(list(load_traces(p, report))) == 2
    assert report.errors == []


def test_csv_input(tmp_path):
    import csv

    p = tmp_path / "t.csv"
    r = row(1, ta="0.1")
    with open(p, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(r))
        w.writeheader()
        w.writerow(r)
    (rec,) = load_traces(p)
    assert rec.trace_address == (0, 1)
    assert rec.gas_used == 21000


def test_forwarding_tx_groups_into_one_tx():
    traces = forwarding_traces()
    random.Random(3).shuffle(traces)
    (g,) = group_by_transaction(traces)
    assert len(g.traces) == 4
    assert g.sender == addr(EOA)
    assert [t.trace_address for t in g.traces] == [(), (0,), (1,), (1, 0)]


def test_interleaved_transactions():
    a = [trace(1, (), 5, 6), trace(1, (0,), 6, 7)]
    b = [trace(2, (), 8, 9), trace(2, (0,), 9, 7)]
    groups = list(group_by_transaction([a[0], b[0], a[1], b[1]]))
    assert [len(g.traces) for g in groups] == [2, 2]
    assert {g.transaction_hash for g in groups} == {txh(1), txh(2)}


def test_duplicate_trace_address_quarantined():
    report = IngestReport()
    groups = list(group_by_transaction([trace(1, (), 5, 6), trace(1, (0,), 6, 7), trace(1, (0,), 6, 8), trace(2, (), 5, 6)], report))
    assert [g.transaction_hash for g in groups] == [txh(2)]
    assert report.quarantined_traces == 3
    assert "duplicate" in report.quarantined[0][1]


def test_missing_root_quarantined():
    report = IngestReport()
    assert list(group_by_transaction([trace(1, (0,), 6, 7)], report)) == []
    assert report.quarantined[0][1] == "no root trace"


def test_groups_ordered_by_block_then_hash():
    recs = [trace(3, (), 1, 2, block=5), trace(1, (), 1, 2, block=7), trace(2, (), 1, 2, block=5)]
    assert [g.transaction_hash for g in group_by_transaction(recs)] == [txh(2), txh(3), txh(1)]


tx_strategy = st.lists(
    st.tuples(st.integers(1, 30), st.integers(0, 3), st.integers(1, 50)),  # (tx, child index, block)
    min_size=1,
    max_size=80,
)


@settings(max_examples=60, deadline=None)
@given(tx_strategy, st.integers(1, 7), st.randoms(use_true_random=False))
def test_spilled_grouping_equals_in_memory(spec, budget, rnd):
    blocks: dict = {}
    recs = []
    for tx, child, block in spec:
        blocks.setdefault(tx, block)
        recs.append(trace(tx, (), 1, 2, block=blocks[tx]))
        recs.append(trace(tx, (child,), 2, 3, block=blocks[tx]))
    rnd.shuffle(recs)
    r1, r2 = IngestReport(), IngestReport()
    in_mem = list(group_by_transaction(recs, r1))
    spilled = list(group_by_transaction(recs, r2, memory_budget=budget))
    assert in_mem == spilled
    assert r1.quarantined == r2.quarantined


def test_presorted_rejects_out_of_order():
    recs = [trace(2, (), 1, 2, block=9), trace(1, (), 1, 2, block=3)]
    with pytest.raises(IngestError):
        list(group_by_transaction(recs, presorted=True))


def test_contract_lookup_duplicates(tmp_path):
    def c(n, ts, block):
        return {"address": str(addr(n)), "bytecode": "0x60", "block_timestamp": ts, "block_number": block, "transaction_hash": "0x" + "11" * 32}

    p = write_jsonl(
        tmp_path / "c.jsonl",
        [c(1, "2020-01-01T00:00:00Z", 1), c(2, "2020-01-01T00:00:00Z", 1), c(3, "2020-01-01T00:00:00Z", 1),
         c(2, "2021-01-01T00:00:00Z", 9)],
    )
    report = IngestReport()
    lookup = contract_lookup(p, report)
    assert len(lookup) == 3
    assert lookup[addr(2)].block_number == 1
    assert len(report.warnings) == 1
    assert addr(99) not in lookup


def test_build_index_is_canonical(tmp_path):
    rows = [row(2, ta="0", frm=C1, to=7, block_number=3), row(1, block_number=5), row(2, block_number=3, frm=EOA, to=C1)]
    t1 = write_jsonl(tmp_path / "a.jsonl", rows)
    t2 = write_jsonl(tmp_path / "b.jsonl", list(reversed(rows)))
    c = write_jsonl(tmp_path / "c.jsonl", [])
    corpus1, rep = build_index(t1, c, tmp_path / "i1")
    corpus2, _ = build_index(t2, c, tmp_path / "i2")
    assert rep.accepted == 3
    assert (tmp_path / "i1/traces.jsonl").read_bytes() == (tmp_path / "i2/traces.jsonl").read_bytes()
    groups = list(iter_index_groups(corpus1))
    assert [len(g.traces) for g in groups] == [2, 1]
    assert groups[0].block_number == 3


def test_build_index_errors_file_is_portable(tmp_path):
    t = write_jsonl(tmp_path / "t.jsonl", [row(1), "{oops"])
    c = write_jsonl(tmp_path / "c.jsonl", [])
    build_index(t, c, tmp_path / "idx")
    errors = json.loads((tmp_path / "idx/errors.json").read_text())
    assert errors["errors"][0]["source"] == "t.jsonl"
    assert str(tmp_path) not in (tmp_path / "idx/errors.json").read_text()


def test_missing_file_raises(tmp_path):
    with pytest.raises(IngestError):
        list(load_traces(tmp_path / "nope.jsonl"))
