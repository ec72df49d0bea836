from __future__ import annotations

import json
import sys
from datetime import datetime, timedelta, timezone
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from proxyprobe.ingest import TxGroup, group_by_transaction  # noqa: E402
from proxyprobe.model import Address, CallType, ContractRecord, TraceRecord  # noqa: E402

T0 = datetime(2020, 3, 1, 12, 0, 0, tzinfo=timezone.utc)


def addr(n: int) -> Address:
    return Address(n.to_bytes(20, "big"))


def txh(n: int) -> bytes:
    return n.to_bytes(32, "big")


def trace(tx, ta, frm, to, ct="call", input=b"", status=True, block=100, ts=T0, gas=21000, value=0, gas_price=None):
    return TraceRecord(
        txh(tx) if isinstance(tx, int) else tx,
        tuple(ta),
        addr(frm) if isinstance(frm, int) else frm,
        (addr(to) if isinstance(to, int) else to) if to is not None else None,
        CallType(ct),
        input,
        b"",
        gas,
        status,
        value,
        block,
        ts,
        gas_price,
    )


def group(*traces) -> TxGroup:
    groups = list(group_by_transaction(traces))
    assert len(groups) == 1
    return groups[0]


def contract(n, code=b"\x00", ts=T0, block=1) -> ContractRecord:
    return ContractRecord(addr(n) if isinstance(n, int) else n, code, ts, b"", block)


def row(tx, ta="", frm=1, to=2, ct="call", input="0x", **extra) -> dict:
    out = {
        "transaction_hash": "0x" + txh(tx).hex(),
        "trace_address": ta,
        "from_address": str(addr(frm)),
        "to_address": str(addr(to)) if to is not None else None,
        "call_type": ct,
        "input": input,
        "output": "0x",
        "gas_used": 21000,
        "status": 1,
        "value": 0,
        "block_number": 100,
        "block_timestamp": "2020-03-01T12:00:00Z",
    }
    out.update(extra)
    return out


def write_jsonl(path: Path, rows) -> Path:
    with open(path, "w") as fh:
        for r in rows:
            fh.write(r if isinstance(r, str) else json.dumps(r))
            fh.write("\n")
    return path


SEL = bytes.fromhex("a9059cbb")
EOA, C1, C2, C3 = 0xE0A, 0xC1, 0xC2, 0xC3


def forwarding_traces(t2_input=SEL + bytes(64), t3_input=SEL + bytes(64)) -> list:
    """EOA -> C1; C1 creates C2 [0]; C1 calls C2 [1]; C2 delegates to C3 [1,0]."""
    return [
        trace(1, (), EOA, C1, input=b"\x01\x02\x03\x04"),
        trace(1, (0,), C1, C2, ct="create"),
        trace(1, (1,), C1, C2, input=t2_input),
        trace(1, (1, 0), C2, C3, ct="delegatecall", input=t3_input),
    ]


@pytest.fixture
def forwarding_tx():
    return group(*forwarding_traces())


@pytest.fixture(scope="session")
def desk_fixture(tmp_path_factory):
    """The default generated corpus (seeded; identical to fixtures/desk)."""
    from proxyprobe import synth

    out = tmp_path_factory.mktemp("desk")
    truth = synth.gen_fixture(synth.FixtureSpec.desk(), out)
    return out, truth


# -- usage-context worlds, shared by the context and acceptance suites

def context_inputs(spec):
    """spec: proxy -> (code byte, deployer, [logics], age in days); returns cluster_contexts args."""
    from proxyprobe.detector import ProxyFinding
    from proxyprobe.lineage import CreationIndex

    findings, contracts, groups = {}, {}, []
    for i, (p, (code, deployer, logics, age)) in enumerate(sorted(spec.items())):
        ts = T0 + timedelta(days=age)
        contracts[addr(p)] = contract(p, bytes([code]), ts=ts)
        findings[addr(p)] = ProxyFinding(addr(p), {addr(l) for l in logics}, (0, b"", ()), 1)
        groups.append(group(trace(1000 + i, (), deployer, p, ct="create", ts=ts, block=i)))
    return findings, contracts, CreationIndex.from_groups(groups)


def random_context_spec(rnd, proxies: int, logics: int):
    return {
        p: (rnd.randint(0, 2), 0xE0 + rnd.randint(0, 2), rnd.sample(range(5000, 5000 + logics), rnd.randint(0, min(3, logics))), rnd.randint(0, 400))
        for p in range(1, proxies + 1)
    }


def brute_contexts(spec):
    """Expected member sets: split by (code, deployer), then BFS on shared logics."""
    from oracles import components_bfs

    out = set()
    for key in {(code, dep) for code, dep, _, _ in spec.values()}:
        members = [p for p, v in spec.items() if (v[0], v[1]) == key]
        edges = [(("p", p), ("l", l)) for p in members for l in spec[p][2]]
        for comp in components_bfs([("p", p) for p in members], edges):
            out.add(frozenset(addr(x) for kind, x in comp if kind == "p"))
    return out


def oldest_member(spec, members):
    return min(members, key=lambda a: (spec[int.from_bytes(a, "big")][3], a))


# -- acceptance criteria report

_CRITERIA: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or report.when not in ("setup", "call"):
        return
    key = mark.args
    if report.failed or (report.when == "call" and key not in _CRITERIA):
        _CRITERIA[key] = "FAIL" if report.failed else "PASS"


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for (number, title), verdict in sorted(_CRITERIA.items()):
        terminalreporter.write_line(f"criterion {number}: {verdict}  {title}")
