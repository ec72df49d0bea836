"""Streaming loaders for trace/contract exports and the derived on-disk index.

Input schema follows the public BigQuery ``crypto_ethereum`` export: one JSON object
per line (or a CSV file with identical headers). The index directory written by
:func:`build_index` holds the validated records in canonical order plus a manifest of
input digests, so later stages can check what they were built from.
"""

from __future__ import annotations

import contextlib
import csv
import gc
import hashlib
import heapq
import itertools
import json
import logging
import os
import pickle
import tempfile
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, Optional

import orjson

from .model import (
    Address,
    CallType,
    ContractRecord,
    TraceRecord,
    format_hex,
    format_timestamp,
    format_trace_address,
    parse_hex,
    parse_timestamp,
    parse_trace_address,
)

log = logging.getLogger(__name__)

TRACE_FIELDS = (
    "transaction_hash",
    "trace_address",
    "from_address",
    "to_address",
    "call_type",
    "input",
    "output",
    "gas_used",
    "status",
    "value",
    "block_number",
    "block_timestamp",
)
CONTRACT_FIELDS = ("address", "bytecode", "block_timestamp", "block_number", "transaction_hash")

DEFAULT_MEMORY_BUDGET = 2_000_000  # trace records held in memory before spilling


class IngestError(Exception):
    """Raised for unrecoverable input problems (IO, or a schema error under ``strict``)."""


@dataclass
class IngestReport:
    errors: list = field(default_factory=list)  # (source, line, message)
    quarantined: list = field(default_factory=list)  # (tx_hash hex, reason)
    warnings: list = field(default_factory=list)
    accepted: int = 0
    quarantined_traces: int = 0

    def error(self, source, line, message):
        self.errors.append((str(source), line, message))

    def to_json(self) -> dict:
        return {
            "accepted": self.accepted,
            "quarantined_traces": self.quarantined_traces,
            "errors": [{"source": s, "line": n, "message": m} for s, n, m in self.errors],
            "quarantined": [{"transaction_hash": h, "reason": r} for h, r in self.quarantined],
            "warnings": list(self.warnings),
        }


@dataclass(frozen=True)
class Corpus:
    traces_path: Path
    contracts_path: Path
    index_dir: Path

    @classmethod
    def from_index(cls, index_dir) -> "Corpus":
        index_dir = Path(index_dir)
        return cls(index_dir / "traces.jsonl", index_dir / "contracts.jsonl", index_dir)


class TxGroup(NamedTuple):
    transaction_hash: bytes
    traces: tuple
    sender: Address

    @property
    def root(self) -> TraceRecord:
        return self.traces[0]

    @property
    def block_number(self) -> int:
        return self.traces[0].block_number

    @property
    def block_timestamp(self):
        return self.traces[0].block_timestamp


_ROOT: tuple = ()
_CALL_TYPES = {ct.value: ct for ct in CallType}
# bool keys collapse into 1/0, which is the intent
_STATUS = {1: True, 0: False, "1": True, "0": False, "true": True, "false": False, "True": True, "False": False}


fromhex = bytes.fromhex
_fromisoformat = datetime.fromisoformat
_new_tuple = tuple.__new__  # skips the generated NamedTuple __new__ frame


def _hex(text) -> bytes:
    if not text:
        return b""
    try:
        if text[:2] == "0x":
            return bytes.fromhex(text[2:])
        return parse_hex(text)
    except (ValueError, TypeError):
        raise ValueError(f"invalid hex data: {str(text)[:24]!r}") from None


class _Parser:
    """Field decoders. Addresses are interned; hash and timestamp remember the previous row."""

    def __init__(self):
        self._addr: dict = {}
        self._last_ts_text = self._last_ts = None
        self._last_tx_text = self._last_tx = None

    def address(self, text):
        try:
            return self._addr[text]
        except KeyError:
            if len(self._addr) > 1_000_000:
                self._addr.clear()
            a = self._addr[text] = Address.parse(text)
            return a

    def opt_address(self, text):
        if text is None or text == "":
            return None
        return self.address(text)

    def timestamp(self, value):
        # traces of one transaction are adjacent and share the timestamp
        if value != self._last_ts_text:
            if value.__class__ is str and len(value) == 20 and value[19] == "Z" and value[10] == "T":
                self._last_ts = _fromisoformat(value[:19] + "+00:00")
            else:
                self._last_ts = parse_timestamp(value)
            self._last_ts_text = value
        return self._last_ts

    def tx_hash(self, text):
        if text != self._last_tx_text:
            h = bytes.fromhex(text[2:]) if text[:2] == "0x" else parse_hex(text)
            if len(h) != 32:
                raise ValueError(f"transaction_hash must be 32 bytes: {text!r}")
            self._last_tx = h
            self._last_tx_text = text
        return self._last_tx

    def trace(self, row: dict) -> TraceRecord:
        # Hot path: memo hits and cached addresses are inlined, and misses fall back
        # to the helper methods, which also own the error messages.
        get = row.get
        try:
            call_type = _CALL_TYPES.get(row["call_type"]) or CallType.parse(row["call_type"])
            status = get("status", 1)
            ok = _STATUS.get(status) if status.__class__ is not float else None
            if ok is None:
                raise ValueError(f"status must be 1 or 0: {status!r}")
            gas_used = get("gas_used") or 0
            if gas_used.__class__ is not int:
                gas_used = int(gas_used)
            value = get("value") or 0
            if value.__class__ is not int:
                value = int(value)
            block_number = row["block_number"]
            if block_number.__class__ is not int:
                block_number = int(block_number)
            if gas_used < 0 or value < 0 or block_number < 0:
                raise ValueError("gas_used, value and block_number must be non-negative")
            gas_price = get("gas_price")
            if gas_price == "":
                gas_price = None
            elif gas_price is not None and gas_price.__class__ is not int:
                gas_price = int(gas_price)

            text = row["transaction_hash"]
            tx = self._last_tx if text == self._last_tx_text else self.tx_hash(text)
            text = row["block_timestamp"]
            ts = self._last_ts if text == self._last_ts_text else self.timestamp(text)
            ta = get("trace_address")
            ta = _ROOT if ta == "" else parse_trace_address(ta)
            addrs = self._addr
            text = row["from_address"]
            frm = addrs.get(text) or self.address(text)
            text = get("to_address")
            to = None if text is None or text == "" else addrs.get(text) or self.address(text)

            data = get("input")
            out = get("output")
            try:
                data = b"" if data == "0x" else fromhex(data[2:]) if data and data[:2] == "0x" else _hex(data)
                out = b"" if out == "0x" else fromhex(out[2:]) if out and out[:2] == "0x" else _hex(out)
            except (ValueError, TypeError):
                # slow path only to produce the uniform error message
                data, out = _hex(get("input")), _hex(get("output"))
            return _new_tuple(
                TraceRecord,
                (tx, ta, frm, to, call_type, data, out, gas_used, ok, value, block_number, ts, gas_price),
            )
        except KeyError as exc:
            raise ValueError(f"missing field {exc.args[0]!r}") from None

    def contract(self, row: dict) -> ContractRecord:
        try:
            return ContractRecord(
                address=self.address(row["address"]),
                bytecode=parse_hex(row.get("bytecode") or ""),
                created_at=self.timestamp(row["block_timestamp"]),
                creation_tx=parse_hex(row.get("transaction_hash") or ""),
                block_number=int(row["block_number"]),
            )
        except KeyError as exc:
            raise ValueError(f"missing field {exc.args[0]!r}") from None


def _rows(path: Path) -> Iterator[tuple[int, object]]:
    """(line number, decoded row or the exception) for JSONL or CSV input."""
    try:
        fh = open(path, newline="") if path.suffix == ".csv" else open(path, "rb")
    except OSError as exc:
        raise IngestError(f"cannot open {path}: {exc}") from exc
    with fh:
        if path.suffix == ".csv":
            reader = csv.DictReader(fh)
            for lineno, row in enumerate(reader, start=2):
                yield lineno, row
            return
        loads = orjson.loads
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = loads(line)
            except orjson.JSONDecodeError as exc:
                yield lineno, ValueError(f"malformed JSON: {exc}")
                continue
            if not isinstance(row, dict):
                yield lineno, ValueError("line is not a JSON object")
                continue
            yield lineno, row


def load_traces(path, report: Optional[IngestReport] = None, strict: bool = False) -> Iterator[TraceRecord]:
    """Yield validated trace records in file order.

    Schema violations are appended to ``report`` with their line number; with
    ``strict`` the first one raises :class:`IngestError` instead.
    """
    path = Path(path)
    report = report if report is not None else IngestReport()
    parse = _Parser().trace
    if path.suffix != ".csv":
        yield from _load_jsonl_traces(path, report, strict, parse)
        return
    for lineno, row in _rows(path):
        try:
            if row.__class__ is not dict:
                raise row if isinstance(row, Exception) else ValueError("line is not a JSON object")
            rec = parse(row)
        except (ValueError, TypeError) as exc:
            if strict:
                raise IngestError(f"{path}:{lineno}: {exc}") from exc
            report.error(path.name, lineno, str(exc))
            continue
        report.accepted += 1
        yield rec


def _load_jsonl_traces(path: Path, report: IngestReport, strict: bool, parse) -> Iterator[TraceRecord]:
    """JSONL branch of load_traces: decode and parse in one loop."""
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise IngestError(f"cannot open {path}: {exc}") from exc
    loads = orjson.loads
    with fh:
        for lineno, line in enumerate(fh, start=1):
            try:
                row = loads(line)
                if row.__class__ is not dict:
                    raise ValueError("line is not a JSON object")
                rec = parse(row)
            except orjson.JSONDecodeError as exc:
                if not line.strip():
                    continue
                err: Exception = ValueError(f"malformed JSON: {exc}")
            except (ValueError, TypeError) as exc:
                err = exc
            else:
                report.accepted += 1
                yield rec
                continue
            if strict:
                raise IngestError(f"{path}:{lineno}: {err}") from err
            report.error(path.name, lineno, str(err))


def load_contracts(path, report: Optional[IngestReport] = None, strict: bool = False) -> Iterator[ContractRecord]:
    path = Path(path)
    report = report if report is not None else IngestReport()
    parse = _Parser().contract
    for lineno, row in _rows(path):
        try:
            if isinstance(row, Exception):
                raise row
            rec = parse(row)
        except (ValueError, TypeError) as exc:
            if strict:
                raise IngestError(f"{path}:{lineno}: {exc}") from exc
            report.error(path.name, lineno, str(exc))
            continue
        yield rec


def contract_lookup(path, report: Optional[IngestReport] = None, strict: bool = False) -> dict:
    """Map address -> ContractRecord; duplicates keep the earliest ``created_at``."""
    report = report if report is not None else IngestReport()
    out: dict = {}
    for rec in load_contracts(path, report, strict):
        prev = out.get(rec.address)
        if prev is None:
            out[rec.address] = rec
            continue
        keep = min(prev, rec, key=lambda r: (r.created_at, r.block_number))
        msg = f"duplicate contract {rec.address}; keeping creation at {format_timestamp(keep.created_at)}"
        log.warning(msg)
        report.warnings.append(msg)
        out[rec.address] = keep
    return out


def _group_key(traces) -> tuple:
    return (traces[0].block_number, traces[0].transaction_hash)


def _by_trace_address(t):
    return t.trace_address


def _finish_group(tx_hash: bytes, traces: list, report: IngestReport) -> Optional[TxGroup]:
    if len(traces) == 1 and not traces[0].trace_address:
        return TxGroup(tx_hash, tuple(traces), traces[0].from_address)
    traces.sort(key=_by_trace_address)
    for a, b in zip(traces, traces[1:]):
        if a.trace_address == b.trace_address:
            report.quarantined.append(
                (format_hex(tx_hash), f"duplicate trace_address {format_trace_address(a.trace_address)!r}")
            )
            report.quarantined_traces += len(traces)
            return None
    if traces[0].trace_address != ():
        report.quarantined.append((format_hex(tx_hash), "no root trace"))
        report.quarantined_traces += len(traces)
        return None
    return TxGroup(tx_hash, tuple(traces), traces[0].from_address)


def _spill(groups: dict, tmpdir: str, n: int) -> str:
    path = os.path.join(tmpdir, f"run{n:05d}.pkl")
    with open(path, "wb") as fh:
        for key in sorted(groups, key=lambda h: (groups[h][0].block_number, h)):
            pickle.dump((groups[key][0].block_number, key, groups[key]), fh, protocol=pickle.HIGHEST_PROTOCOL)
    return path


def _read_run(path: str):
    with open(path, "rb") as fh:
        while True:
            try:
                yield pickle.load(fh)
            except EOFError:
                return


@contextlib.contextmanager
def _bulk_allocation():
    """Run a bulk load with cyclic GC off, then freeze what it allocated.

    Buffered records hold no cycles. Without this, collections triggered later keep
    rescanning millions of live tuples, which roughly doubles the grouping cost.
    Callers pair it with ``gc.unfreeze()`` once the buffer is released.
    """
    was_enabled = gc.isenabled()
    gc.disable()
    try:
        yield
    finally:
        gc.freeze()
        if was_enabled:
            gc.enable()


def group_by_transaction(
    records: Iterable[TraceRecord],
    report: Optional[IngestReport] = None,
    memory_budget: int = DEFAULT_MEMORY_BUDGET,
    presorted: bool = False,
) -> Iterator[TxGroup]:
    """Group traces into transactions, emitted by ascending (block_number, tx hash).

    Input need not be sorted. Up to ``memory_budget`` records are buffered; beyond that
    sorted runs are spilled to temporary files and merged. A transaction split across
    runs is reassembled in the merge. ``presorted`` streams contiguous groups from
    input already in canonical order (an index file) and raises if the order breaks.
    """
    report = report if report is not None else IngestReport()
    if presorted:
        yield from _group_presorted(records, report)
        return

    groups: dict = {}
    order: list = []  # (block_number of first trace, tx hash), one per buffered transaction
    held = 0
    runs: list = []
    with tempfile.TemporaryDirectory(prefix="proxyprobe-sort-") as tmpdir:
        try:
            with _bulk_allocation():
                for rec in records:
                    h = rec.transaction_hash
                    bucket = groups.get(h)
                    if bucket is None:
                        groups[h] = [rec]
                        order.append((rec.block_number, h))
                    else:
                        bucket.append(rec)
                    held += 1
                    if held >= memory_budget:
                        runs.append(_spill(groups, tmpdir, len(runs)))
                        groups.clear()
                        order.clear()
                        held = 0
                if not runs:
                    order.sort()
            if not runs:
                pop = groups.pop
                for _, h in order:
                    traces = pop(h)
                    if len(traces) == 1 and not traces[0].trace_address:
                        yield _new_tuple(TxGroup, (h, (traces[0],), traces[0].from_address))
                        continue
                    g = _finish_group(h, traces, report)
                    if g is not None:
                        yield g
                return
        finally:
            order = None
            gc.unfreeze()

        if groups:
            runs.append(_spill(groups, tmpdir, len(runs)))
            groups.clear()
        merged = heapq.merge(*(_read_run(p) for p in runs), key=lambda item: (item[0], item[1]))
        for (_, key), items in itertools.groupby(merged, key=lambda item: (item[0], item[1])):
            traces = [t for _, _, chunk in items for t in chunk]
            g = _finish_group(key, traces, report)
            if g is not None:
                yield g


def _group_presorted(records, report):
    cur_key = None
    cur: list = []
    last = None
    for rec in records:
        if rec.transaction_hash != cur_key:
            if cur:
                key = _group_key(cur)
                if last is not None and key <= last:
                    raise IngestError("index traces are not in canonical order")
                last = key
                g = _finish_group(cur_key, cur, report)
                if g is not None:
                    yield g
            cur_key = rec.transaction_hash
            cur = [rec]
        else:
            cur.append(rec)
    if cur:
        key = _group_key(cur)
        if last is not None and key <= last:
            raise IngestError("index traces are not in canonical order")
        g = _finish_group(cur_key, cur, report)
        if g is not None:
            yield g


def trace_to_json(t: TraceRecord) -> dict:
    row = {
        "transaction_hash": format_hex(t.transaction_hash),
        "trace_address": format_trace_address(t.trace_address),
        "from_address": str(t.from_address),
        "to_address": str(t.to_address) if t.to_address is not None else None,
        "call_type": t.call_type.value,
        "input": format_hex(t.input),
        "output": format_hex(t.output),
        "gas_used": t.gas_used,
        "status": 1 if t.status else 0,
        "value": t.value,
        "block_number": t.block_number,
        "block_timestamp": format_timestamp(t.block_timestamp),
    }
    if t.gas_price is not None:
        row["gas_price"] = t.gas_price
    return row


def contract_to_json(c: ContractRecord) -> dict:
    return {
        "address": str(c.address),
        "bytecode": format_hex(c.bytecode),
        "block_timestamp": format_timestamp(c.created_at),
        "block_number": c.block_number,
        "transaction_hash": format_hex(c.creation_tx),
    }


def dump_jsonl(rows: Iterable[dict], path) -> None:
    with open(path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row, separators=(",", ":"), sort_keys=False))
            fh.write("\n")


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


def build_index(
    traces_path,
    contracts_path,
    index_dir,
    strict: bool = False,
    memory_budget: int = DEFAULT_MEMORY_BUDGET,
) -> tuple[Corpus, IngestReport]:
    """Validate both inputs and write the canonical index into ``index_dir``.

    Produces ``traces.jsonl`` (grouped, ordered by block/tx/trace_address),
    ``contracts.jsonl`` (ordered by address), ``errors.json`` and ``manifest.json``.
    The output bytes depend only on the input bytes.
    """
    index_dir = Path(index_dir)
    index_dir.mkdir(parents=True, exist_ok=True)
    report = IngestReport()

    contracts = contract_lookup(contracts_path, report, strict)
    dump_jsonl(
        (contract_to_json(contracts[a]) for a in sorted(contracts)),
        index_dir / "contracts.jsonl",
    )

    groups = group_by_transaction(load_traces(traces_path, report, strict), report, memory_budget)
    with open(index_dir / "traces.jsonl", "w") as fh:
        dumps = json.dumps
        for g in groups:
            for t in g.traces:
                fh.write(dumps(trace_to_json(t), separators=(",", ":")))
                fh.write("\n")

    with open(index_dir / "errors.json", "w") as fh:
        json.dump(report.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")

    manifest = {
        "inputs": {
            "traces": file_digest(traces_path),
            "contracts": file_digest(contracts_path),
        },
        "outputs": {
            name: file_digest(index_dir / name)
            for name in ("traces.jsonl", "contracts.jsonl", "errors.json")
        },
        "accepted_traces": report.accepted,
        "contracts": len(contracts),
        "quarantined": len(report.quarantined),
        "errors": len(report.errors),
    }
    with open(index_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return Corpus(Path(traces_path), Path(contracts_path), index_dir), report


def iter_index_groups(corpus: Corpus, report: Optional[IngestReport] = None) -> Iterator[TxGroup]:
    """Stream transaction groups from an index built by :func:`build_index`."""
    return group_by_transaction(load_traces(corpus.index_dir / "traces.jsonl", report), report, presorted=True)


def index_contracts(corpus: Corpus) -> dict:
    return contract_lookup(corpus.index_dir / "contracts.jsonl")
