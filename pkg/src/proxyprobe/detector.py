"""Behavioral proxy detection from delegatecall traces, and scoring against labels.

A contract is confirmed as a proxy when it issues a delegatecall carrying the same
4-byte selector as the call it is currently executing (its parent trace).
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import islice
from typing import Iterable, Mapping, Optional

from . import stats
from .ingest import TxGroup
from .model import Address, CallType, format_hex, format_trace_address, parent_of, parse_hex, parse_trace_address, selector_of

log = logging.getLogger(__name__)


@dataclass
class ProxyFinding:
    proxy: Address
    logic_targets: set = field(default_factory=set)
    first_evidence: tuple = ()  # (block_number, transaction_hash, trace_address)
    evidence_count: int = 0
    failed_evidence: int = 0  # evidence traces with status=0

    def to_json(self) -> dict:
        _, tx, ta = self.first_evidence
        return {
            "proxy": str(self.proxy),
            "logic_targets": sorted(str(a) for a in self.logic_targets),
            "evidence_count": self.evidence_count,
            "failed_evidence": self.failed_evidence,
            "first_evidence_block": self.first_evidence[0],
            "first_evidence_tx": format_hex(tx),
            "first_evidence_trace": format_trace_address(ta),
        }

    @classmethod
    def from_json(cls, row: dict) -> "ProxyFinding":
        return cls(
            proxy=Address.parse(row["proxy"]),
            logic_targets={Address.parse(a) for a in row["logic_targets"]},
            first_evidence=(
                int(row.get("first_evidence_block", 0)),
                parse_hex(row["first_evidence_tx"]),
                parse_trace_address(row["first_evidence_trace"]),
            ),
            evidence_count=int(row["evidence_count"]),
            failed_evidence=int(row.get("failed_evidence", 0)),
        )


def detect_in_tx(tx: TxGroup) -> list:
    """(proxy, logic, evidence trace) for every selector-preserving delegatecall in ``tx``."""
    by_addr = None
    out = []
    for d in tx.traces:
        if d.call_type is not CallType.DELEGATECALL or not d.trace_address or d.to_address is None:
            continue
        sel = selector_of(d.input)
        if sel is None:
            continue
        if by_addr is None:
            by_addr = {t.trace_address: t for t in tx.traces}
        p_addr = parent_of(d.trace_address, by_addr)
        if p_addr is None:
            continue
        parent = by_addr[p_addr]
        if not parent.call_type.is_message_call:
            continue
        if selector_of(parent.input) == sel:
            out.append((d.from_address, d.to_address, d))
    return out


def _merge_hit(findings: dict, proxy, logic, trace) -> None:
    key = (trace.block_number, trace.transaction_hash, trace.trace_address)
    f = findings.get(proxy)
    if f is None:
        findings[proxy] = ProxyFinding(proxy, {logic}, key, 1, 0 if trace.status else 1)
        return
    f.logic_targets.add(logic)
    f.evidence_count += 1
    if not trace.status:
        f.failed_evidence += 1
    if key < f.first_evidence:
        f.first_evidence = key


def _detect_chunk(groups: list) -> dict:
    findings: dict = {}
    for tx in groups:
        if len(tx.traces) == 1:  # a lone root trace has no parent to forward from
            continue
        for proxy, logic, trace in detect_in_tx(tx):
            _merge_hit(findings, proxy, logic, trace)
    return findings


def merge_findings(parts: Iterable[dict]) -> dict:
    out: dict = {}
    for part in parts:
        for proxy, f in part.items():
            g = out.get(proxy)
            if g is None:
                out[proxy] = ProxyFinding(
                    proxy, set(f.logic_targets), f.first_evidence, f.evidence_count, f.failed_evidence
                )
                continue
            g.logic_targets |= f.logic_targets
            g.evidence_count += f.evidence_count
            g.failed_evidence += f.failed_evidence
            g.first_evidence = min(g.first_evidence, f.first_evidence)
    return out


def _chunks(it, size):
    it = iter(it)
    while True:
        chunk = list(islice(it, size))
        if not chunk:
            return
        yield chunk


def detect_corpus(groups: Iterable[TxGroup], workers: int = 1, chunk_size: int = 5000) -> dict:
    """Address -> ProxyFinding over all transactions. Result is order-independent."""
    if workers <= 1:
        return _detect_chunk(groups)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return merge_findings(pool.map(_detect_chunk, _chunks(groups, chunk_size)))


def write_findings(findings: Mapping, path) -> None:
    with open(path, "w") as fh:
        for proxy in sorted(findings):
            fh.write(json.dumps(findings[proxy].to_json(), separators=(",", ":")))
            fh.write("\n")


def read_findings(path) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            if line.strip():
                f = ProxyFinding.from_json(json.loads(line))
                out[f.proxy] = f
    return out


@dataclass(frozen=True)
class ClassScore:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class DetectionReport:
    tp: int
    fp: int
    fn: int
    tn: int
    proxy: ClassScore
    other: ClassScore
    active_recall: Optional[float] = None
    missing: tuple = ()  # ground-truth addresses absent from the corpus

    def to_json(self) -> dict:
        out = {
            "confusion": {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn},
            "proxy": vars(self.proxy),
            "other": vars(self.other),
            "missing": [str(a) for a in self.missing],
        }
        if self.active_recall is not None:
            out["active_recall"] = self.active_recall
        if self.zero_positives:
            out["zero_positives"] = True  # proxy precision 1.0 is a convention here
        return out

    @property
    def zero_positives(self) -> bool:
        return self.tp + self.fp == 0


def _class_score(tp: int, fp: int, fn: int) -> ClassScore:
    # No predicted positives -> precision 1.0; no actual positives -> recall 1.0.
    precision = tp / (tp + fp) if tp + fp else 1.0
    recall = tp / (tp + fn) if tp + fn else 1.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return ClassScore(precision, recall, f1)


def score(
    findings: Mapping,
    ground_truth: Mapping,
    contracts: Optional[Mapping] = None,
    active: Optional[set] = None,
) -> DetectionReport:
    """Precision/recall/F1 for the proxy and the other class.

    ``ground_truth`` maps address -> ``"proxy"`` or ``"other"``. Addresses missing
    from ``contracts`` (when given) are excluded and listed. ``active``, if given, is
    the subset of labeled proxies that were ever exercised, for the active-only recall.
    """
    missing = []
    tp = fp = fn = tn = 0
    active_hit = active_total = 0
    for addr in sorted(ground_truth):
        label = ground_truth[addr]
        if label not in ("proxy", "other"):
            raise ValueError(f"unknown ground-truth label {label!r} for {addr}")
        if contracts is not None and addr not in contracts:
            missing.append(addr)
            continue
        flagged = addr in findings
        if label == "proxy":
            if flagged:
                tp += 1
            else:
                fn += 1
            if active is not None and addr in active:
                active_total += 1
                active_hit += flagged
        elif flagged:
            fp += 1
        else:
            tn += 1
    if missing:
        log.warning("%d ground-truth addresses missing from corpus; excluded", len(missing))
    return DetectionReport(
        tp,
        fp,
        fn,
        tn,
        proxy=_class_score(tp, fp, fn),
        other=_class_score(tn, fn, fp),
        active_recall=(active_hit / active_total if active_total else 1.0) if active is not None else None,
        missing=tuple(missing),
    )


def read_ground_truth(path) -> tuple[dict, set]:
    """CSV with columns address,label[,active]. Returns (labels, active proxy set)."""
    labels, active = {}, set()
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            addr = Address.parse(row["address"])
            labels[addr] = row["label"].strip().lower()
            if labels[addr] == "proxy" and row.get("active", "1").strip() in ("1", "true", "True"):
                active.add(addr)
    return labels, active


def logic_per_proxy_ccdf(findings: Mapping) -> "stats.Ccdf":
    """Distribution of how many distinct logic contracts each proxy delegated to."""
    if not findings:
        raise ValueError("no findings")
    return stats.ccdf([len(f.logic_targets) for f in findings.values()])
