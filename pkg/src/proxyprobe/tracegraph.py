"""Per-transaction call graphs and the multi-contract transaction series."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

from .ingest import TxGroup
from .model import CallType, Month, month_range, parent_of


@dataclass(frozen=True)
class CallGraph:
    nodes: tuple  # addresses, in first-appearance order
    edges: tuple  # (parent trace_address, child trace_address, child CallType)

    def children(self, trace_address: tuple) -> list:
        return [child for parent, child, _ in self.edges if parent == trace_address]


def build_call_graph(tx: TxGroup) -> CallGraph:
    present = {t.trace_address for t in tx.traces}
    nodes: dict = {}
    edges = []
    for t in tx.traces:  # already ordered by trace_address
        nodes.setdefault(t.from_address, None)
        if t.to_address is not None:
            nodes.setdefault(t.to_address, None)
        if t.trace_address:
            edges.append((parent_of(t.trace_address, present), t.trace_address, t.call_type))
    return CallGraph(tuple(nodes), tuple(edges))


def is_multi_contract(tx: TxGroup, contracts: Mapping) -> bool:
    """True iff some internal message call links two different contracts."""
    for t in tx.traces:
        if (
            t.trace_address
            and t.call_type.is_message_call
            and t.to_address is not None
            and t.from_address != t.to_address
            and t.from_address in contracts
            and t.to_address in contracts
        ):
            return True
    return False


def has_call_type(tx: TxGroup, call_type: CallType) -> bool:
    return any(t.call_type is call_type for t in tx.traces if t.trace_address)


@dataclass
class MonthlySeries:
    """Month -> (numerator, denominator). Denominator is None for plain counts."""

    points: dict = field(default_factory=dict)

    def add(self, month: Month, numerator: int, denominator: Optional[int] = None) -> None:
        prev = self.points.get(month)
        if prev is None:
            self.points[month] = (numerator, denominator)
            return
        num, den = prev
        if denominator is not None:
            den = (den or 0) + denominator
        self.points[month] = (num + numerator, den)

    def merge(self, other: "MonthlySeries") -> "MonthlySeries":
        out = MonthlySeries(dict(self.points))
        for m, (n, d) in other.points.items():
            out.add(m, n, d)
        return out

    def ratio(self, month: Month) -> Optional[float]:
        num, den = self.points[month]
        if not den:
            return None
        return num / den

    def filled(self) -> "MonthlySeries":
        """Copy with every month between the first and last present."""
        if not self.points:
            return MonthlySeries()
        months = sorted(self.points)
        counts_only = all(d is None for _, d in self.points.values())
        zero = (0, None) if counts_only else (0, 0)
        return MonthlySeries({m: self.points.get(m, zero) for m in month_range(months[0], months[-1])})

    def rows(self) -> list:
        out = []
        for m in sorted(self.points):
            num, den = self.points[m]
            r = self.ratio(m)
            out.append((str(m), num, "" if den is None else den, "" if r is None else repr(round(r, 12))))
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("month", "numerator", "denominator", "ratio"))
            w.writerows(self.rows())


def monthly_multi_contract_ratio(
    groups: Iterable[TxGroup], contracts: Mapping, call_type: Optional[CallType] = None
) -> MonthlySeries:
    """Monthly share of transactions that are multi-contract.

    With ``call_type``, the numerator only counts multi-contract transactions that
    also contain at least one internal trace of that type.
    """
    series = MonthlySeries()
    for tx in groups:
        hit = is_multi_contract(tx, contracts)
        if hit and call_type is not None:
            hit = has_call_type(tx, call_type)
        series.add(Month.of(tx.block_timestamp), int(hit), 1)
    return series.filled()
