"""Deployment lineage: walk creators back to the root EOA and label the chain."""

from __future__ import annotations

import csv
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

from .ingest import TxGroup
from .model import Address, TraceRecord, format_hex, parse_hex

log = logging.getLogger(__name__)

EOA, FA, PF, P = "EOA", "FA", "PF", "P"
LABELS = (EOA, FA, PF, P)
ON_CHAIN, OFF_CHAIN = "on-chain", "off-chain"
MAX_DEPTH = 32
SEPARATOR = " > "


@dataclass(frozen=True)
class Creation:
    trace: TraceRecord
    sender: Address  # root EOA of the creating transaction

    @property
    def deployer(self) -> Address:
        return self.trace.from_address


class CreationIndex:
    """Successful CREATE/CREATE2 traces keyed by the created address."""

    def __init__(self):
        self._by_addr: dict = {}
        self.warnings: list = []

    @classmethod
    def from_groups(cls, groups: Iterable[TxGroup]) -> "CreationIndex":
        idx = cls()
        for tx in groups:
            idx.add_group(tx)
        return idx

    def add_group(self, tx: TxGroup) -> None:
        for t in tx.traces:
            if t.call_type.is_create and t.status and t.to_address is not None:
                self._by_addr.setdefault(t.to_address, []).append(Creation(t, tx.sender))

    def all(self, address) -> list:
        return sorted(self._by_addr.get(address, ()), key=lambda c: c.trace.sort_key)

    def __iter__(self):
        return iter(self._by_addr)

    def __len__(self):
        return len(self._by_addr)

    def find_creation(self, address) -> Optional[Creation]:
        """Earliest successful creation of ``address``; warns when it was created again."""
        found = self._by_addr.get(address)
        if not found:
            return None
        if len(found) > 1:
            msg = f"{address} created {len(found)} times; using the earliest"
            if msg not in self.warnings:
                log.warning(msg)
                self.warnings.append(msg)
        return min(found, key=lambda c: c.trace.sort_key)


def find_creation(index: CreationIndex, address):
    """(creation trace, deployer) or None."""
    c = index.find_creation(address)
    if c is None:
        return None
    return c.trace, c.deployer


@dataclass
class CreationChain:
    proxy: Address
    nodes: list  # [(Address, label)], root EOA first
    creation_txs: list  # tx hash for each creation step, aligned with nodes[1:]
    creation_gas: list = field(default_factory=list)  # gas_used per creation step
    complete: bool = True
    problem: str = ""

    @property
    def labels(self) -> list:
        return [label for _, label in self.nodes]

    @property
    def signature(self) -> str:
        return SEPARATOR.join(self.labels)

    @property
    def style(self) -> Optional[str]:
        if not self.complete:
            return None
        return style_of(self.signature)

    @property
    def factories(self) -> list:
        return [a for a, label in self.nodes[1:-1]]

    def to_json(self) -> dict:
        return {
            "proxy": str(self.proxy),
            "signature": self.signature if self.complete else None,
            "complete": self.complete,
            "problem": self.problem,
            "nodes": [[str(a), label] for a, label in self.nodes],
            "creation_txs": [format_hex(h) for h in self.creation_txs],
            "creation_gas": list(self.creation_gas),
        }

    @classmethod
    def from_json(cls, row: dict) -> "CreationChain":
        return cls(
            proxy=Address.parse(row["proxy"]),
            nodes=[(Address.parse(a), label) for a, label in row["nodes"]],
            creation_txs=[parse_hex(h) for h in row["creation_txs"]],
            creation_gas=[int(g) for g in row.get("creation_gas", [])],
            complete=bool(row["complete"]),
            problem=row.get("problem", ""),
        )


def style_of(signature: str) -> str:
    return OFF_CHAIN if signature == f"{EOA}{SEPARATOR}{P}" else ON_CHAIN


def parse_signature(signature: str) -> list:
    labels = signature.split(SEPARATOR)
    if len(labels) < 2 or labels[0] != EOA or labels[-1] != P or any(
        label not in (FA, PF) for label in labels[1:-1]
    ):
        raise ValueError(f"not a creational pattern: {signature!r}")
    return labels


def build_chain(
    proxy: Address,
    proxy_set,
    creations: CreationIndex,
    contracts: Mapping,
    max_depth: int = MAX_DEPTH,
) -> CreationChain:
    """Walk deployers upward from ``proxy`` until an address that is not a contract.

    Intermediaries are factories (FA), or proxy factories (PF) when they are in
    ``proxy_set``. A missing creation mid-walk yields an incomplete chain; a repeated
    address or more than ``max_depth`` nodes (EOA and proxy included) also marks it
    incomplete.
    """
    walked = [proxy]  # proxy first, walking upward
    txs: list = []
    gas: list = []
    seen = {proxy}
    current = proxy
    while True:
        c = creations.find_creation(current)
        if c is None:
            return _incomplete(proxy, walked, txs, gas, proxy_set, f"no creation trace for {current}")
        txs.append(c.trace.transaction_hash)
        gas.append(c.trace.gas_used)
        deployer = c.deployer
        if deployer in seen:
            return _incomplete(proxy, walked, txs, gas, proxy_set, f"creation cycle at {deployer}")
        seen.add(deployer)
        walked.append(deployer)
        if len(walked) > max_depth:
            return _incomplete(proxy, walked, txs, gas, proxy_set, f"chain longer than {max_depth} nodes")
        if deployer not in contracts:
            break
        current = deployer

    nodes = []
    for i, addr in enumerate(reversed(walked)):
        if i == 0:
            nodes.append((addr, EOA))
        elif addr == proxy:
            nodes.append((addr, P))
        else:
            nodes.append((addr, PF if addr in proxy_set else FA))
    return CreationChain(proxy, nodes, list(reversed(txs)), list(reversed(gas)))


def _incomplete(proxy, walked, txs, gas, proxy_set, problem) -> CreationChain:
    log.info("incomplete chain for %s: %s", proxy, problem)
    nodes = []
    for addr in reversed(walked):
        if addr == proxy:
            nodes.append((addr, P))
        else:
            nodes.append((addr, PF if addr in proxy_set else FA))
    return CreationChain(proxy, nodes, list(reversed(txs)), list(reversed(gas)), False, problem)


def build_chains(proxies: Iterable, creations: CreationIndex, contracts: Mapping) -> dict:
    proxy_set = frozenset(proxies)
    return {p: build_chain(p, proxy_set, creations, contracts) for p in sorted(proxy_set)}


@dataclass(frozen=True)
class CreationalPattern:
    signature: str
    style: str
    context_count: int
    proxy_count: int
    proxy_pct: float


def pattern_catalog(chains: Iterable[CreationChain], contexts: Optional[Iterable] = None) -> list:
    """Group complete chains by signature, most-used first.

    ``context_count`` counts contexts whose representative proxy has that
    signature; it is 0 everywhere when no contexts are supplied.
    """
    chains = list(chains)
    by_proxy = {c.proxy: c for c in chains}
    proxy_counts = Counter(c.signature for c in chains if c.complete)
    context_counts: Counter = Counter()
    for ctx in contexts or ():
        chain = by_proxy.get(ctx.representative)
        if chain is not None and chain.complete:
            context_counts[chain.signature] += 1
    total = sum(proxy_counts.values())
    patterns = [
        CreationalPattern(sig, style_of(sig), context_counts[sig], n, 100.0 * n / total if total else 0.0)
        for sig, n in proxy_counts.items()
    ]
    patterns.sort(key=lambda p: (p.style != OFF_CHAIN, -p.proxy_count, p.signature))
    return patterns


def write_chains(chains: Mapping, path) -> None:
    with open(path, "w") as fh:
        for proxy in sorted(chains):
            fh.write(json.dumps(chains[proxy].to_json(), separators=(",", ":")))
            fh.write("\n")


def read_chains(path) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            if line.strip():
                c = CreationChain.from_json(json.loads(line))
                out[c.proxy] = c
    return out


def write_catalog(patterns: list, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("signature", "style", "context_count", "proxy_count", "proxy_pct"))
        for p in patterns:
            w.writerow((p.signature, p.style, p.context_count, p.proxy_count, f"{p.proxy_pct:.4f}"))
