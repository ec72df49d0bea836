"""Usage contexts and the prevalence series built on top of them.

A usage context is a connected component of the proxy/logic delegation graph,
computed separately inside each (bytecode digest, immediate deployer) cluster.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from datetime import datetime
from typing import Iterable, Mapping, Optional

from .ingest import TxGroup
from .lineage import CreationIndex
from .model import Address, CallType, Month, format_timestamp, month_range, parse_timestamp
from .tracegraph import MonthlySeries, is_multi_contract

log = logging.getLogger(__name__)


class UnionFind:
    def __init__(self):
        self.parent: dict = {}
        self.size: dict = {}

    def add(self, x) -> None:
        if x not in self.parent:
            self.parent[x] = x
            self.size[x] = 1

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]

    def groups(self) -> list:
        out: dict = {}
        for x in self.parent:
            out.setdefault(self.find(x), []).append(x)
        return list(out.values())


def connected_components(edges: Iterable[tuple], nodes: Iterable = ()) -> list:
    """Components of an undirected graph as a list of sets."""
    uf = UnionFind()
    for n in nodes:
        uf.add(n)
    for a, b in edges:
        uf.add(a)
        uf.add(b)
        uf.union(a, b)
    return [set(g) for g in uf.groups()]


@dataclass(frozen=True)
class UsageContext:
    id: str
    cluster_key: tuple  # (bytecode sha256 hex, deployer Address or None)
    members: frozenset
    logics: frozenset
    representative: Address
    started_at: Optional[datetime]
    style: Optional[str] = None

    @property
    def size(self) -> int:
        return len(self.members)

    def to_json(self) -> dict:
        digest, deployer = self.cluster_key
        return {
            "id": self.id,
            "cluster_key": [digest, str(deployer) if deployer is not None else None],
            "size": self.size,
            "representative": str(self.representative),
            "started_at": format_timestamp(self.started_at) if self.started_at else None,
            "style": self.style,
            "members": sorted(str(a) for a in self.members),
            "logics": sorted(str(a) for a in self.logics),
        }

    @classmethod
    def from_json(cls, row: dict) -> "UsageContext":
        digest, deployer = row["cluster_key"]
        return cls(
            id=row["id"],
            cluster_key=(digest, Address.parse(deployer) if deployer else None),
            members=frozenset(Address.parse(a) for a in row["members"]),
            logics=frozenset(Address.parse(a) for a in row["logics"]),
            representative=Address.parse(row["representative"]),
            started_at=parse_timestamp(row["started_at"]) if row["started_at"] else None,
            style=row.get("style"),
        )


def context_id(members) -> str:
    h = hashlib.sha256(b"".join(sorted(members))).hexdigest()
    return h[:16]


def cluster_contexts(
    findings: Mapping,
    contracts: Mapping,
    creations: Optional[CreationIndex] = None,
    chains: Optional[Mapping] = None,
) -> list:
    """One UsageContext per connected component, ordered by (started_at, id).

    The deployer is the immediate creator of each proxy (which may be a factory).
    Proxies without a contract record are clustered under the digest of empty bytes.
    """
    clusters: dict = {}
    created: dict = {}
    for proxy in sorted(findings):
        rec = contracts.get(proxy)
        if rec is None:
            log.warning("proxy %s has no contract record; clustering with empty bytecode", proxy)
            code = b""
        else:
            code = rec.bytecode
        creation = creations.find_creation(proxy) if creations is not None else None
        deployer = creation.deployer if creation is not None else None
        if rec is not None:
            created[proxy] = rec.created_at
        elif creation is not None:
            created[proxy] = creation.trace.block_timestamp
        else:
            created[proxy] = None
        key = (hashlib.sha256(code).hexdigest(), deployer)
        clusters.setdefault(key, []).append(proxy)

    contexts = []
    for key in sorted(clusters, key=lambda k: (k[0], k[1] or b"")):
        members = clusters[key]
        # logic nodes are tagged so a logic that is also a member proxy stays a distinct node
        edges = [(("p", p), ("l", logic)) for p in members for logic in findings[p].logic_targets]
        for comp in connected_components(edges, nodes=[("p", p) for p in members]):
            proxies = frozenset(a for kind, a in comp if kind == "p")
            logics = frozenset(a for kind, a in comp if kind == "l")
            rep = min(proxies, key=lambda a: (created[a] is None, created[a] or datetime.min, a))
            style = None
            if chains is not None and rep in chains and chains[rep].complete:
                style = chains[rep].style
            contexts.append(
                UsageContext(context_id(proxies), key, proxies, logics, rep, created[rep], style)
            )
    contexts.sort(key=lambda c: (c.started_at is None, c.started_at or datetime.min, c.id))
    return contexts


def write_contexts(contexts: Iterable[UsageContext], path) -> None:
    with open(path, "w") as fh:
        for c in contexts:
            fh.write(json.dumps(c.to_json(), separators=(",", ":")))
            fh.write("\n")


def read_contexts(path) -> list:
    with open(path) as fh:
        return [UsageContext.from_json(json.loads(line)) for line in fh if line.strip()]


def monthly_context_counts(contexts: Iterable[UsageContext]) -> MonthlySeries:
    series = MonthlySeries()
    for c in contexts:
        if c.started_at is not None:
            series.add(Month.of(c.started_at), 1)
    return series.filled()


@dataclass(frozen=True)
class AdoptionPoint:
    proxy_initiating_eoas: int
    any_contract_eoas: int

    @property
    def ratio(self) -> float:
        return self.proxy_initiating_eoas / self.any_contract_eoas if self.any_contract_eoas else 0.0


def adoption_series(groups: Iterable[TxGroup], proxy_set) -> dict:
    """Month -> cumulative distinct EOAs that initiated (proxy) contract creations.

    An EOA initiates a creation when it sends a transaction containing a successful
    CREATE/CREATE2, whether it deploys directly or asks a factory to.
    """
    first_any: dict = {}
    first_proxy: dict = {}
    for tx in groups:
        month = Month.of(tx.block_timestamp)
        created = [t.to_address for t in tx.traces if t.call_type.is_create and t.status and t.to_address]
        if not created:
            continue
        s = tx.sender
        if s not in first_any or month < first_any[s]:
            first_any[s] = month
        if any(a in proxy_set for a in created):
            if s not in first_proxy or month < first_proxy[s]:
                first_proxy[s] = month
    if not first_any:
        return {}
    months = month_range(min(first_any.values()), max(first_any.values()))
    out = {}
    for m in months:
        out[m] = AdoptionPoint(
            sum(1 for v in first_proxy.values() if v <= m),
            sum(1 for v in first_any.values() if v <= m),
        )
    return out


def adoption_to_series(adoption: Mapping) -> MonthlySeries:
    return MonthlySeries({m: (p.proxy_initiating_eoas, p.any_contract_eoas) for m, p in adoption.items()})


def touches_proxy(tx: TxGroup, proxy_set) -> bool:
    """A proxy is exercised: called as a message-call target, or delegating."""
    for t in tx.traces:
        if t.call_type.is_message_call and t.to_address in proxy_set:
            return True
        if t.call_type is CallType.DELEGATECALL and t.from_address in proxy_set:
            return True
    return False


def utilization_series(groups: Iterable[TxGroup], proxy_set, contracts: Mapping) -> tuple:
    """(share of all txs touching a proxy, share of multi-contract txs touching one)."""
    every = MonthlySeries()
    multi = MonthlySeries()
    for tx in groups:
        m = Month.of(tx.block_timestamp)
        hit = int(touches_proxy(tx, proxy_set))
        every.add(m, hit, 1)
        if is_multi_contract(tx, contracts):
            multi.add(m, hit, 1)
        else:
            multi.add(m, 0, 0)
    return every.filled(), multi.filled()


def inbound_counts(groups: Iterable[TxGroup]) -> dict:
    """Address -> number of distinct transactions with a message call into it."""
    counts: dict = {}
    for tx in groups:
        seen = {t.to_address for t in tx.traces if t.call_type.is_message_call and t.to_address is not None}
        for a in seen:
            counts[a] = counts.get(a, 0) + 1
    return counts


def activity_levels(groups: Iterable[TxGroup], proxy_set, contracts: Mapping) -> tuple:
    """(inbound tx counts per proxy, per non-proxy contract), each ordered by address."""
    counts = inbound_counts(groups)
    proxies = [counts.get(a, 0) for a in sorted(contracts) if a in proxy_set]
    others = [counts.get(a, 0) for a in sorted(contracts) if a not in proxy_set]
    return proxies, others
