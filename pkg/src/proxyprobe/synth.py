"""Deterministic synthetic corpora with planted proxies, lineage patterns and traffic shapes.

The generator records what it planted (labels, kinds, purposes, signatures and
per-month counts) from its own bookkeeping, so analyses can be checked against it.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import os
import random
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Mapping, Optional

from . import templates as T
from .classify import IMPLEMENTATION_SELECTOR, SlotCatalog
from .lineage import EOA, MAX_DEPTH, P, PF, SEPARATOR, parse_signature
from .model import Address, Month, format_hex, keccak256, selector_from_signature

REFERENCE_SIGNATURES = (
    "EOA > P",
    "EOA > FA > P",
    "EOA > PF > P",
    "EOA > FA > FA > P",
    "EOA > FA > FA > FA > FA > P",
    "EOA > FA > PF > P",
    "EOA > PF > PF > P",
    "EOA > FA > PF > PF > P",
    "EOA > FA > FA > FA > P",
    "EOA > FA > FA > PF > P",
    "EOA > FA > FA > PF > PF > P",
    "EOA > FA > FA > PF > PF > PF > P",
)

# Kinds cycled over the non-clone active proxies, with the purpose each template implies.
KIND_PLAN = (
    ("erc1967", "upgradeability"),
    ("erc1967-beacon", "upgradeability"),
    ("erc1822-uups", "upgradeability"),
    ("openzeppelin-legacy", "upgradeability"),
    ("gnosis-safe-proxy", "upgradeability"),
    ("erc897", "forwarder"),
    ("customized-hardcoded", "forwarder"),
    ("customized-slot", "upgradeability"),
)

OZ_LEGACY_ADMIN = keccak256(b"org.zeppelinos.proxy.admin")
ERC897_SLOT = 3
CUSTOM_SLOT = 5
USER_FUNCTIONS = tuple(
    selector_from_signature(s)
    for s in (
        "transfer(address,uint256)",
        "approve(address,uint256)",
        "balanceOf(address)",
        "mint(uint256)",
        "deposit()",
        "withdraw(uint256)",
    )
)
DEPLOY = selector_from_signature("deploy(bytes32)")
HELPER = selector_from_signature("helper(uint256)")
FIRST_BLOCK = 7_000_000


class FixtureError(ValueError):
    pass


@dataclass
class FixtureSpec:
    seed: int = 1
    n_transactions: int = 1000
    active_proxies: int = 20
    inactive_proxies: int = 9
    non_proxies: int = 80
    decoys: int = 6  # non-proxies delegating with a selector of their own
    erc1167: int = 5
    patterns: tuple = REFERENCE_SIGNATURES
    start: str = "2019-01"
    months: int = 24
    eoas: int = 60
    second_logic_share: float = 0.3
    failed_share: float = 0.03
    failed_creates: int = 3

    @classmethod
    def from_mapping(cls, values: Mapping) -> "FixtureSpec":
        """Build from string values (config files); unknown keys are rejected."""
        kwargs = {}
        fields = {f.name: f for f in dataclasses.fields(cls)}
        for key, raw in values.items():
            if key not in fields:
                raise FixtureError(f"unknown fixture key {key!r}")
            default = fields[key].default
            if isinstance(default, tuple):
                kwargs[key] = tuple(s.strip() for s in str(raw).split(";") if s.strip())
            elif isinstance(default, bool):
                kwargs[key] = str(raw).lower() in ("1", "true", "yes")
            elif isinstance(default, int):
                kwargs[key] = int(raw)
            elif isinstance(default, float):
                kwargs[key] = float(raw)
            else:
                kwargs[key] = str(raw)
        return cls(**kwargs)

    @classmethod
    def desk(cls) -> "FixtureSpec":
        return cls()

    @classmethod
    def stress(cls) -> "FixtureSpec":
        return cls(seed=2, n_transactions=660_000, months=36)

    def to_json(self) -> dict:
        d = dataclasses.asdict(self)
        d["patterns"] = list(self.patterns)
        return d


def pattern_closure(patterns) -> list:
    """Planted signatures plus those of every proxy factory on their paths.

    A PF node is itself a proxy whose own chain is the prefix ending at it, so a
    corpus planting ``EOA > PF > P`` necessarily also contains ``EOA > P``.
    """
    out = set()
    for sig in patterns:
        labels = parse_signature(sig)
        out.add(SEPARATOR.join(labels))
        for i, label in enumerate(labels[1:-1], start=1):
            if label == PF:
                out.add(SEPARATOR.join(labels[:i] + [P]))
    return sorted(out, key=lambda s: (len(s), s))


@dataclass
class _Contract:
    address: Address
    role: str  # proxy, logic, factory, factory_logic, beacon, library, libuser, plain
    bytecode: bytes = b""
    creator: Optional[Address] = None  # EOA or contract
    owner: Optional[Address] = None  # root EOA sending the creation tx
    created: float = 0.0  # seconds since corpus start
    deps: list = field(default_factory=list)
    kind: Optional[str] = None
    purpose: Optional[str] = None
    active: bool = False
    logics: list = field(default_factory=list)  # [(logic Address, usable from seconds)]
    beacon: Optional[Address] = None
    signature: Optional[str] = None
    storage: dict = field(default_factory=dict)
    calls: dict = field(default_factory=dict)
    is_pf: bool = False


def _word(a: Address) -> bytes:
    return bytes(a).rjust(32, b"\0")


class _Generator:
    def __init__(self, spec: FixtureSpec):
        self.spec = spec
        self.rng = random.Random(spec.seed)
        self.counter = 0
        self.contracts: dict = {}
        self.order: list = []
        first = Month.parse(spec.start)
        self.t0 = datetime(first.year, first.month, 1, tzinfo=timezone.utc)
        last = first
        for _ in range(spec.months):
            last = last.next()
        self.span = (datetime(last.year, last.month, 1, tzinfo=timezone.utc) - self.t0).total_seconds()
        self.eoas = [self._address("eoa") for _ in range(spec.eoas)]

    def _address(self, tag: str) -> Address:
        self.counter += 1
        return Address(keccak256(f"{self.spec.seed}:{tag}:{self.counter}".encode())[-20:])

    def _new(self, role: str, creator=None, owner=None, deps=(), **kw) -> _Contract:
        c = _Contract(self._address(role), role, creator=creator, owner=owner, deps=list(deps), **kw)
        if c.creator is None:
            c.creator = c.owner = self.rng.choice(self.eoas)
        self.contracts[c.address] = c
        self.order.append(c)
        return c

    # -- planting -------------------------------------------------------------

    def plant(self) -> None:
        spec = self.spec
        closure = pattern_closure(spec.patterns)
        self.signatures = closure
        n_pattern_proxies = len(closure)
        filler = spec.active_proxies - n_pattern_proxies - spec.erc1167
        if filler < 0:
            raise FixtureError(
                f"{spec.active_proxies} active proxies cannot hold {n_pattern_proxies} pattern proxies"
                f" and {spec.erc1167} minimal proxies"
            )
        self.kind_cycle = 0
        self.proxies: list = []

        # trie over node kinds; PF and P are both proxies so prefixes are shared
        trie: dict = {}
        for sig in closure:
            labels = parse_signature(sig)
            key: tuple = ()
            parent = None
            for label in labels[1:]:
                kind = "X" if label in (PF, P) else "F"
                key = key + (kind,)
                node = trie.get(key)
                if node is None:
                    owner = parent.owner if parent is not None else self.rng.choice(self.eoas)
                    if kind == "F":
                        node = self._new(
                            "factory", creator=parent.address if parent else owner, owner=owner,
                            deps=[parent.address] if parent else [],
                        )
                        node.bytecode = T.factory()
                    else:
                        node = self._proxy(creator=parent.address if parent else owner, owner=owner, parent=parent)
                    trie[key] = node
                parent = node
            parent.signature = sig

        if spec.erc1167:
            target = self._new("logic")
            target.bytecode = T.logic_contract(slots=(0, 1))
            cf = self._new("factory")
            cf.bytecode = T.factory()
            for _ in range(spec.erc1167):
                p = self._new("proxy", creator=cf.address, owner=cf.owner, deps=[cf.address, target.address])
                p.bytecode = T.minimal_proxy(target.address)
                p.kind, p.purpose, p.active, p.signature = "erc1167-minimal", "forwarder", True, "EOA > FA > P"
                p.logics = [(target.address, 0.0)]
                self.proxies.append(p)

        for _ in range(filler):
            p = self._proxy(creator=None, owner=None, parent=None)
            p.signature = f"{EOA}{SEPARATOR}{P}"

        for _ in range(spec.inactive_proxies):
            p = self._new("proxy")
            p.bytecode = T.slot_proxy(SlotCatalog.ERC1967_IMPL, SlotCatalog.ERC1967_ADMIN)
            p.kind, p.purpose, p.signature = "erc1967", "upgradeability", f"{EOA}{SEPARATOR}{P}"
            self.proxies.append(p)

        # non-proxies: a shared library, decoy users, then plain contracts up to the quota
        library = None
        if spec.decoys:
            library = self._new("library")
            library.bytecode = T.logic_contract(slots=(7,))
            for _ in range(spec.decoys):
                u = self._new("libuser", deps=[library.address])
                u.bytecode = T.library_user(library.address)
        others = sum(1 for c in self.order if c.role != "proxy")
        for _ in range(max(0, spec.non_proxies - others)):
            c = self._new("plain")
            c.bytecode = T.logic_contract(slots=(self.rng.randrange(8, 64),))

    def _proxy(self, creator, owner, parent) -> _Contract:
        kind, purpose = KIND_PLAN[self.kind_cycle % len(KIND_PLAN)]
        self.kind_cycle += 1
        deps = [parent.address] if parent is not None else []
        if parent is not None and parent.role == "proxy":
            parent.is_pf = True
        p = self._new("proxy", creator=creator, owner=owner, deps=deps)
        p.kind, p.purpose, p.active = kind, purpose, True
        self.proxies.append(p)

        def logic_code():
            if kind == "erc1822-uups":
                return T.logic_contract(slots=(0, 1), upgrade_slot=SlotCatalog.ERC1822_PROXIABLE)
            if kind == "gnosis-safe-proxy":
                return T.logic_contract(slots=(0, 1))
            return T.logic_contract(slots=(1, 2))

        n_logics = 1
        if purpose == "upgradeability" and kind != "gnosis-safe-proxy" and self.rng.random() < self.spec.second_logic_share:
            n_logics = 2
        logics = []
        for i in range(n_logics):
            lg = self._new("logic")
            lg.bytecode = logic_code()
            logics.append(lg)
        p.deps += [lg.address for lg in logics[:1]]
        p.logics = [(lg.address, 0.0) for lg in logics]
        if n_logics == 2:
            logics[1].deps.append(p.address)  # created after the proxy, then switched to
        latest = logics[-1].address

        if kind == "erc1967":
            p.bytecode = T.slot_proxy(SlotCatalog.ERC1967_IMPL, SlotCatalog.ERC1967_ADMIN)
            p.storage = {SlotCatalog.ERC1967_IMPL: _word(latest), SlotCatalog.ERC1967_ADMIN: _word(p.owner)}
        elif kind == "erc1967-beacon":
            b = self._new("beacon", owner=p.owner, creator=p.owner)
            b.bytecode = T.beacon()
            b.storage = {(0).to_bytes(32, "big"): _word(p.owner), (1).to_bytes(32, "big"): _word(latest)}
            b.calls = {IMPLEMENTATION_SELECTOR: _word(latest)}
            # beacon must exist before the proxy; move it ahead in creation order
            self.order.remove(b)
            self.order.insert(self.order.index(p), b)
            p.deps.append(b.address)
            p.beacon = b.address
            p.bytecode = T.beacon_proxy(SlotCatalog.ERC1967_BEACON)
            p.storage = {SlotCatalog.ERC1967_BEACON: _word(b.address)}
        elif kind == "erc1822-uups":
            p.bytecode = T.slot_proxy(SlotCatalog.ERC1822_PROXIABLE, upgradeable=False)
            p.storage = {SlotCatalog.ERC1822_PROXIABLE: _word(latest)}
        elif kind == "openzeppelin-legacy":
            p.bytecode = T.slot_proxy(SlotCatalog.OZ_LEGACY_IMPL, OZ_LEGACY_ADMIN)
            p.storage = {SlotCatalog.OZ_LEGACY_IMPL: _word(latest), OZ_LEGACY_ADMIN: _word(p.owner)}
        elif kind == "gnosis-safe-proxy":
            p.bytecode = T.gnosis_proxy()
            p.storage = {SlotCatalog.GNOSIS_MASTERCOPY: _word(latest)}
        elif kind == "erc897":
            p.bytecode = T.erc897_proxy(ERC897_SLOT)
            p.storage = {ERC897_SLOT.to_bytes(32, "big"): _word(latest)}
            p.calls = {IMPLEMENTATION_SELECTOR: _word(latest)}
        elif kind == "customized-hardcoded":
            p.bytecode = T.hardcoded_forwarder(latest)
        elif kind == "customized-slot":
            p.bytecode = T.slot_proxy(CUSTOM_SLOT, upgradeable=True)
            p.storage = {CUSTOM_SLOT.to_bytes(32, "big"): _word(latest)}
        return p

    # -- scheduling -----------------------------------------------------------

    def schedule(self) -> None:
        """Creation times respecting dependencies, spread over the first 60% of the span."""
        base = {c.address: self.rng.uniform(0, 0.6 * self.span) for c in self.order}
        done: dict = {}

        def when(addr, stack=()):
            if addr in done:
                return done[addr]
            if addr in stack:
                raise FixtureError(f"dependency cycle at {addr}")
            c = self.contracts[addr]
            t = base[addr]
            parents = list(c.deps)
            if c.creator in self.contracts:
                parents.append(c.creator)
            for d in parents:
                t = max(t, when(d, stack + (addr,)) + 3600)
            done[addr] = c.created = t
            return t

        for c in self.order:
            when(c.address)
        # second logics become usable once created
        for p in self.proxies:
            if len(p.logics) == 2:
                second = self.contracts[p.logics[1][0]]
                p.logics[1] = (second.address, second.created)

    # -- transactions ---------------------------------------------------------

    def _args(self) -> bytes:
        return self.rng.getrandbits(64).to_bytes(32, "big")

    def _delegation(self, p: _Contract, t: float, sel: bytes, prefix: tuple, status: bool) -> list:
        """Traces a proxy emits while serving ``sel``: optional beacon lookup, then the delegatecall."""
        out = []
        i = 0
        logic = p.logics[0][0]
        for addr, since in p.logics:
            if since <= t:
                logic = addr
        if p.beacon is not None:
            out.append(("staticcall", prefix + (i,), p.address, p.beacon, IMPLEMENTATION_SELECTOR, _word(logic), True))
            i += 1
        out.append(("delegatecall", prefix + (i,), p.address, logic, sel + self._args(), b"", status))
        return out

    def creation_tx(self, c: _Contract) -> tuple:
        creator = c.creator
        owner = c.owner
        if creator not in self.contracts:
            traces = [("create", (), creator, c.address, c.bytecode, c.bytecode, True)]
            return owner, traces
        parent = self.contracts[creator]
        traces = [("call", (), owner, parent.address, DEPLOY + self._args(), b"", True)]
        if parent.role == "proxy":
            inner = self._delegation(parent, c.created, DEPLOY, (), True)
            traces += inner
            traces.append(("create", inner[-1][1] + (0,), parent.address, c.address, c.bytecode, c.bytecode, True))
        else:
            traces.append(("create", (0,), parent.address, c.address, c.bytecode, c.bytecode, True))
        return owner, traces

    def usage_tx(self, p: _Contract, t: float, sender: Address) -> list:
        sel = self.rng.choice(USER_FUNCTIONS)
        ok = self.rng.random() >= self.spec.failed_share
        traces = [("call", (), sender, p.address, sel + self._args(), b"", ok)]
        return traces + self._delegation(p, t, sel, (), ok)

    def run(self, out_dir) -> dict:
        spec = self.spec
        rng = self.rng
        self.plant()
        self.schedule()
        os.makedirs(out_dir, exist_ok=True)

        events = []  # (time, seq, kind, payload)
        for seq, c in enumerate(self.order):
            events.append((c.created, seq, "create", c))
            if c.role == "proxy" and c.active:
                events.append((c.created + 600, seq, "use", c))
        for k in range(spec.failed_creates):
            events.append((rng.uniform(0, self.span), len(self.order) + k, "failed_create", rng.choice(self.eoas)))
        events.sort(key=lambda e: (e[0], e[1]))
        n_usage = spec.n_transactions - len(events)
        if n_usage < 0:
            raise FixtureError(f"n_transactions={spec.n_transactions} below the {len(events)} planted transactions")

        by_role: dict = {}
        for c in self.order:
            by_role.setdefault(c.role, []).append(c)
        active = [p for p in self.proxies if p.active]
        alive = {"proxy": [], "plain": [], "libuser": [], "logic": [], "any": []}
        pending = sorted(
            [c for c in self.order if c.role in ("plain", "libuser", "logic")] + active,
            key=lambda c: c.created,
        )
        pending_i = 0
        active_set = {p.address for p in active}

        truth_months: dict = {}
        first_any: dict = {}
        first_proxy: dict = {}

        def month_row(m):
            return truth_months.setdefault(str(m), {"txs": 0, "multi": 0, "multi_delegate": 0, "touch": 0, "multi_touch": 0})

        trace_path = os.path.join(out_dir, "traces.jsonl")
        n_records = 0
        n_tx = 0
        contract_rows = {}
        last_ts = -1
        with open(trace_path, "w") as fh:

            def emit(t: float, sender: Address, traces: list, gas_price: int, created=()):
                nonlocal n_records, n_tx, last_ts
                ts = max(int(self.t0.timestamp() + t), last_ts + 1)
                last_ts = ts
                block = FIRST_BLOCK + n_tx
                txh = keccak256(f"{spec.seed}:tx:{n_tx}".encode())
                n_tx += 1
                stamp = datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
                txhex = format_hex(txh)
                multi = delegate = touch = False
                for call_type, ta, frm, to, data, out, ok in traces:
                    row = {
                        "transaction_hash": txhex,
                        "trace_address": ".".join(map(str, ta)),
                        "from_address": str(frm),
                        "to_address": str(to) if to is not None else None,
                        "call_type": call_type,
                        "input": format_hex(data),
                        "output": format_hex(out),
                        "gas_used": self._gas(call_type, data),
                        "status": 1 if ok else 0,
                        "value": 0,
                        "block_number": block,
                        "block_timestamp": stamp,
                    }
                    if not ta:
                        row["gas_price"] = gas_price
                    fh.write(json.dumps(row, separators=(",", ":")))
                    fh.write("\n")
                    n_records += 1
                    if ta and call_type != "create" and frm != to and frm in self.contracts and to in self.contracts:
                        multi = True
                    if ta and call_type == "delegatecall":
                        delegate = True
                    if call_type != "create" and (to in active_set or (call_type == "delegatecall" and frm in active_set)):
                        touch = True
                for addr in created:
                    contract_rows[addr] = (stamp, block, txhex)
                row = month_row(Month.of(datetime.fromtimestamp(ts, tz=timezone.utc)))
                row["txs"] += 1
                row["multi"] += multi
                row["multi_delegate"] += multi and delegate
                row["touch"] += touch
                row["multi_touch"] += multi and touch
                return Month.of(datetime.fromtimestamp(ts, tz=timezone.utc))

            ei = 0
            for u in range(n_usage + 1):
                t_next = self.span * (u + rng.random()) / max(n_usage, 1) if u < n_usage else float("inf")
                while ei < len(events) and events[ei][0] <= t_next:
                    t, _, kind, payload = events[ei]
                    ei += 1
                    gp = rng.randrange(1, 100) * 10**9
                    if kind == "create":
                        sender, traces = self.creation_tx(payload)
                        m = emit(t, sender, traces, gp, created=(payload.address,))
                        if sender not in first_any or m < first_any[sender]:
                            first_any[sender] = m
                        if payload.address in active_set and (sender not in first_proxy or m < first_proxy[sender]):
                            first_proxy[sender] = m
                    elif kind == "use":
                        emit(t, payload.owner, self.usage_tx(payload, t, payload.owner), gp)
                    else:
                        emit(t, payload, [("create", (), payload, None, b"\x60\x00", b"", False)], gp)
                if u == n_usage:
                    break
                while pending_i < len(pending) and pending[pending_i].created + 600 <= t_next:
                    c = pending[pending_i]
                    pending_i += 1
                    alive["proxy" if c.role == "proxy" else c.role].append(c)
                    alive["any"].append(c)
                self._random_tx(t_next, alive, emit)

        with open(os.path.join(out_dir, "contracts.jsonl"), "w") as fh:
            for addr in sorted(contract_rows):
                stamp, block, txhex = contract_rows[addr]
                c = self.contracts[addr]
                row = {
                    "address": str(addr),
                    "bytecode": format_hex(c.bytecode),
                    "block_timestamp": stamp,
                    "block_number": block,
                    "transaction_hash": txhex,
                }
                fh.write(json.dumps(row, separators=(",", ":")))
                fh.write("\n")

        with open(os.path.join(out_dir, "ground_truth.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("address", "label", "active"))
            for addr in sorted(self.contracts):
                c = self.contracts[addr]
                w.writerow((str(addr), "proxy" if c.role == "proxy" else "other", int(c.active)))

        state = {}
        for addr in sorted(self.contracts):
            c = self.contracts[addr]
            state[str(addr)] = {
                "bytecode": format_hex(c.bytecode),
                "storage": {format_hex(k): format_hex(v) for k, v in sorted(c.storage.items())},
                "calls": {format_hex(k): format_hex(v) for k, v in sorted(c.calls.items())},
            }
        with open(os.path.join(out_dir, "state.json"), "w") as fh:
            json.dump(state, fh, indent=1, sort_keys=True)

        months = sorted(truth_months, key=Month.parse)
        adoption = {}
        if first_any:
            lo, hi = min(first_any.values()), max(first_any.values())
            m = lo
            while m <= hi:
                adoption[str(m)] = [
                    sum(1 for v in first_proxy.values() if v <= m),
                    sum(1 for v in first_any.values() if v <= m),
                ]
                m = m.next()
        truth = {
            "spec": spec.to_json(),
            "transactions": n_tx,
            "records": n_records,
            "signatures": self.signatures,
            "proxies": {
                str(p.address): {
                    "active": p.active,
                    "kind": p.kind,
                    "purpose": p.purpose,
                    "signature": p.signature,
                    "logics": sorted(str(a) for a, _ in p.logics),
                    "proxy_factory": p.is_pf,
                }
                for p in sorted(self.proxies, key=lambda p: p.address)
            },
            "months": {m: truth_months[m] for m in months},
            "adoption": adoption,
        }
        with open(os.path.join(out_dir, "truth.json"), "w") as fh:
            json.dump(truth, fh, indent=1, sort_keys=True)
        return truth

    def _gas(self, call_type: str, data: bytes) -> int:
        if call_type == "create":
            return 32_000 + 200 * len(data) + self.rng.randrange(0, 5_000)
        return 21_000 + self.rng.randrange(0, 60_000)

    def _random_tx(self, t: float, alive: dict, emit) -> None:
        rng = self.rng
        # proxy share ramps up over the span so monthly series have a shape
        frac = t / self.span
        weights = (
            ("proxy", 0.15 + 0.35 * frac),
            ("plain", 0.20),
            ("chain", 0.15),
            ("decoy", 0.08),
            ("logic", 0.07),
            ("transfer", 0.20),
        )
        pick = rng.random() * sum(w for _, w in weights)
        kind = "transfer"
        for name, w in weights:
            if pick < w:
                kind = name
                break
            pick -= w
        sender = rng.choice(self.eoas)
        gp = rng.randrange(1, 100) * 10**9
        if kind == "proxy" and alive["proxy"]:
            p = rng.choice(alive["proxy"])
            emit(t, sender, self.usage_tx(p, t, sender), gp)
        elif kind == "plain" and alive["plain"]:
            c = rng.choice(alive["plain"])
            emit(t, sender, [("call", (), sender, c.address, rng.choice(USER_FUNCTIONS) + self._args(), b"", True)], gp)
        elif kind == "chain" and len(alive["plain"]) >= 2:
            a, b = rng.sample(alive["plain"], 2)
            sel = rng.choice(USER_FUNCTIONS)
            emit(
                t,
                sender,
                [
                    ("call", (), sender, a.address, sel + self._args(), b"", True),
                    ("call", (0,), a.address, b.address, rng.choice(USER_FUNCTIONS) + self._args(), b"", True),
                ],
                gp,
            )
        elif kind == "decoy" and alive["libuser"]:
            u = rng.choice(alive["libuser"])
            lib = self.contracts[u.deps[0]]
            sel = rng.choice(USER_FUNCTIONS)
            emit(
                t,
                sender,
                [
                    ("call", (), sender, u.address, sel + self._args(), b"", True),
                    ("delegatecall", (0,), u.address, lib.address, HELPER + self._args(), b"", True),
                ],
                gp,
            )
        elif kind == "logic" and alive["logic"]:
            c = rng.choice(alive["logic"])
            emit(t, sender, [("call", (), sender, c.address, rng.choice(USER_FUNCTIONS) + self._args(), b"", True)], gp)
        else:
            to = rng.choice(self.eoas)
            emit(t, sender, [("call", (), sender, to, b"", b"", True)], gp)


def gen_fixture(spec: FixtureSpec, out_dir) -> dict:
    """Write traces.jsonl, contracts.jsonl, ground_truth.csv, state.json, truth.json and run.conf."""
    validate(spec)
    truth = _Generator(spec).run(out_dir)
    with open(os.path.join(out_dir, "run.conf"), "w") as fh:
        fh.write(RUN_CONF)
    return truth


# paths resolve against the config file's directory
RUN_CONF = """\
traces = traces.jsonl
contracts = contracts.jsonl
ground_truth = ground_truth.csv
state = state.json
out = run
"""


def validate(spec: FixtureSpec) -> None:
    if spec.n_transactions < 1:
        raise FixtureError("n_transactions must be positive")
    if min(spec.active_proxies, spec.inactive_proxies, spec.non_proxies, spec.decoys, spec.erc1167) < 0:
        raise FixtureError("counts must be non-negative")
    if spec.months < 1 or spec.eoas < 2:
        raise FixtureError("need at least one month and two EOAs")
    for sig in spec.patterns:
        try:
            labels = parse_signature(sig)
        except ValueError as exc:
            raise FixtureError(str(exc)) from None
        if len(labels) > MAX_DEPTH:
            raise FixtureError(f"pattern {sig!r} has {len(labels)} nodes; lineage stops at {MAX_DEPTH}")
    Month.parse(spec.start)
