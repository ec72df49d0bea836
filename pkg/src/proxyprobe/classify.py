"""Reference-implementation fingerprinting and forwarder/upgradeability classification.

Both work from runtime bytecode plus a :class:`StateReader` that answers storage and
call queries, backed either by a JSON fixture or a JSON-RPC node.
"""

from __future__ import annotations

import csv
import enum
import json
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import Mapping, Optional, Protocol

from .evm import OPCODES, basic_blocks, disassemble
from .model import Address, ZERO_WORD, format_hex, parse_hex, selector_from_signature


class SlotCatalog:
    """Well-known proxy storage slots (32-byte words)."""

    # keccak256("eip1967.proxy.implementation") - 1
    ERC1967_IMPL = bytes.fromhex("360894a13ba1a3210667c828492db98dca3e2076cc3735a920a3ca505d382bbc")
    # keccak256("eip1967.proxy.admin") - 1
    ERC1967_ADMIN = bytes.fromhex("b53127684a568b3173ae13b9f8a6016e243e63b6e8ee1178d6a717850b5d6103")
    # keccak256("eip1967.proxy.beacon") - 1
    ERC1967_BEACON = bytes.fromhex("a3f0ad74e5423aebfd80d3ef4346578335a9a72aeaee59ff6cb3582b35133d50")
    # keccak256("org.zeppelinos.proxy.implementation")
    OZ_LEGACY_IMPL = bytes.fromhex("7050c9e0f4ca769c69bd3a8ef740bc37934f8e2c036e5a723fd8ee048ed3f8c3")
    # keccak256("PROXIABLE")
    ERC1822_PROXIABLE = bytes.fromhex("c5f16f0fcc639fa48a6947836d9850f504798523bf8c9a3a87d5876cf622bcf7")
    GNOSIS_MASTERCOPY = ZERO_WORD

    @classmethod
    def items(cls) -> dict:
        return {k: v for k, v in vars(cls).items() if k.isupper()}


IMPLEMENTATION_SELECTOR = selector_from_signature("implementation()")
MASTERCOPY_SELECTOR = bytes.fromhex("a619486e")  # masterCopy()

ERC1167_PREFIX = bytes.fromhex("363d3d373d3d3d363d73")
ERC1167_SUFFIX = bytes.fromhex("5af43d82803e903d91602b57fd5bf3")
ERC1167_LENGTH = len(ERC1167_PREFIX) + 20 + len(ERC1167_SUFFIX)


class StateUnavailable(Exception):
    """The reader could not answer; never to be read as an empty/zero result."""


class StateReader(Protocol):
    def storage_at(self, address: Address, slot: bytes) -> bytes: ...

    def call(self, address: Address, calldata: bytes) -> Optional[bytes]: ...

    def code(self, address: Address) -> bytes: ...


def _word(text: str) -> bytes:
    b = parse_hex(text)
    if len(b) > 32:
        raise ValueError(f"storage word wider than 32 bytes: {text}")
    return b.rjust(32, b"\0")


class FixtureStateReader:
    """Reader over ``{address: {storage: {slot: word}, calls: {calldata: ret|null}, bytecode}}``.

    Unknown addresses raise :class:`StateUnavailable`; unset slots of a known address
    read as zero; calldata without an entry reverts (None).
    """

    def __init__(self, state: Mapping):
        self._state = {}
        for addr, entry in state.items():
            self._state[Address.parse(addr)] = {
                "storage": {_word(k): _word(v) for k, v in (entry.get("storage") or {}).items()},
                "calls": {
                    parse_hex(k): (None if v is None else parse_hex(v))
                    for k, v in (entry.get("calls") or {}).items()
                },
                "bytecode": parse_hex(entry.get("bytecode") or ""),
            }

    @classmethod
    def load(cls, path) -> "FixtureStateReader":
        with open(path) as fh:
            return cls(json.load(fh))

    def _entry(self, address):
        try:
            return self._state[address]
        except KeyError:
            raise StateUnavailable(f"no fixture state for {address}") from None

    def storage_at(self, address, slot):
        return self._entry(address)["storage"].get(bytes(slot).rjust(32, b"\0"), ZERO_WORD)

    def call(self, address, calldata):
        return self._entry(address)["calls"].get(bytes(calldata))

    def code(self, address):
        return self._entry(address)["bytecode"]


class RpcStateReader:
    """Ethereum JSON-RPC backed reader. Transport or node errors raise StateUnavailable."""

    def __init__(self, url: str, block: str = "latest", timeout: float = 10.0):
        self.url = url
        self.block = block
        self.timeout = timeout
        self._ids = iter(range(1, 1 << 62))
        self._lock = threading.Lock()

    def _rpc(self, method: str, params: list):
        with self._lock:
            req_id = next(self._ids)
        body = json.dumps({"jsonrpc": "2.0", "id": req_id, "method": method, "params": params}).encode()
        req = urllib.request.Request(self.url, body, {"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                payload = json.loads(resp.read())
        except (urllib.error.URLError, OSError, ValueError) as exc:
            raise StateUnavailable(f"{method} failed: {exc}") from exc
        return payload

    def storage_at(self, address, slot):
        payload = self._rpc("eth_getStorageAt", [str(address), format_hex(bytes(slot)), self.block])
        if "error" in payload or payload.get("result") is None:
            raise StateUnavailable(f"eth_getStorageAt error: {payload.get('error')}")
        return _word(payload["result"])

    def call(self, address, calldata):
        payload = self._rpc("eth_call", [{"to": str(address), "data": format_hex(calldata)}, self.block])
        err = payload.get("error")
        if err is not None:
            if "revert" in str(err.get("message", "")).lower() or err.get("code") == 3:
                return None
            raise StateUnavailable(f"eth_call error: {err}")
        return parse_hex(payload.get("result") or "0x")

    def code(self, address):
        payload = self._rpc("eth_getCode", [str(address), self.block])
        if "error" in payload or payload.get("result") is None:
            raise StateUnavailable(f"eth_getCode error: {payload.get('error')}")
        return parse_hex(payload["result"])


class ImplKind(enum.Enum):
    ERC1167_MINIMAL = "erc1167-minimal"
    ERC897 = "erc897"
    ERC1967 = "erc1967"
    ERC1967_BEACON = "erc1967-beacon"
    ERC1822_UUPS = "erc1822-uups"
    OPENZEPPELIN_LEGACY = "openzeppelin-legacy"
    GNOSIS_SAFE_PROXY = "gnosis-safe-proxy"
    CUSTOMIZED = "customized"


@dataclass(frozen=True)
class Fingerprint:
    kind: ImplKind
    evidence: str


def detect_erc1167(bytecode: bytes) -> Optional[Address]:
    """Embedded target of a canonical 45-byte minimal proxy, else None."""
    if (
        len(bytecode) == ERC1167_LENGTH
        and bytecode.startswith(ERC1167_PREFIX)
        and bytecode.endswith(ERC1167_SUFFIX)
    ):
        return Address(bytes(bytecode[len(ERC1167_PREFIX) : len(ERC1167_PREFIX) + 20]))
    return None


def _word_address(word: Optional[bytes]) -> Optional[Address]:
    """Address in the low 20 bytes of a word whose high 12 bytes are clear."""
    if word is None or len(word) < 32 or any(word[:12]):
        return None
    a = Address.from_word(word[:32])
    return None if a.is_zero else a


def _has_push4(bytecode: bytes, selector: bytes) -> bool:
    return any(i.name == "PUSH4" and i.immediate == selector for i in disassemble(bytecode))


def fingerprint(address: Address, bytecode: bytes, reader: StateReader) -> Fingerprint:
    """First match wins: 1167 bytecode, then the standard slots, then ERC-897's getter."""
    target = detect_erc1167(bytecode)
    if target is not None:
        return Fingerprint(ImplKind.ERC1167_MINIMAL, f"bytecode embeds {target}")

    for kind, slot in (
        (ImplKind.ERC1967, SlotCatalog.ERC1967_IMPL),
        (ImplKind.ERC1967_BEACON, SlotCatalog.ERC1967_BEACON),
        (ImplKind.ERC1822_UUPS, SlotCatalog.ERC1822_PROXIABLE),
        (ImplKind.OPENZEPPELIN_LEGACY, SlotCatalog.OZ_LEGACY_IMPL),
    ):
        word = reader.storage_at(address, slot)
        if word != ZERO_WORD:
            return Fingerprint(kind, f"slot {format_hex(slot)} = {format_hex(word)}")

    master = _word_address(reader.storage_at(address, SlotCatalog.GNOSIS_MASTERCOPY))
    if master is not None and _has_push4(bytecode, MASTERCOPY_SELECTOR):
        try:
            is_contract = bool(reader.code(master))
        except StateUnavailable:
            is_contract = False
        if is_contract:
            return Fingerprint(ImplKind.GNOSIS_SAFE_PROXY, f"slot 0x0 = {master}, masterCopy() dispatch")

    ret = reader.call(address, IMPLEMENTATION_SELECTOR)
    impl = _word_address(ret[:32] if ret is not None and len(ret) >= 32 else None)
    if impl is not None:
        return Fingerprint(ImplKind.ERC897, f"implementation() -> {impl}")

    return Fingerprint(ImplKind.CUSTOMIZED, "no known slot, bytecode or getter matched")


# Abstract values for the block-local stack simulation.
UNKNOWN = None
MASK160 = (1 << 160) - 1


@dataclass(frozen=True)
class Const:
    value: int
    offset: int
    width: int


@dataclass(frozen=True)
class StorageRead:
    slot: int
    offset: int


@dataclass(frozen=True)
class ReturnData:
    call_offset: int


@dataclass(frozen=True)
class CallSite:
    offset: int
    opcode: str
    callee: object
    selector: Optional[bytes]


@dataclass
class CodeFacts:
    """What a linear pass over one contract's code established."""

    instructions: list
    delegatecalls: list = field(default_factory=list)  # (offset, target abstract value)
    sstores: list = field(default_factory=list)  # (offset, constant slot or None)
    sloads: list = field(default_factory=list)  # (offset, constant slot)
    calls: dict = field(default_factory=dict)  # offset -> CallSite

    def sstore_offsets(self, slot: int) -> list:
        return [off for off, s in self.sstores if s == slot]


def analyze_code(code: bytes) -> CodeFacts:
    ins = disassemble(code)
    facts = CodeFacts(ins)
    for block in basic_blocks(ins):
        _simulate(ins[block.start : block.end], facts)
    return facts


def _simulate(block: list, facts: CodeFacts) -> None:
    stack: list = []
    last_call: Optional[int] = None
    last_push4: Optional[bytes] = None

    def pop():
        return stack.pop() if stack else UNKNOWN

    for x in block:
        name = x.name
        if x.is_push:
            stack.append(Const(x.value, x.offset, x.opcode - 0x5F))
            if name == "PUSH4":
                last_push4 = x.immediate
            continue
        if name.startswith("DUP"):
            n = int(name[3:])
            stack.append(stack[-n] if len(stack) >= n else UNKNOWN)
            continue
        if name.startswith("SWAP"):
            n = int(name[4:])
            while len(stack) < n + 1:
                stack.insert(0, UNKNOWN)
            stack[-1], stack[-1 - n] = stack[-1 - n], stack[-1]
            continue
        if name == "SLOAD":
            slot = pop()
            if isinstance(slot, Const):
                facts.sloads.append((x.offset, slot.value))
                stack.append(StorageRead(slot.value, x.offset))
            else:
                stack.append(UNKNOWN)
            continue
        if name == "SSTORE":
            slot = pop()
            pop()
            facts.sstores.append((x.offset, slot.value if isinstance(slot, Const) else None))
            continue
        if name == "AND":
            a, b = pop(), pop()
            if isinstance(a, Const) and a.value & MASK160 == MASK160:
                stack.append(b)
            elif isinstance(b, Const) and b.value & MASK160 == MASK160:
                stack.append(a)
            else:
                stack.append(UNKNOWN)
            continue
        if name == "MLOAD":
            pop()
            stack.append(ReturnData(last_call) if last_call is not None else UNKNOWN)
            continue
        if name == "DELEGATECALL":
            pop()  # gas
            target = pop()
            for _ in range(4):
                pop()
            facts.delegatecalls.append((x.offset, target))
            stack.append(UNKNOWN)
            continue
        if name in ("STATICCALL", "CALL", "CALLCODE"):
            pop()
            callee = pop()
            for _ in range(4 if name == "STATICCALL" else 5):
                pop()
            facts.calls[x.offset] = CallSite(x.offset, name, callee, last_push4)
            last_call = x.offset
            stack.append(UNKNOWN)
            continue
        if name == "RETURNDATACOPY":
            pop(), pop(), pop()
            continue
        _, pops, pushes = OPCODES.get(x.opcode, ("INVALID", 0, 0))
        for _ in range(pops):
            pop()
        for _ in range(pushes):
            stack.append(UNKNOWN)


FORWARDER, UPGRADEABILITY, UNKNOWN_PURPOSE = "forwarder", "upgradeability", "unknown"


@dataclass
class PurposeVerdict:
    purpose: str
    evidence: list = field(default_factory=list)  # "step N: ..." lines in order
    stall_step: Optional[int] = None
    sstore_sites: list = field(default_factory=list)  # (contract Address, byte offset)

    def note(self, step: int, text: str) -> None:
        self.evidence.append(f"step {step}: {text}")


def _dispatch_entry(ins: list, selector: bytes) -> Optional[int]:
    """Jump target of a ``PUSH4 sel ... EQ PUSHn dest JUMPI`` dispatcher arm."""
    for i, x in enumerate(ins):
        if x.name != "PUSH4" or x.immediate != selector:
            continue
        window = ins[i + 1 : i + 6]
        saw_eq = False
        for j, y in enumerate(window):
            if y.name == "EQ":
                saw_eq = True
            elif saw_eq and y.is_push and j + 1 < len(window) and window[j + 1].name == "JUMPI":
                return y.value
    return None


def _region(ins: list, entry: int, limit: int = 256) -> set:
    """Offsets of instructions reachable from ``entry`` following constant jumps."""
    by_offset = {x.offset: i for i, x in enumerate(ins)}
    seen: set = set()
    todo = [entry]
    covered: set = set()
    while todo and len(seen) < limit:
        start = todo.pop()
        if start in seen or start not in by_offset:
            continue
        seen.add(start)
        i = by_offset[start]
        while i < len(ins):
            x = ins[i]
            covered.add(x.offset)
            prev = ins[i - 1] if i > 0 else None
            if x.name in ("JUMP", "JUMPI"):
                if prev is not None and prev.is_push:
                    todo.append(prev.value)
                if x.name == "JUMP":
                    break
            elif x.name in ("STOP", "RETURN", "REVERT", "INVALID", "SELFDESTRUCT"):
                break
            i += 1
    return covered


def classify_purpose(
    proxy: Address,
    bytecode: bytes,
    logic_codes: Mapping,
    reader: Optional[StateReader] = None,
    contracts: Optional[Mapping] = None,
) -> PurposeVerdict:
    """Forwarder vs upgradeability from the proxy's code, its logics' code and state.

    ``logic_codes`` maps each logic address to its runtime bytecode (empty when
    unknown). ``contracts`` (address -> ContractRecord) or ``reader`` supplies the
    code of an external callee that hands out the logic address.
    """
    v = PurposeVerdict(UNKNOWN_PURPOSE)
    if not bytecode:
        v.note(1, "proxy bytecode unavailable")
        v.stall_step = 1
        return v
    facts = analyze_code(bytecode)
    v.note(1, f"disassembled {len(facts.instructions)} instructions")
    if not facts.delegatecalls:
        v.note(2, "no DELEGATECALL in proxy code")
        v.stall_step = 2
        return v

    verdicts = [_classify_target(proxy, off, target, facts, logic_codes, reader, contracts) for off, target in facts.delegatecalls]
    for purpose in (UPGRADEABILITY, FORWARDER):
        for sub in verdicts:
            if sub.purpose == purpose:
                v.purpose = purpose
                v.evidence += sub.evidence
                v.sstore_sites = sub.sstore_sites
                return v
    sub = verdicts[0]
    v.evidence += sub.evidence
    v.stall_step = sub.stall_step
    return v


def _code_of(address, contracts, reader) -> bytes:
    if contracts is not None and address in contracts and contracts[address].bytecode:
        return contracts[address].bytecode
    if reader is not None:
        try:
            return reader.code(address)
        except StateUnavailable:
            return b""
    return b""


def _classify_target(proxy, offset, target, facts, logic_codes, reader, contracts) -> PurposeVerdict:
    v = PurposeVerdict(UNKNOWN_PURPOSE)
    v.note(2, f"DELEGATECALL at {offset:#x}")

    if isinstance(target, Const):
        if target.width == 20 or (0 < target.value <= MASK160 and target.width <= 20):
            v.note(3, f"logic reference hard-coded by PUSH{target.width} at {target.offset:#x}")
            v.purpose = FORWARDER
            return v
        v.note(3, f"constant target {target.value:#x} is not an address")
        v.stall_step = 3
        return v

    if isinstance(target, StorageRead):
        slot = target.slot
        v.note(4, f"logic reference read from storage slot {slot:#x} at {target.offset:#x}")
        sites = facts.sstore_offsets(slot)
        if sites:
            v.note(5, f"proxy writes slot {slot:#x} at {', '.join(f'{o:#x}' for o in sites)}")
            v.sstore_sites = [(proxy, o) for o in sites]
            v.purpose = UPGRADEABILITY
            return v
        v.note(5, "proxy never writes the reference slot")
        if not logic_codes or not all(logic_codes.values()):
            v.note(6, "logic bytecode unavailable")
            v.stall_step = 6
            return v
        for logic in sorted(logic_codes):
            sites = analyze_code(logic_codes[logic]).sstore_offsets(slot)
            if sites:
                v.note(7, f"logic {logic} writes slot {slot:#x} at {', '.join(f'{o:#x}' for o in sites)}")
                v.sstore_sites = [(logic, o) for o in sites]
                v.purpose = UPGRADEABILITY
                return v
        v.note(7, "no logic writes the reference slot")
        v.purpose = FORWARDER
        return v

    if isinstance(target, ReturnData):
        site = facts.calls.get(target.call_offset)
        v.note(4, f"logic reference returned by {site.opcode} at {site.offset:#x}")
        callee = None
        if isinstance(site.callee, Const) and 0 < site.callee.value <= MASK160:
            callee = Address(site.callee.value.to_bytes(20, "big"))
        elif isinstance(site.callee, StorageRead) and reader is not None:
            try:
                callee = _word_address(reader.storage_at(proxy, site.callee.slot.to_bytes(32, "big")))
            except StateUnavailable:
                callee = None
        if callee is None:
            v.note(8, "external callee address unresolved")
            v.stall_step = 8
            return v
        if site.selector is None:
            v.note(8, "getter selector not found")
            v.stall_step = 8
            return v
        v.note(8, f"callee {callee}, getter {format_hex(site.selector)}")
        code = _code_of(callee, contracts, reader)
        if not code:
            v.note(9, "callee bytecode unavailable")
            v.stall_step = 9
            return v
        cfacts = analyze_code(code)
        entry = _dispatch_entry(cfacts.instructions, site.selector)
        if entry is None:
            v.note(10, "getter not dispatched in callee")
            v.stall_step = 10
            return v
        region = _region(cfacts.instructions, entry)
        slots = sorted({s for off, s in cfacts.sloads if off in region})
        for s in slots:
            sites = cfacts.sstore_offsets(s)
            if sites:
                v.note(10, f"getter returns slot {s:#x}; callee writes it at {', '.join(f'{o:#x}' for o in sites)}")
                v.sstore_sites = [(callee, o) for o in sites]
                v.purpose = UPGRADEABILITY
                return v
        v.note(10, f"getter reads slots {[hex(s) for s in slots]}; none written")
        v.purpose = FORWARDER
        return v

    v.note(3, "logic reference source not recognized")
    v.stall_step = 3
    return v


DEFERRED = "deferred"


@dataclass(frozen=True)
class ClassRow:
    proxy: Address
    impl_kind: str  # an ImplKind value, or "deferred" when state was unavailable
    purpose: str
    evidence: str


def classify_proxy(proxy: Address, logics, contracts: Mapping, reader: StateReader) -> ClassRow:
    code = _code_of(proxy, contracts, reader)
    try:
        fp = fingerprint(proxy, code, reader)
        kind, fp_evidence = fp.kind.value, fp.evidence
    except StateUnavailable as exc:
        kind, fp_evidence = DEFERRED, f"state unavailable: {exc}"
    logic_codes = {a: _code_of(a, contracts, reader) for a in logics}
    verdict = classify_purpose(proxy, code, logic_codes, reader, contracts)
    evidence = "; ".join([fp_evidence, *verdict.evidence])
    return ClassRow(proxy, kind, verdict.purpose, evidence)


def classify_proxies(findings: Mapping, contracts: Mapping, reader: StateReader) -> list:
    """One ClassRow per detected proxy, ordered by address."""
    return [classify_proxy(p, findings[p].logic_targets, contracts, reader) for p in sorted(findings)]


def write_classes(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("proxy", "impl_kind", "purpose", "evidence"))
        for r in rows:
            w.writerow((str(r.proxy), r.impl_kind, r.purpose, r.evidence))
