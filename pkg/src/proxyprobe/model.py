"""Core value types and primitive codecs shared by every stage."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Iterable, NamedTuple, Optional

from Crypto.Hash import keccak as _keccak

ZERO_WORD = bytes(32)


class Address(bytes):
    """A 20-byte account identifier.

    Text form is lowercase, ``0x``-prefixed, 40 hex digits. Parsing accepts any case.
    """

    __slots__ = ()

    def __new__(cls, value: bytes) -> "Address":
        if len(value) != 20:
            raise ValueError(f"address must be 20 bytes, got {len(value)}")
        return super().__new__(cls, value)

    @classmethod
    def parse(cls, text: str) -> "Address":
        if not isinstance(text, str):
            raise ValueError(f"address must be text, got {type(text).__name__}")
        body = text[2:] if text[:2] in ("0x", "0X") else text
        if len(body) != 40:
            raise ValueError(f"address must have 40 hex digits: {text!r}")
        try:
            return cls(bytes.fromhex(body))
        except ValueError:
            raise ValueError(f"invalid hex in address: {text!r}") from None

    @classmethod
    def from_word(cls, word: bytes) -> "Address":
        """Low 20 bytes of a 32-byte storage or return word."""
        return cls(bytes(word[-20:]).rjust(20, b"\0"))

    def __str__(self) -> str:
        return "0x" + self.hex()

    def __repr__(self) -> str:
        return f"Address({str(self)!r})"

    @property
    def is_zero(self) -> bool:
        return not any(self)


def parse_hex(text: str) -> bytes:
    """Decode ``0x``-prefixed (or bare) hex text. ``"0x"`` and ``""`` decode to empty bytes."""
    if text[:2] in ("0x", "0X"):
        text = text[2:]
    if len(text) % 2:
        raise ValueError(f"odd-length hex string: {text[:20]!r}")
    return bytes.fromhex(text)


def format_hex(data: bytes) -> str:
    return "0x" + data.hex()


def keccak256(data: bytes) -> bytes:
    return _keccak.new(digest_bits=256, data=data).digest()


def selector_of(data: bytes) -> Optional[bytes]:
    """The 4-byte function selector at the head of calldata, or None when shorter."""
    if len(data) < 4:
        return None
    return bytes(data[:4])


def selector_from_signature(sig: str) -> bytes:
    return keccak256(sig.encode("ascii"))[:4]


class CallType(enum.Enum):
    CALL = "call"
    CALLCODE = "callcode"
    STATICCALL = "staticcall"
    DELEGATECALL = "delegatecall"
    CREATE = "create"
    CREATE2 = "create2"
    SELFDESTRUCT = "suicide"

    @classmethod
    def parse(cls, text: str) -> "CallType":
        try:
            return _CALL_TYPES[text.lower()]
        except (KeyError, AttributeError):
            raise ValueError(f"unknown call type: {text!r}") from None

    @property
    def is_message_call(self) -> bool:
        return self in MESSAGE_CALLS

    @property
    def is_create(self) -> bool:
        return self is CallType.CREATE or self is CallType.CREATE2


_CALL_TYPES = {ct.value: ct for ct in CallType}
_CALL_TYPES["selfdestruct"] = CallType.SELFDESTRUCT

MESSAGE_CALLS = frozenset(
    {CallType.CALL, CallType.CALLCODE, CallType.STATICCALL, CallType.DELEGATECALL}
)


def parse_trace_address(value) -> tuple[int, ...]:
    """Normalize ``"0.1"``, ``"0,1"``, ``""``, ``None`` or a list into an int tuple."""
    if value is None or value == "":
        return ()
    if isinstance(value, str):
        if "-" in value:
            raise ValueError(f"negative trace_address component: {value!r}")
        return tuple(map(int, value.replace(",", ".").split(".")))
    out = tuple(int(p) for p in value)
    if any(p < 0 for p in out):
        raise ValueError(f"negative trace_address component: {value!r}")
    return out


def format_trace_address(addr: tuple[int, ...]) -> str:
    return ".".join(map(str, addr))


def parse_timestamp(value) -> datetime:
    """UTC instant from ISO-8601 text, BigQuery ``"... UTC"`` text, or epoch seconds."""
    if isinstance(value, (int, float)):
        return datetime.fromtimestamp(int(value), tz=timezone.utc)
    if len(value) == 20 and value[10] == "T" and value[19] == "Z":
        # canonical "YYYY-MM-DDTHH:MM:SSZ", the form every index file uses
        return datetime.fromisoformat(value[:19] + "+00:00")
    text = value.strip()
    if text.endswith(" UTC"):
        text = text[:-4]
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc).replace(microsecond=0)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True, order=True)
class Month:
    year: int
    month: int

    def __post_init__(self):
        if not 1 <= self.month <= 12:
            raise ValueError(f"month out of range: {self.month}")

    @classmethod
    def of(cls, ts: datetime) -> "Month":
        ts = ts.astimezone(timezone.utc)
        return cls(ts.year, ts.month)

    @classmethod
    def parse(cls, text: str) -> "Month":
        year, month = text.split("-")
        return cls(int(year), int(month))

    def next(self) -> "Month":
        if self.month == 12:
            return Month(self.year + 1, 1)
        return Month(self.year, self.month + 1)

    def __str__(self) -> str:
        return f"{self.year:04d}-{self.month:02d}"


def month_range(first: Month, last: Month) -> list[Month]:
    out = []
    m = first
    while m <= last:
        out.append(m)
        m = m.next()
    return out


class TraceRecord(NamedTuple):
    """One trace row. A NamedTuple rather than a frozen dataclass: it is built
    millions of times per corpus and tuple construction is cheaper."""

    transaction_hash: bytes
    trace_address: tuple
    from_address: Address
    to_address: Optional[Address]
    call_type: CallType
    input: bytes
    output: bytes
    gas_used: int
    status: bool
    value: int
    block_number: int
    block_timestamp: datetime
    gas_price: Optional[int] = None

    @property
    def is_root(self) -> bool:
        return not self.trace_address

    @property
    def sort_key(self) -> tuple:
        return (self.block_number, self.transaction_hash, self.trace_address)


@dataclass(frozen=True, slots=True)
class ContractRecord:
    address: Address
    bytecode: bytes
    created_at: datetime
    creation_tx: bytes
    block_number: int


def parent_of(trace_address: tuple[int, ...], siblings: Iterable[tuple[int, ...]]):
    """Longest proper prefix of ``trace_address`` present in ``siblings``; None for the root."""
    if not trace_address:
        return None
    present = siblings if isinstance(siblings, (set, frozenset, dict)) else set(siblings)
    for cut in range(len(trace_address) - 1, -1, -1):
        prefix = trace_address[:cut]
        if prefix in present:
            return prefix
    return None
