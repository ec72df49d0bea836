"""EVM opcode table, a linear disassembler and a tiny assembler for fixtures."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple, Sequence, Union

# opcode -> (mnemonic, stack items popped, stack items pushed)
OPCODES: dict[int, tuple[str, int, int]] = {
    0x00: ("STOP", 0, 0),
    0x01: ("ADD", 2, 1),
    0x02: ("MUL", 2, 1),
    0x03: ("SUB", 2, 1),
    0x04: ("DIV", 2, 1),
    0x05: ("SDIV", 2, 1),
    0x06: ("MOD", 2, 1),
    0x07: ("SMOD", 2, 1),
    0x08: ("ADDMOD", 3, 1),
    0x09: ("MULMOD", 3, 1),
    0x0A: ("EXP", 2, 1),
    0x0B: ("SIGNEXTEND", 2, 1),
    0x10: ("LT", 2, 1),
    0x11: ("GT", 2, 1),
    0x12: ("SLT", 2, 1),
    0x13: ("SGT", 2, 1),
    0x14: ("EQ", 2, 1),
    0x15: ("ISZERO", 1, 1),
    0x16: ("AND", 2, 1),
    0x17: ("OR", 2, 1),
    0x18: ("XOR", 2, 1),
    0x19: ("NOT", 1, 1),
    0x1A: ("BYTE", 2, 1),
    0x1B: ("SHL", 2, 1),
    0x1C: ("SHR", 2, 1),
    0x1D: ("SAR", 2, 1),
    0x20: ("SHA3", 2, 1),
    0x30: ("ADDRESS", 0, 1),
    0x31: ("BALANCE", 1, 1),
    0x32: ("ORIGIN", 0, 1),
    0x33: ("CALLER", 0, 1),
    0x34: ("CALLVALUE", 0, 1),
    0x35: ("CALLDATALOAD", 1, 1),
    0x36: ("CALLDATASIZE", 0, 1),
    0x37: ("CALLDATACOPY", 3, 0),
    0x38: ("CODESIZE", 0, 1),
    0x39: ("CODECOPY", 3, 0),
    0x3A: ("GASPRICE", 0, 1),
    0x3B: ("EXTCODESIZE", 1, 1),
    0x3C: ("EXTCODECOPY", 4, 0),
    0x3D: ("RETURNDATASIZE", 0, 1),
    0x3E: ("RETURNDATACOPY", 3, 0),
    0x3F: ("EXTCODEHASH", 1, 1),
    0x40: ("BLOCKHASH", 1, 1),
    0x41: ("COINBASE", 0, 1),
    0x42: ("TIMESTAMP", 0, 1),
    0x43: ("NUMBER", 0, 1),
    0x44: ("PREVRANDAO", 0, 1),
    0x45: ("GASLIMIT", 0, 1),
    0x46: ("CHAINID", 0, 1),
    0x47: ("SELFBALANCE", 0, 1),
    0x48: ("BASEFEE", 0, 1),
    0x49: ("BLOBHASH", 1, 1),
    0x4A: ("BLOBBASEFEE", 0, 1),
    0x50: ("POP", 1, 0),
    0x51: ("MLOAD", 1, 1),
    0x52: ("MSTORE", 2, 0),
    0x53: ("MSTORE8", 2, 0),
    0x54: ("SLOAD", 1, 1),
    0x55: ("SSTORE", 2, 0),
    0x56: ("JUMP", 1, 0),
    0x57: ("JUMPI", 2, 0),
    0x58: ("PC", 0, 1),
    0x59: ("MSIZE", 0, 1),
    0x5A: ("GAS", 0, 1),
    0x5B: ("JUMPDEST", 0, 0),
    0x5C: ("TLOAD", 1, 1),
    0x5D: ("TSTORE", 2, 0),
    0x5E: ("MCOPY", 3, 0),
    0x5F: ("PUSH0", 0, 1),
    0xF0: ("CREATE", 3, 1),
    0xF1: ("CALL", 7, 1),
    0xF2: ("CALLCODE", 7, 1),
    0xF3: ("RETURN", 2, 0),
    0xF4: ("DELEGATECALL", 6, 1),
    0xF5: ("CREATE2", 4, 1),
    0xFA: ("STATICCALL", 6, 1),
    0xFD: ("REVERT", 2, 0),
    0xFE: ("INVALID", 0, 0),
    0xFF: ("SELFDESTRUCT", 1, 0),
}
for _n in range(1, 33):
    OPCODES[0x5F + _n] = (f"PUSH{_n}", 0, 1)
for _n in range(1, 17):
    OPCODES[0x7F + _n] = (f"DUP{_n}", _n, _n + 1)
    OPCODES[0x8F + _n] = (f"SWAP{_n}", _n + 1, _n + 1)
for _n in range(5):
    OPCODES[0xA0 + _n] = (f"LOG{_n}", _n + 2, 0)

MNEMONICS = {name: op for op, (name, _, _) in OPCODES.items()}

TERMINATORS = frozenset({"STOP", "RETURN", "REVERT", "INVALID", "SELFDESTRUCT", "JUMP"})


class Instruction(NamedTuple):
    offset: int
    opcode: int
    name: str
    immediate: bytes  # empty unless PUSHn

    @property
    def value(self) -> int:
        return int.from_bytes(self.immediate, "big")

    @property
    def is_push(self) -> bool:
        return 0x5F <= self.opcode <= 0x7F


def disassemble(code: bytes) -> list[Instruction]:
    """Linear sweep. PUSH immediates are consumed, never decoded as opcodes.

    A truncated trailing PUSH keeps whatever immediate bytes remain. Unassigned
    bytes decode as ``INVALID``.
    """
    out = []
    i = 0
    n = len(code)
    while i < n:
        op = code[i]
        if 0x60 <= op <= 0x7F:
            width = op - 0x5F
            out.append(Instruction(i, op, OPCODES[op][0], bytes(code[i + 1 : i + 1 + width])))
            i += 1 + width
            continue
        name = OPCODES[op][0] if op in OPCODES else "INVALID"
        out.append(Instruction(i, op, name, b""))
        i += 1
    return out


def iter_opcodes(code: bytes) -> Iterator[str]:
    for ins in disassemble(code):
        yield ins.name


Token = Union[str, int, bytes]


def assemble(program: Sequence[Token]) -> bytes:
    """Assemble mnemonics into bytecode.

    ``PUSHn`` takes the following token as its immediate (int or bytes, left-padded
    to n bytes). Labels ``"@name:"`` emit a JUMPDEST; ``"@name"`` as an immediate
    resolves to that JUMPDEST's offset. Bare ``bytes`` tokens are emitted verbatim.
    """
    items = list(program)

    def layout():
        labels = {}
        pos = 0
        i = 0
        while i < len(items):
            tok = items[i]
            if isinstance(tok, bytes):
                pos += len(tok)
            elif tok.startswith("@") and tok.endswith(":"):
                labels[tok[1:-1]] = pos
                pos += 1
            else:
                op = MNEMONICS[tok.upper()]
                pos += 1
                if 0x60 <= op <= 0x7F:
                    pos += op - 0x5F
                    i += 1
            i += 1
        return labels

    labels = layout()
    out = bytearray()
    i = 0
    while i < len(items):
        tok = items[i]
        if isinstance(tok, bytes):
            out += tok
        elif tok.startswith("@") and tok.endswith(":"):
            out.append(0x5B)
        else:
            op = MNEMONICS[tok.upper()]
            out.append(op)
            if 0x60 <= op <= 0x7F:
                width = op - 0x5F
                i += 1
                imm = items[i]
                if isinstance(imm, str):
                    imm = labels[imm[1:]]
                if isinstance(imm, int):
                    imm = imm.to_bytes(width, "big")
                if len(imm) > width:
                    raise ValueError(f"{tok} immediate too wide")
                out += bytes(imm).rjust(width, b"\0")
        i += 1
    return bytes(out)


@dataclass(frozen=True)
class Block:
    start: int  # index into the instruction list
    end: int  # exclusive


def basic_blocks(ins: Sequence[Instruction]) -> list[Block]:
    """Split at JUMPDESTs and after JUMP/JUMPI/terminators."""
    blocks = []
    start = 0
    for i, x in enumerate(ins):
        if x.name == "JUMPDEST" and i > start:
            blocks.append(Block(start, i))
            start = i
        if x.name in TERMINATORS or x.name == "JUMPI":
            blocks.append(Block(start, i + 1))
            start = i + 1
    if start < len(ins):
        blocks.append(Block(start, len(ins)))
    return blocks
