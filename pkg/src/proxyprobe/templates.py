"""Hand-assembled runtime bytecode for the proxy shapes the classifier must recognize.

Used by the fixture generator and the test suites. Each builder returns runtime
bytes; none of these is compiler output, but each follows the shape compilers and
the reference implementations produce.
"""

from __future__ import annotations

from typing import Optional

from .classify import ERC1167_PREFIX, ERC1167_SUFFIX, IMPLEMENTATION_SELECTOR, MASTERCOPY_SELECTOR
from .evm import assemble
from .model import Address, selector_from_signature

UPGRADE_TO = selector_from_signature("upgradeTo(address)")
PROXY_TYPE = selector_from_signature("proxyType()")


def _slot(slot) -> bytes:
    return slot if isinstance(slot, bytes) else int(slot).to_bytes(32, "big")


def _selector_prelude() -> list:
    return ["PUSH1", 0, "CALLDATALOAD", "PUSH1", 0xE0, "SHR"]


def _arm(selector: bytes, label: str) -> list:
    return ["DUP1", "PUSH4", selector, "EQ", "PUSH2", f"@{label}", "JUMPI"]


def _forward(target_load: list) -> list:
    """Copy calldata, delegate to the address ``target_load`` leaves on the stack, bubble the result."""
    return [
        "CALLDATASIZE", "PUSH1", 0, "PUSH1", 0, "CALLDATACOPY",
        "PUSH1", 0, "PUSH1", 0, "CALLDATASIZE", "PUSH1", 0,
        *target_load,
        "GAS", "DELEGATECALL",
        "RETURNDATASIZE", "PUSH1", 0, "PUSH1", 0, "RETURNDATACOPY",
        "PUSH2", "@ok", "JUMPI",
        "RETURNDATASIZE", "PUSH1", 0, "REVERT",
        "@ok:", "RETURNDATASIZE", "PUSH1", 0, "RETURN",
    ]


def _revert() -> list:
    return ["PUSH1", 0, "DUP1", "REVERT"]


def minimal_proxy(target: Address) -> bytes:
    return ERC1167_PREFIX + bytes(target) + ERC1167_SUFFIX


def hardcoded_forwarder(target: Address) -> bytes:
    """Logic address baked into the code as a PUSH20 immediate."""
    return assemble(_forward(["PUSH20", bytes(target)]))


def slot_proxy(slot, admin_slot=None, upgradeable: bool = True, getter: bool = False) -> bytes:
    """Delegates to the address stored at ``slot``.

    With ``upgradeable`` an admin-guarded ``upgradeTo(address)`` writes the slot;
    ``getter`` adds an ``implementation()`` view returning it.
    """
    slot = _slot(slot)
    prog = _selector_prelude()
    if upgradeable:
        prog += _arm(UPGRADE_TO, "upgrade")
    if getter:
        prog += _arm(IMPLEMENTATION_SELECTOR, "impl")
    prog += _forward(["PUSH32", slot, "SLOAD"])
    if upgradeable:
        prog += ["@upgrade:"]
        if admin_slot is not None:
            prog += ["PUSH32", _slot(admin_slot), "SLOAD", "CALLER", "EQ", "PUSH2", "@auth", "JUMPI", *_revert(), "@auth:"]
        prog += ["PUSH1", 4, "CALLDATALOAD", "PUSH32", slot, "SSTORE", "STOP"]
    if getter:
        prog += ["@impl:", "PUSH32", slot, "SLOAD", "PUSH1", 0, "MSTORE", "PUSH1", 0x20, "PUSH1", 0, "RETURN"]
    return assemble(prog)


def erc897_proxy(slot=3, proxy_type: int = 2) -> bytes:
    """Custom slot, no standard location; exposes implementation() and proxyType()."""
    slot = _slot(slot)
    prog = _selector_prelude()
    prog += _arm(IMPLEMENTATION_SELECTOR, "impl")
    prog += _arm(PROXY_TYPE, "ptype")
    prog += _forward(["PUSH32", slot, "SLOAD"])
    prog += ["@impl:", "PUSH32", slot, "SLOAD", "PUSH1", 0, "MSTORE", "PUSH1", 0x20, "PUSH1", 0, "RETURN"]
    prog += ["@ptype:", "PUSH1", proxy_type, "PUSH1", 0, "MSTORE", "PUSH1", 0x20, "PUSH1", 0, "RETURN"]
    return assemble(prog)


def gnosis_proxy() -> bytes:
    """masterCopy in slot 0, read through an address mask; answers masterCopy()."""
    mask = (1 << 160) - 1
    prog = _selector_prelude()
    prog += _arm(MASTERCOPY_SELECTOR, "master")
    prog += _forward(["PUSH20", mask.to_bytes(20, "big"), "PUSH1", 0, "SLOAD", "AND"])
    prog += ["@master:", "PUSH1", 0, "SLOAD", "PUSH1", 0, "MSTORE", "PUSH1", 0x20, "PUSH1", 0, "RETURN"]
    return assemble(prog)


def beacon_proxy(beacon_slot, getter: bytes = IMPLEMENTATION_SELECTOR) -> bytes:
    """Reads the beacon address from ``beacon_slot``, asks it for the logic, delegates."""
    prog = [
        "PUSH32", _slot(beacon_slot), "SLOAD",
        "PUSH4", getter, "PUSH1", 0xE0, "SHL", "PUSH1", 0, "MSTORE",
        "PUSH1", 0x20, "PUSH1", 0, "PUSH1", 4, "PUSH1", 0, "DUP5", "GAS", "STATICCALL", "POP",
        "PUSH1", 0, "MLOAD",
        "CALLDATASIZE", "PUSH1", 0, "PUSH1", 0, "CALLDATACOPY",
        "PUSH1", 0, "PUSH1", 0, "CALLDATASIZE", "PUSH1", 0, "DUP5", "GAS", "DELEGATECALL",
        "RETURNDATASIZE", "PUSH1", 0, "PUSH1", 0, "RETURNDATACOPY",
        "PUSH2", "@ok", "JUMPI",
        "RETURNDATASIZE", "PUSH1", 0, "REVERT",
        "@ok:", "RETURNDATASIZE", "PUSH1", 0, "RETURN",
    ]
    return assemble(prog)


def beacon(impl_slot=1, owner_slot=0, upgradeable: bool = True, getter: bytes = IMPLEMENTATION_SELECTOR) -> bytes:
    """Beacon contract: ``getter`` returns the word at ``impl_slot``; an owner may rewrite it."""
    impl_slot, owner_slot = _slot(impl_slot), _slot(owner_slot)
    prog = _selector_prelude() + _arm(getter, "get")
    if upgradeable:
        prog += _arm(UPGRADE_TO, "up")
    prog += _revert()
    prog += ["@get:", "PUSH32", impl_slot, "SLOAD", "PUSH1", 0, "MSTORE", "PUSH1", 0x20, "PUSH1", 0, "RETURN"]
    if upgradeable:
        prog += [
            "@up:", "PUSH32", owner_slot, "SLOAD", "CALLER", "EQ", "PUSH2", "@do", "JUMPI", *_revert(),
            "@do:", "PUSH1", 4, "CALLDATALOAD", "PUSH32", impl_slot, "SSTORE", "STOP",
        ]
    return assemble(prog)


def logic_contract(slots=(0, 1), upgrade_slot: Optional[bytes] = None) -> bytes:
    """A plain implementation writing ``slots``; with ``upgrade_slot`` it carries a UUPS-style upgradeTo."""
    prog = _selector_prelude()
    if upgrade_slot is not None:
        prog += _arm(UPGRADE_TO, "upgrade")
    prog += ["POP"]
    for s in slots:
        prog += ["CALLVALUE", "PUSH32", _slot(s), "SSTORE"]
    prog += ["STOP"]
    if upgrade_slot is not None:
        prog += ["@upgrade:", "PUSH1", 4, "CALLDATALOAD", "PUSH32", _slot(upgrade_slot), "SSTORE", "STOP"]
    return assemble(prog)


def adversarial_slot_proxy(slot) -> bytes:
    """Slot-read delegation with no SSTORE, padded with PUSH immediates full of 0x55 bytes.

    A byte scan that ignores PUSH immediates sees SSTOREs (0x55) next to the slot
    bytes; the only real SSTORE-free path must not be classified as upgradeable.
    """
    slot = _slot(slot)
    decoys = [
        "PUSH32", b"\x55" * 32, "POP",
        "PUSH32", slot[:31] + b"\x55", "POP",
        "PUSH2", b"\x55\x55", "POP",
    ]
    return assemble(decoys + _forward(["PUSH32", slot, "SLOAD"]))


def factory(child_runtime_len: int = 45) -> bytes:
    """A factory: copies init code from its own tail and CREATEs it. Not analyzed, only stored."""
    return assemble(
        [
            "PUSH1", child_runtime_len, "DUP1", "PUSH1", 0x20, "PUSH1", 0, "CODECOPY",
            "PUSH1", 0, "CREATE", "PUSH1", 0, "MSTORE", "PUSH1", 0x20, "PUSH1", 0, "RETURN",
        ]
    )


def library_user(library: Address) -> bytes:
    """A non-proxy that delegatecalls a library for a specific helper selector."""
    helper = selector_from_signature("helper(uint256)")
    return assemble(
        [
            "PUSH4", helper, "PUSH1", 0xE0, "SHL", "PUSH1", 0, "MSTORE",
            "PUSH1", 0, "PUSH1", 0, "PUSH1", 4, "PUSH1", 0, "PUSH20", bytes(library), "GAS", "DELEGATECALL",
            "STOP",
        ]
    )
