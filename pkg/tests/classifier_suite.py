"""Hand-built proxies covering every implementation kind and purpose shape.

Each case is (name, proxy address, state fixture, expected kind, expected purpose).
The state fixture is the JSON shape :class:`FixtureStateReader` reads; logic and
beacon contracts carry their bytecode in it so the classifier can fetch them.
"""

from __future__ import annotations

from proxyprobe import templates as T
from proxyprobe.classify import IMPLEMENTATION_SELECTOR, MASTERCOPY_SELECTOR, SlotCatalog
from proxyprobe.model import Address, format_hex, keccak256

OWNER = Address(bytes.fromhex("00000000000000000000000000000000000000aa"))
LOGIC = Address(bytes.fromhex("00000000000000000000000000000000000000bb"))
BEACON = Address(bytes.fromhex("00000000000000000000000000000000000000cc"))
OZ_ADMIN = keccak256(b"org.zeppelinos.proxy.admin")


def word(a) -> str:
    return format_hex(bytes(a).rjust(32, b"\0"))


def slot(n) -> str:
    return format_hex(n if isinstance(n, bytes) else n.to_bytes(32, "big"))


def proxy_addr(i: int) -> Address:
    return Address((0x1000 + i).to_bytes(20, "big"))


def _case(i, name, code, storage=None, calls=None, logic_code=None, kind="", purpose="", extra=None):
    p = proxy_addr(i)
    state = {
        str(p): {"bytecode": format_hex(code), "storage": storage or {}, "calls": calls or {}},
        str(LOGIC): {"bytecode": format_hex(logic_code if logic_code is not None else T.logic_contract())},
        str(OWNER): {"bytecode": "0x"},
    }
    state.update(extra or {})
    return name, p, state, kind, purpose


def cases() -> list:
    upgradeable_beacon = {
        str(BEACON): {
            "bytecode": format_hex(T.beacon()),
            "storage": {slot(1): word(LOGIC), slot(0): word(OWNER)},
            "calls": {format_hex(IMPLEMENTATION_SELECTOR): word(LOGIC)},
        }
    }
    fixed_beacon = {
        str(BEACON): {
            "bytecode": format_hex(T.beacon(upgradeable=False)),
            "storage": {slot(1): word(LOGIC)},
            "calls": {format_hex(IMPLEMENTATION_SELECTOR): word(LOGIC)},
        }
    }
    return [
        _case(0, "erc1167 clone", T.minimal_proxy(LOGIC), kind="erc1167-minimal", purpose="forwarder"),
        _case(
            1, "erc1967 with admin upgradeTo",
            T.slot_proxy(SlotCatalog.ERC1967_IMPL, SlotCatalog.ERC1967_ADMIN),
            storage={slot(SlotCatalog.ERC1967_IMPL): word(LOGIC), slot(SlotCatalog.ERC1967_ADMIN): word(OWNER)},
            kind="erc1967", purpose="upgradeability",
        ),
        _case(
            2, "erc1967 beacon, upgradeable beacon",
            T.beacon_proxy(SlotCatalog.ERC1967_BEACON),
            storage={slot(SlotCatalog.ERC1967_BEACON): word(BEACON)},
            kind="erc1967-beacon", purpose="upgradeability", extra=upgradeable_beacon,
        ),
        _case(
            3, "erc1967 beacon, fixed beacon",
            T.beacon_proxy(SlotCatalog.ERC1967_BEACON),
            storage={slot(SlotCatalog.ERC1967_BEACON): word(BEACON)},
            kind="erc1967-beacon", purpose="forwarder", extra=fixed_beacon,
        ),
        _case(
            4, "uups, upgrade lives in logic",
            T.slot_proxy(SlotCatalog.ERC1822_PROXIABLE, upgradeable=False),
            storage={slot(SlotCatalog.ERC1822_PROXIABLE): word(LOGIC)},
            logic_code=T.logic_contract(upgrade_slot=SlotCatalog.ERC1822_PROXIABLE),
            kind="erc1822-uups", purpose="upgradeability",
        ),
        _case(
            5, "openzeppelin legacy",
            T.slot_proxy(SlotCatalog.OZ_LEGACY_IMPL, OZ_ADMIN),
            storage={slot(SlotCatalog.OZ_LEGACY_IMPL): word(LOGIC), slot(OZ_ADMIN): word(OWNER)},
            kind="openzeppelin-legacy", purpose="upgradeability",
        ),
        _case(
            6, "gnosis safe proxy, logic writes slot 0",
            T.gnosis_proxy(),
            storage={slot(0): word(LOGIC)},
            calls={format_hex(MASTERCOPY_SELECTOR): word(LOGIC)},
            logic_code=T.logic_contract(slots=(0, 1)),
            kind="gnosis-safe-proxy", purpose="upgradeability",
        ),
        _case(
            7, "erc897 getter over a custom slot",
            T.erc897_proxy(3),
            storage={slot(3): word(LOGIC)},
            calls={format_hex(IMPLEMENTATION_SELECTOR): word(LOGIC)},
            kind="erc897", purpose="forwarder",
        ),
        _case(8, "hard-coded forwarder", T.hardcoded_forwarder(LOGIC), kind="customized", purpose="forwarder"),
        _case(
            9, "custom slot with in-proxy upgradeTo",
            T.slot_proxy(7, upgradeable=True),
            storage={slot(7): word(LOGIC)},
            kind="customized", purpose="upgradeability",
        ),
        _case(
            10, "adversarial: 0x55 bytes inside PUSH immediates",
            T.adversarial_slot_proxy(9),
            storage={slot(9): word(LOGIC)},
            kind="customized", purpose="forwarder",
        ),
    ]
