"""Independent reference implementations used only by the tests.

None of these share code with the package: keccak is a from-scratch sponge, the
statistics are the textbook formulas evaluated by brute force.
"""

from __future__ import annotations

import itertools
import math

# Keccak-f[1600] round constants and rotation offsets, as tabulated in FIPS 202.
_RC = [
    0x0000000000000001, 0x0000000000008082, 0x800000000000808A, 0x8000000080008000,
    0x000000000000808B, 0x0000000080000001, 0x8000000080008081, 0x8000000000008009,
    0x000000000000008A, 0x0000000000000088, 0x0000000080008009, 0x000000008000000A,
    0x000000008000808B, 0x800000000000008B, 0x8000000000008089, 0x8000000000008003,
    0x8000000000008002, 0x8000000000000080, 0x000000000000800A, 0x800000008000000A,
    0x8000000080008081, 0x8000000000008080, 0x0000000080000001, 0x8000000080008008,
]
_ROT = [
    [0, 36, 3, 41, 18],
    [1, 44, 10, 45, 2],
    [62, 6, 43, 15, 61],
    [28, 55, 25, 21, 56],
    [27, 20, 39, 8, 14],
]
_MASK = (1 << 64) - 1


def _rotl(v, n):
    return ((v << n) | (v >> (64 - n))) & _MASK if n else v


def _keccak_f(a):
    for rc in _RC:
        c = [a[x][0] ^ a[x][1] ^ a[x][2] ^ a[x][3] ^ a[x][4] for x in range(5)]
        d = [c[(x - 1) % 5] ^ _rotl(c[(x + 1) % 5], 1) for x in range(5)]
        a = [[a[x][y] ^ d[x] for y in range(5)] for x in range(5)]
        b = [[0] * 5 for _ in range(5)]
        for x in range(5):
            for y in range(5):
                b[y][(2 * x + 3 * y) % 5] = _rotl(a[x][y], _ROT[x][y])
        a = [[b[x][y] ^ (~b[(x + 1) % 5][y] & b[(x + 2) % 5][y]) for y in range(5)] for x in range(5)]
        a[0][0] ^= rc
    return a


def keccak256(data: bytes) -> bytes:
    """Original Keccak (0x01 padding, as Ethereum uses), 256-bit output."""
    rate = 136
    msg = bytearray(data) + b"\x01"
    msg += b"\x00" * (-len(msg) % rate)
    msg[-1] |= 0x80
    a = [[0] * 5 for _ in range(5)]
    for off in range(0, len(msg), rate):
        block = msg[off : off + rate]
        for i in range(rate // 8):
            x, y = i % 5, i // 5
            a[x][y] ^= int.from_bytes(block[8 * i : 8 * i + 8], "little")
        a = _keccak_f(a)
    out = b"".join(a[i % 5][i // 5].to_bytes(8, "little") for i in range(rate // 8))
    return out[:32]


def mwu_enumerated_p(a, b) -> float:
    """One-tailed P(U >= U_obs) by listing every split of the pooled sample."""
    pooled = list(a) + list(b)
    n1 = len(a)

    def u_of(first, second):
        return sum((x > y) + 0.5 * (x == y) for x in first for y in second)

    u_obs = u_of(a, b)
    hits = total = 0
    for idx in itertools.combinations(range(len(pooled)), n1):
        chosen = set(idx)
        first = [pooled[i] for i in idx]
        second = [pooled[i] for i in range(len(pooled)) if i not in chosen]
        total += 1
        hits += u_of(first, second) >= u_obs - 1e-9
    return hits / total


def chi_square_textbook(table) -> float:
    """N (ad - bc)^2 / ((a+b)(c+d)(a+c)(b+d))."""
    (a, b), (c, d) = table
    n = a + b + c + d
    return n * (a * d - b * c) ** 2 / ((a + b) * (c + d) * (a + c) * (b + d))


def spearman_textbook(x, y) -> float:
    """1 - 6 sum d^2 / (n (n^2 - 1)); valid only without ties."""
    n = len(x)
    rx = {v: r for r, v in enumerate(sorted(x), start=1)}
    ry = {v: r for r, v in enumerate(sorted(y), start=1)}
    d2 = sum((rx[a] - ry[b]) ** 2 for a, b in zip(x, y))
    return 1 - 6 * d2 / (n * (n * n - 1))


def spearman_midrank(x, y) -> float:
    """Pearson correlation of midranks, each counted directly; handles ties."""
    def midranks(v):
        return [sum(w < a for w in v) + (sum(w == a for w in v) + 1) / 2 for a in v]

    rx, ry = midranks(x), midranks(y)
    mx, my = sum(rx) / len(rx), sum(ry) / len(ry)
    cov = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    return cov / math.sqrt(sum((a - mx) ** 2 for a in rx) * sum((b - my) ** 2 for b in ry))


def components_bfs(nodes, edges) -> list:
    adj = {n: set() for n in nodes}
    for a, b in edges:
        adj.setdefault(a, set()).add(b)
        adj.setdefault(b, set()).add(a)
    seen, out = set(), []
    for start in adj:
        if start in seen:
            continue
        comp, todo = set(), [start]
        while todo:
            n = todo.pop()
            if n in comp:
                continue
            comp.add(n)
            todo.extend(adj[n] - comp)
        seen |= comp
        out.append(frozenset(comp))
    return out


def cliffs_delta_pairs(a, b) -> float:
    return sum((x > y) - (x < y) for x in a for y in b) / (len(a) * len(b))


def normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2))
