"""Statistical kernels: CCDF, Mann-Whitney U, Cliff's delta, 2x2 chi-square, Spearman.

Everything is plain Python; the sample sizes involved are desk-scale.
"""

from __future__ import annotations

import bisect
import math
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

EXACT_MWU_MAX_N = 20


class StatsError(ValueError):
    pass


@dataclass(frozen=True)
class Ccdf:
    thresholds: tuple  # distinct sample values, ascending
    fractions: tuple  # share of the sample >= threshold
    _sorted: tuple = ()

    def at(self, t: float) -> float:
        """Share of the sample at or above ``t`` (any ``t``, not only sample values)."""
        n = len(self._sorted)
        return (n - bisect.bisect_left(self._sorted, t)) / n

    __call__ = at

    def rows(self) -> list:
        return list(zip(self.thresholds, self.fractions))


def ccdf(sample: Sequence[float]) -> Ccdf:
    if not sample:
        raise StatsError("ccdf of an empty sample")
    ordered = tuple(sorted(sample))
    n = len(ordered)
    thresholds = []
    fractions = []
    i = 0
    while i < n:
        v = ordered[i]
        thresholds.append(v)
        fractions.append((n - i) / n)
        i = bisect.bisect_right(ordered, v, lo=i)
    return Ccdf(tuple(thresholds), tuple(fractions), ordered)


def rank_average(values: Sequence[float]) -> list:
    """1-based fractional ranks; ties get the mean of the ranks they span."""
    order = sorted(range(len(values)), key=values.__getitem__)
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        r = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = r
        i = j + 1
    return ranks


@dataclass(frozen=True)
class MannWhitneyResult:
    u: float  # U statistic of the first sample
    p_value: float  # one-tailed, H1: first sample stochastically greater
    greater: bool  # p_value < alpha
    exact: bool
    degenerate: bool = False


def _exact_upper_tail(ranks: list, n1: int, u_obs: float) -> float:
    """P(U >= u_obs) over all C(n, n1) equally likely label assignments.

    Works on doubled ranks so tied (half-integer) ranks stay integral; the DP counts
    subsets of size n1 by their rank sum.
    """
    doubled = [int(round(2 * r)) for r in ranks]
    # counts[k][s] = number of k-subsets with doubled rank sum s
    counts = [Counter() for _ in range(n1 + 1)]
    counts[0][0] = 1
    for r in doubled:
        for k in range(n1, 0, -1):
            prev = counts[k - 1]
            cur = counts[k]
            for s, c in prev.items():
                cur[s + r] += c
    total = sum(counts[n1].values())
    # U = R1 - n1(n1+1)/2  ->  doubled: 2U = 2R1 - n1(n1+1)
    threshold = 2 * u_obs + n1 * (n1 + 1)
    hits = sum(c for s, c in counts[n1].items() if s >= threshold - 1e-9)
    return hits / total


def mann_whitney_one_tailed(a: Sequence[float], b: Sequence[float], alpha: float = 0.05) -> MannWhitneyResult:
    """One-tailed Mann-Whitney U test of H1: ``a`` tends to exceed ``b``.

    Exact permutation distribution (tie-aware) when the pooled size is at most 20,
    otherwise the normal approximation with tie and continuity correction.
    """
    n1, n2 = len(a), len(b)
    if n1 < 1 or n2 < 1:
        raise StatsError("both samples must be non-empty")
    pooled = list(a) + list(b)
    ranks = rank_average(pooled)
    r1 = sum(ranks[:n1])
    u = r1 - n1 * (n1 + 1) / 2
    if len(set(pooled)) == 1:
        return MannWhitneyResult(u, 0.5, False, n1 + n2 <= EXACT_MWU_MAX_N, degenerate=True)
    n = n1 + n2
    if n <= EXACT_MWU_MAX_N:
        p = _exact_upper_tail(ranks, n1, u)
        return MannWhitneyResult(u, p, p < alpha, True)
    ties = Counter(pooled).values()
    tie_term = sum(t**3 - t for t in ties) / (n * (n - 1))
    sigma = math.sqrt(n1 * n2 / 12 * ((n + 1) - tie_term))
    mu = n1 * n2 / 2
    z = (u - mu - 0.5) / sigma
    p = 0.5 * math.erfc(z / math.sqrt(2))
    return MannWhitneyResult(u, p, p < alpha, False)


NEGLIGIBLE, SMALL, MEDIUM, LARGE = "negligible", "small", "medium", "large"


@dataclass(frozen=True)
class EffectSize:
    delta: float
    magnitude: str


def delta_magnitude(delta: float) -> str:
    d = abs(delta)
    if d <= 0.147:
        return NEGLIGIBLE
    if d <= 0.33:
        return SMALL
    if d <= 0.474:
        return MEDIUM
    return LARGE


def cliffs_delta(a: Sequence[float], b: Sequence[float]) -> EffectSize:
    """(#{x > y} - #{x < y}) / (|a||b|), counted with a sort instead of all pairs."""
    if not a or not b:
        raise StatsError("both samples must be non-empty")
    sb = sorted(b)
    more = less = 0
    for x in a:
        less += len(sb) - bisect.bisect_right(sb, x)
        more += bisect.bisect_left(sb, x)
    delta = (more - less) / (len(a) * len(b))
    return EffectSize(delta, delta_magnitude(delta))


@dataclass(frozen=True)
class PhiEffect:
    phi: float
    magnitude: str


def phi_magnitude(phi: float) -> str:
    p = abs(phi)
    if p <= 0.3:
        return SMALL
    if p <= 0.5:
        return MEDIUM
    return LARGE


@dataclass(frozen=True)
class ChiSquareResult:
    chi2: float
    p_value: float
    effect: PhiEffect


def chi_square_2x2(table: Sequence[Sequence[float]]) -> ChiSquareResult:
    """Pearson chi-square on a 2x2 table, no continuity correction; phi = sqrt(chi2/N)."""
    (a, b), (c, d) = table
    if min(a, b, c, d) < 0:
        raise StatsError("negative cell count")
    n = a + b + c + d
    rows = (a + b, c + d)
    cols = (a + c, b + d)
    if n <= 0 or 0 in rows or 0 in cols:
        raise StatsError("chi-square undefined with a zero marginal")
    chi2 = 0.0
    for i, row in enumerate(((a, b), (c, d))):
        for j, obs in enumerate(row):
            exp = rows[i] * cols[j] / n
            chi2 += (obs - exp) ** 2 / exp
    # 1 degree of freedom: survival function of chi2(1) is erfc(sqrt(x/2))
    p = math.erfc(math.sqrt(chi2 / 2))
    phi = math.sqrt(chi2 / n)
    return ChiSquareResult(chi2, p, PhiEffect(phi, phi_magnitude(phi)))


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    sxy = sum((xi - mx) * (yi - my) for xi, yi in zip(x, y))
    sxx = sum((xi - mx) ** 2 for xi in x)
    syy = sum((yi - my) ** 2 for yi in y)
    if sxx == 0 or syy == 0:
        raise StatsError("correlation undefined: zero variance")
    return sxy / math.sqrt(sxx * syy)


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    if len(x) != len(y) or len(x) < 2:
        raise StatsError("spearman needs two equal-length samples of size >= 2")
    return pearson(rank_average(x), rank_average(y))


def clone_cost_ratio(logic_gas: float, clone_gas: float, n: int) -> float:
    """Gas of one logic deployment plus ``n`` clones, relative to ``n`` full deployments."""
    if n < 1 or logic_gas <= 0:
        raise StatsError("need n >= 1 and positive logic gas")
    return (logic_gas + n * clone_gas) / (n * logic_gas)


@dataclass(frozen=True)
class ContextCost:
    context_id: str
    style: str
    size_class: str  # "N=1" or "N>1"
    proxies: int
    factories: int
    avg_gas: float
    avg_gas_excluding_factories: float
    avg_bytecode_len: float
    total_fee_wei: Optional[int] = None

    def to_json(self) -> dict:
        out = {k: v for k, v in vars(self).items() if k != "total_fee_wei"}
        if self.total_fee_wei is not None:
            out["total_fee_wei"] = self.total_fee_wei
        return out


def deployment_cost_report(contexts, chains: Mapping, contracts: Mapping, gas_prices: Optional[Mapping] = None) -> list:
    """Per-context deployment gas and bytecode-length aggregates.

    On-chain contexts add the creation gas of every distinct factory on their
    members' chains and divide by proxies plus factories; the ``excluding``
    figure and bytecode length look at the proxies only. ``gas_prices`` maps a
    creation tx hash to its gas price; the fee is left out unless every involved
    creation has one. Contexts without any complete chain are skipped.
    """
    out = []
    for ctx in contexts:
        members = [chains[p] for p in sorted(ctx.members) if p in chains and chains[p].complete]
        if not members:
            continue
        style = members[0].style
        proxy_gas = []
        steps = []  # (tx hash, gas) for every creation counted
        factory_gas: dict = {}
        for chain in members:
            proxy_gas.append(chain.creation_gas[-1])
            steps.append((chain.creation_txs[-1], chain.creation_gas[-1]))
            for i, (addr, _) in enumerate(chain.nodes[1:-1]):
                if addr not in factory_gas:
                    factory_gas[addr] = (chain.creation_txs[i], chain.creation_gas[i])
        steps += factory_gas.values()
        total = sum(proxy_gas) + sum(g for _, g in factory_gas.values())
        fee = None
        if gas_prices is not None and all(tx in gas_prices and gas_prices[tx] is not None for tx, _ in steps):
            fee = sum(g * gas_prices[tx] for tx, g in steps)
        lengths = [len(contracts[c.proxy].bytecode) for c in members if c.proxy in contracts]
        out.append(
            ContextCost(
                ctx.id,
                style,
                "N=1" if ctx.size == 1 else "N>1",
                len(members),
                len(factory_gas),
                total / (len(members) + len(factory_gas)),
                sum(proxy_gas) / len(members),
                sum(lengths) / len(lengths) if lengths else 0.0,
                fee,
            )
        )
    return out
