"""Report builders that combine the kernels in :mod:`stats` with corpus-derived samples.

Every builder returns a JSON-ready dict. A test whose preconditions are not met
(empty sample, zero marginal, zero variance) is reported as ``undefined`` with the
reason instead of aborting the whole report.
"""

from __future__ import annotations

import csv
from typing import Iterable, Mapping, Optional

from . import stats
from .context import activity_levels
from .lineage import OFF_CHAIN, ON_CHAIN


def _undefined(exc: Exception) -> dict:
    return {"status": "undefined", "reason": str(exc)}


def compare(a: list, b: list, label_a: str, label_b: str) -> dict:
    """One-tailed Mann-Whitney (``a`` greater) plus Cliff's delta."""
    out: dict = {"a": label_a, "b": label_b, "n_a": len(a), "n_b": len(b)}
    try:
        mw = stats.mann_whitney_one_tailed(a, b)
        d = stats.cliffs_delta(a, b)
    except stats.StatsError as exc:
        out.update(_undefined(exc))
        return out
    out.update(
        status="ok",
        u=mw.u,
        p_value=mw.p_value,
        greater=mw.greater,
        exact=mw.exact,
        degenerate=mw.degenerate,
        cliffs_delta=d.delta,
        magnitude=d.magnitude,
    )
    return out


def write_ccdf_csv(samples: Mapping, path) -> None:
    """Long-format CCDF table: series, threshold, fraction."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("series", "threshold", "fraction"))
        for name in sorted(samples):
            if not samples[name]:
                continue
            for t, f in stats.ccdf(samples[name]).rows():
                w.writerow((name, t, f"{f:.6f}"))


def activity_report(groups: Iterable, proxy_set, contracts: Mapping) -> tuple:
    """Inbound-transaction activity of proxies vs other contracts. Returns (report, samples)."""
    proxies, others = activity_levels(groups, proxy_set, contracts)
    samples = {"proxy": proxies, "non-proxy": others}
    report = {
        "analysis": "activity",
        "medians": {k: _median(v) for k, v in samples.items()},
        "test": compare(proxies, others, "proxy", "non-proxy"),
    }
    return report, samples


def logic_targets_report(findings: Mapping) -> tuple:
    sample = [len(f.logic_targets) for f in findings.values()]
    report: dict = {"analysis": "logic-targets", "proxies": len(sample)}
    if sample:
        report["single_logic_share"] = sum(1 for n in sample if n == 1) / len(sample)
        report["max_logic_targets"] = max(sample)
    return report, {"logic-targets": sample}


def _median(xs: list) -> Optional[float]:
    if not xs:
        return None
    s = sorted(xs)
    m = len(s) // 2
    return float(s[m]) if len(s) % 2 else (s[m - 1] + s[m]) / 2


def style_size_table(contexts: Iterable) -> list:
    """[[on-chain N=1, on-chain N>1], [off-chain N=1, off-chain N>1]] context counts."""
    table = [[0, 0], [0, 0]]
    for c in contexts:
        if c.style not in (ON_CHAIN, OFF_CHAIN):
            continue
        table[0 if c.style == ON_CHAIN else 1][0 if c.size == 1 else 1] += 1
    return table


def deployment_report(contexts: list, chains: Mapping, contracts: Mapping, gas_prices: Optional[Mapping]) -> tuple:
    """Style vs context size, per-context gas and bytecode length, and their tests."""
    table = style_size_table(contexts)
    report: dict = {"analysis": "deployment", "style_by_size": {"rows": [ON_CHAIN, OFF_CHAIN], "cols": ["N=1", "N>1"], "counts": table}}
    try:
        chi = stats.chi_square_2x2(table)
        report["chi_square"] = {
            "status": "ok",
            "chi2": chi.chi2,
            "p_value": chi.p_value,
            "phi": chi.effect.phi,
            "magnitude": chi.effect.magnitude,
        }
    except stats.StatsError as exc:
        report["chi_square"] = _undefined(exc)

    costs = stats.deployment_cost_report(contexts, chains, contracts, gas_prices)
    report["contexts"] = [c.to_json() for c in costs]

    def pick(style, size_class, attr):
        return [getattr(c, attr) for c in costs if c.style == style and (size_class is None or c.size_class == size_class)]

    samples = {}
    for style in (ON_CHAIN, OFF_CHAIN):
        for size_class in ("N=1", "N>1"):
            samples[f"gas {style} {size_class}"] = pick(style, size_class, "avg_gas")
        samples[f"bytecode {style}"] = pick(style, None, "avg_bytecode_len")
    report["gas_multi"] = compare(
        pick(OFF_CHAIN, "N>1", "avg_gas"), pick(ON_CHAIN, "N>1", "avg_gas"), "off-chain N>1", "on-chain N>1"
    )
    report["gas_multi_excluding_factories"] = compare(
        pick(OFF_CHAIN, "N>1", "avg_gas_excluding_factories"),
        pick(ON_CHAIN, "N>1", "avg_gas_excluding_factories"),
        "off-chain N>1",
        "on-chain N>1",
    )
    report["bytecode_length"] = compare(
        samples[f"bytecode {OFF_CHAIN}"], samples[f"bytecode {ON_CHAIN}"], OFF_CHAIN, ON_CHAIN
    )
    sizes = {c.id: c.size for c in contexts}
    xs = [sizes[c.context_id] for c in costs]
    ys = [c.avg_bytecode_len for c in costs]
    try:
        report["size_vs_bytecode_spearman"] = {"status": "ok", "rho": stats.spearman(xs, ys), "n": len(xs)}
    except stats.StatsError as exc:
        report["size_vs_bytecode_spearman"] = _undefined(exc)
    return report, samples
