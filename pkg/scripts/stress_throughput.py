"""Measure ingest+detect throughput (trace records per second) on the stress preset.

    python scripts/stress_throughput.py --dir /tmp/stress [--repeat 3] [--presorted]

The corpus is generated into --dir unless a traces.jsonl is already there.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from proxyprobe import synth
from proxyprobe.detector import detect_corpus
from proxyprobe.ingest import IngestReport, group_by_transaction, load_traces


def measure(traces: Path, presorted: bool) -> tuple:
    rep = IngestReport()
    t0 = time.perf_counter()
    findings = detect_corpus(group_by_transaction(load_traces(traces, rep), rep, presorted=presorted))
    return rep.accepted, time.perf_counter() - t0, len(findings)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dir", type=Path, required=True)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--presorted", action="store_true", help="use the presorted single-pass grouping")
    ap.add_argument("--target", type=float, default=100_000)
    args = ap.parse_args(argv)

    traces = args.dir / "traces.jsonl"
    if not traces.exists():
        t0 = time.perf_counter()
        truth = synth.gen_fixture(synth.FixtureSpec.stress(), args.dir)
        print(f"generated {truth['records']:,} records in {time.perf_counter() - t0:.1f} s")

    best = 0.0
    for i in range(args.repeat):
        records, seconds, proxies = measure(traces, args.presorted)
        rate = records / seconds
        best = max(best, rate)
        print(f"run {i + 1}: {records:,} records, {proxies} proxies, {seconds:.2f} s, {rate:,.0f} records/s")
    print(f"best: {best:,.0f} records/s (target {args.target:,.0f})")
    return 0 if best >= args.target else 1


if __name__ == "__main__":
    sys.exit(main())
