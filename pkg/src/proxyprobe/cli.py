"""Command-line front end.

Exit codes: 0 ok, 1 usage, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__, analyses, classify, context, detector, lineage, pipeline, stats, synth
from .ingest import Corpus, IngestError, build_index, file_digest, index_contracts, iter_index_groups
from .model import CallType
from .tracegraph import monthly_multi_contract_ratio

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
DATA_ERRORS = (
    IngestError,
    synth.FixtureError,
    pipeline.ConfigError,
    stats.StatsError,
    classify.StateUnavailable,
    ValueError,
    OSError,
    KeyError,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _write_json(obj, out) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out is None or str(out) == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _need(args, *names) -> None:
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n, None) is None]
    if missing:
        what = " ".join(x for x in (args.command, getattr(args, "action", None)) if x)
        raise UsageError(f"{what} needs {', '.join(missing)}")


def cmd_ingest(args) -> int:
    _, report = build_index(args.traces, args.contracts, args.out, strict=args.strict, memory_budget=args.memory_budget)
    logging.info("accepted %d traces, %d errors, %d quarantined transactions", report.accepted, len(report.errors), len(report.quarantined))
    return EXIT_OK


def cmd_graph(args) -> int:
    corpus = Corpus.from_index(args.corpus)
    ct = CallType.parse(args.call_type) if args.call_type else None
    series = monthly_multi_contract_ratio(iter_index_groups(corpus), index_contracts(corpus), ct)
    series.write_csv(args.out)
    return EXIT_OK


def cmd_detect(args) -> int:
    if args.action == "score":
        _need(args, "proxies", "ground_truth")
        findings = detector.read_findings(args.proxies)
        labels, active = detector.read_ground_truth(args.ground_truth)
        contracts = index_contracts(Corpus.from_index(args.corpus)) if args.corpus else None
        report = detector.score(findings, labels, contracts, active).to_json()
        report["inputs"] = {"proxies": file_digest(args.proxies), "ground_truth": file_digest(args.ground_truth)}
        _write_json(report, args.out)
        return EXIT_OK
    _need(args, "corpus", "out")
    findings = detector.detect_corpus(iter_index_groups(Corpus.from_index(args.corpus)), workers=args.workers)
    detector.write_findings(findings, args.out)
    return EXIT_OK


def cmd_lineage(args) -> int:
    if args.action == "catalog":
        _need(args, "chains", "out")
        chains = lineage.read_chains(args.chains)
        ctxs = context.read_contexts(args.contexts) if args.contexts else None
        lineage.write_catalog(lineage.pattern_catalog(chains.values(), ctxs), args.out)
        return EXIT_OK
    _need(args, "corpus", "proxies", "out")
    corpus = Corpus.from_index(args.corpus)
    findings = detector.read_findings(args.proxies)
    creations = lineage.CreationIndex.from_groups(iter_index_groups(corpus))
    lineage.write_chains(lineage.build_chains(findings, creations, index_contracts(corpus)), args.out)
    return EXIT_OK


def cmd_contexts(args) -> int:
    if args.action == "monthly":
        _need(args, "contexts", "out")
        context.monthly_context_counts(context.read_contexts(args.contexts)).write_csv(args.out)
        return EXIT_OK
    _need(args, "corpus", "proxies", "out")
    corpus = Corpus.from_index(args.corpus)
    findings = detector.read_findings(args.proxies)
    proxy_set = frozenset(findings)
    if args.action == "adoption":
        adoption = context.adoption_series(iter_index_groups(corpus), proxy_set)
        context.adoption_to_series(adoption).write_csv(args.out)
        return EXIT_OK
    contracts = index_contracts(corpus)
    if args.action == "utilization":
        every, multi = context.utilization_series(iter_index_groups(corpus), proxy_set, contracts)
        (multi if args.multi else every).write_csv(args.out)
        return EXIT_OK
    chains = lineage.read_chains(args.chains) if args.chains else None
    creations = lineage.CreationIndex.from_groups(iter_index_groups(corpus))
    context.write_contexts(context.cluster_contexts(findings, contracts, creations, chains), args.out)
    return EXIT_OK


def cmd_classify(args) -> int:
    _need(args, "proxies", "out")
    if (args.state is None) == (args.rpc is None):
        raise UsageError("classify needs exactly one of --state or --rpc")
    reader = classify.FixtureStateReader.load(args.state) if args.state else classify.RpcStateReader(args.rpc)
    contracts = index_contracts(Corpus.from_index(args.corpus)) if args.corpus else {}
    rows = classify.classify_proxies(detector.read_findings(args.proxies), contracts, reader)
    classify.write_classes(rows, args.out)
    return EXIT_OK


def cmd_stats(args) -> int:
    a = args.analysis
    if a == "chi-square":
        _need(args, "table")
        cells = [float(x) for x in args.table.split(",")]
        if len(cells) != 4:
            raise UsageError("--table takes four comma-separated counts a,b,c,d")
        r = stats.chi_square_2x2([cells[:2], cells[2:]])
        _write_json({"analysis": a, "table": [cells[:2], cells[2:]], "chi2": r.chi2, "p_value": r.p_value, "phi": r.effect.phi, "magnitude": r.effect.magnitude}, args.out)
        return EXIT_OK
    if a == "logic-targets":
        _need(args, "proxies")
        report, samples = analyses.logic_targets_report(detector.read_findings(args.proxies))
        report["inputs"] = {"proxies": file_digest(args.proxies)}
    elif a == "activity":
        _need(args, "corpus", "proxies")
        corpus = Corpus.from_index(args.corpus)
        report, samples = analyses.activity_report(
            iter_index_groups(corpus), frozenset(detector.read_findings(args.proxies)), index_contracts(corpus)
        )
        report["inputs"] = {"traces": file_digest(corpus.traces_path), "proxies": file_digest(args.proxies)}
    else:  # deployment
        _need(args, "corpus", "chains", "contexts")
        corpus = Corpus.from_index(args.corpus)
        gas_prices = {tx.transaction_hash: tx.root.gas_price for tx in iter_index_groups(corpus)}
        report, samples = analyses.deployment_report(
            context.read_contexts(args.contexts), lineage.read_chains(args.chains), index_contracts(corpus), gas_prices
        )
        report["inputs"] = {
            "traces": file_digest(corpus.traces_path),
            "chains": file_digest(args.chains),
            "contexts": file_digest(args.contexts),
        }
    if args.ccdf_out:
        analyses.write_ccdf_csv(samples, args.ccdf_out)
    _write_json(report, args.out)
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = pipeline.RunConfig.load(args.config)
    if args.workers is not None:
        cfg.workers = args.workers
    if args.out is not None:
        cfg.out = Path(args.out)
    result = pipeline.run_pipeline(cfg, force=args.force)
    for s in result.manifest["stages"]:
        logging.info("%-9s %s", s["name"], s["status"])
    return EXIT_OK if result.ok else EXIT_DATA


def cmd_gen_fixture(args) -> int:
    values = {}
    if args.config:
        values.update(pipeline.read_kv(args.config))
    for item in args.set or ():
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        values[k.strip()] = v.strip()
    base = synth.FixtureSpec.stress() if args.preset == "stress" else synth.FixtureSpec.desk()
    if values:
        merged = {k: v for k, v in base.to_json().items() if k != "patterns"}
        merged["patterns"] = ";".join(base.patterns)
        merged.update(values)
        spec = synth.FixtureSpec.from_mapping({k: str(v) for k, v in merged.items()})
    else:
        spec = base
    truth = synth.gen_fixture(spec, args.out)
    logging.info("wrote %d transactions, %d trace records to %s", truth["transactions"], truth["records"], args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="proxyprobe", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"proxyprobe {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("ingest", help="validate raw exports and build the canonical index")
    s.add_argument("--traces", required=True, type=Path)
    s.add_argument("--contracts", required=True, type=Path)
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--strict", action="store_true", help="fail on the first malformed row")
    s.add_argument("--memory-budget", type=int, default=2_000_000, help="trace records buffered before spilling")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("graph", help="monthly multi-contract transaction ratio")
    s.add_argument("action", choices=["stats"])
    s.add_argument("--corpus", required=True, type=Path, help="index directory")
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--call-type", help="count only multi-contract txs containing this call type")
    s.set_defaults(func=cmd_graph)

    s = sub.add_parser("detect", help="find proxies from delegatecall traces, or score findings")
    s.add_argument("action", nargs="?", choices=["score"])
    s.add_argument("--corpus", type=Path)
    s.add_argument("--out", type=Path)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--proxies", type=Path)
    s.add_argument("--ground-truth", type=Path)
    s.set_defaults(func=cmd_detect)

    s = sub.add_parser("lineage", help="creation chains for detected proxies, or their pattern catalog")
    s.add_argument("action", nargs="?", choices=["catalog"])
    s.add_argument("--corpus", type=Path)
    s.add_argument("--proxies", type=Path)
    s.add_argument("--chains", type=Path)
    s.add_argument("--contexts", type=Path)
    s.add_argument("--out", type=Path)
    s.set_defaults(func=cmd_lineage)

    s = sub.add_parser("contexts", help="usage contexts and the prevalence series")
    s.add_argument("action", nargs="?", choices=["monthly", "adoption", "utilization"])
    s.add_argument("--corpus", type=Path)
    s.add_argument("--proxies", type=Path)
    s.add_argument("--chains", type=Path)
    s.add_argument("--contexts", type=Path)
    s.add_argument("--multi", action="store_true", help="utilization over multi-contract transactions")
    s.add_argument("--out", type=Path)
    s.set_defaults(func=cmd_contexts)

    s = sub.add_parser("classify", help="reference implementation and purpose of each proxy")
    s.add_argument("--proxies", type=Path)
    s.add_argument("--corpus", type=Path, help="index directory supplying bytecode")
    s.add_argument("--state", type=Path, help="JSON state fixture")
    s.add_argument("--rpc", help="JSON-RPC endpoint URL")
    s.add_argument("--out", type=Path)
    s.set_defaults(func=cmd_classify)

    s = sub.add_parser("stats", help="statistical reports")
    s.add_argument("analysis", choices=["activity", "deployment", "logic-targets", "chi-square"])
    s.add_argument("--corpus", type=Path)
    s.add_argument("--proxies", type=Path)
    s.add_argument("--chains", type=Path)
    s.add_argument("--contexts", type=Path)
    s.add_argument("--table", help="a,b,c,d counts for chi-square")
    s.add_argument("--ccdf-out", type=Path, help="also write the CCDF table as CSV")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("run", help="run the whole pipeline from a key = value config")
    s.add_argument("--config", required=True, type=Path)
    s.add_argument("--workers", type=int)
    s.add_argument("--out", type=Path, help="override the config's output directory")
    s.add_argument("--force", action="store_true", help="re-run stages even if unchanged")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("gen-fixture", help="write a synthetic corpus with planted ground truth")
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--preset", choices=["desk", "stress"], default="desk")
    s.add_argument("--config", type=Path, help="key = value overrides")
    s.add_argument("--set", action="append", metavar="KEY=VALUE")
    s.set_defaults(func=cmd_gen_fixture)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"proxyprobe: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"proxyprobe: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DATA_ERRORS as exc:
        print(f"proxyprobe: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - last-resort boundary
        logging.exception("internal error")
        print(f"proxyprobe: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
