"""Stage runner behind ``proxyprobe run``: ordered stages, digest-based skipping, one manifest.

``manifest.json`` holds only content-derived facts (parameters, input and output
digests, stage status), so identical inputs give a byte-identical manifest. Timings,
worker counts and which stages were skipped go to ``run_log.json`` next to it.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from . import __version__, analyses, classify, context, detector, lineage
from .ingest import DEFAULT_MEMORY_BUDGET, Corpus, build_index, file_digest, index_contracts, iter_index_groups
from .model import CallType
from .tracegraph import monthly_multi_contract_ratio

log = logging.getLogger(__name__)

STAGES = ("ingest", "graph", "detect", "lineage", "contexts", "catalog", "classify", "stats")
INDEX_FILES = ("index/traces.jsonl", "index/contracts.jsonl")


class ConfigError(ValueError):
    pass


def read_kv(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment; later keys override earlier ones."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


@dataclass
class RunConfig:
    traces: Path
    contracts: Path
    out: Path
    ground_truth: Optional[Path] = None
    state: Optional[Path] = None
    rpc: Optional[str] = None
    workers: int = 1
    strict: bool = True
    memory_budget: int = DEFAULT_MEMORY_BUDGET

    @classmethod
    def from_mapping(cls, values: dict, base: Path = Path(".")) -> "RunConfig":
        known = {"traces", "contracts", "out", "ground_truth", "state", "rpc", "workers", "strict", "memory_budget"}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        for key in ("traces", "contracts", "out"):
            if not values.get(key):
                raise ConfigError(f"config needs {key}")

        def path(key):
            v = values.get(key)
            return (base / v) if v else None

        try:
            return cls(
                traces=path("traces"),
                contracts=path("contracts"),
                out=path("out"),
                ground_truth=path("ground_truth"),
                state=path("state"),
                rpc=values.get("rpc") or None,
                workers=int(values.get("workers", 1)),
                strict=str(values.get("strict", "true")).lower() in ("1", "true", "yes"),
                memory_budget=int(values.get("memory_budget", DEFAULT_MEMORY_BUDGET)),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        return cls.from_mapping(read_kv(path), path.parent)


@dataclass
class Stage:
    name: str
    inputs: Callable  # cfg -> {logical name: path}
    outputs: Callable  # cfg -> [relative output paths]
    params: Callable  # cfg -> dict recorded in the manifest
    run: Callable  # (cfg, workdir) -> None
    enabled: Callable = lambda cfg: True


def _canonical(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def _write_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _digests(paths: dict) -> dict:
    return {name: file_digest(p) for name, p in sorted(paths.items())}


# -- stage bodies ----------------------------------------------------------------


def _corpus(w: Path) -> Corpus:
    return Corpus.from_index(w / "index")


def _stage_ingest(cfg: RunConfig, w: Path) -> None:
    _, report = build_index(cfg.traces, cfg.contracts, w / "index", strict=cfg.strict, memory_budget=cfg.memory_budget)
    if report.accepted == 0:
        raise ValueError("no valid trace records")


def _stage_graph(cfg: RunConfig, w: Path) -> None:
    corpus = _corpus(w)
    contracts = index_contracts(corpus)
    (w / "series").mkdir(exist_ok=True)
    monthly_multi_contract_ratio(iter_index_groups(corpus), contracts).write_csv(w / "series/multi_contract.csv")
    monthly_multi_contract_ratio(iter_index_groups(corpus), contracts, CallType.DELEGATECALL).write_csv(
        w / "series/multi_contract_delegatecall.csv"
    )


def _stage_detect(cfg: RunConfig, w: Path) -> None:
    corpus = _corpus(w)
    groups = iter_index_groups(corpus)
    findings = detector.detect_corpus(groups, workers=cfg.workers)
    detector.write_findings(findings, w / "proxies.jsonl")
    (w / "series").mkdir(exist_ok=True)
    (w / "reports").mkdir(exist_ok=True)
    report, samples = analyses.logic_targets_report(findings)
    analyses.write_ccdf_csv(samples, w / "series/logic_targets_ccdf.csv")
    report["inputs"] = _digests({"proxies.jsonl": w / "proxies.jsonl"})
    _write_json(report, w / "reports/logic_targets.json")
    if cfg.ground_truth is not None:
        labels, active = detector.read_ground_truth(cfg.ground_truth)
        score = detector.score(findings, labels, index_contracts(corpus), active).to_json()
        score["inputs"] = {"ground_truth": file_digest(cfg.ground_truth), **_digests({"proxies.jsonl": w / "proxies.jsonl"})}
        _write_json(score, w / "reports/detection_score.json")


def _stage_lineage(cfg: RunConfig, w: Path) -> None:
    corpus = _corpus(w)
    findings = detector.read_findings(w / "proxies.jsonl")
    creations = lineage.CreationIndex.from_groups(iter_index_groups(corpus))
    chains = lineage.build_chains(findings, creations, index_contracts(corpus))
    lineage.write_chains(chains, w / "chains.jsonl")


def _stage_contexts(cfg: RunConfig, w: Path) -> None:
    corpus = _corpus(w)
    contracts = index_contracts(corpus)
    findings = detector.read_findings(w / "proxies.jsonl")
    chains = lineage.read_chains(w / "chains.jsonl")
    creations = lineage.CreationIndex.from_groups(iter_index_groups(corpus))
    ctxs = context.cluster_contexts(findings, contracts, creations, chains)
    context.write_contexts(ctxs, w / "contexts.jsonl")
    proxy_set = frozenset(findings)
    series = w / "series"
    series.mkdir(exist_ok=True)
    context.monthly_context_counts(ctxs).write_csv(series / "contexts_monthly.csv")
    adoption = context.adoption_series(iter_index_groups(corpus), proxy_set)
    context.adoption_to_series(adoption).write_csv(series / "adoption.csv")
    every, multi = context.utilization_series(iter_index_groups(corpus), proxy_set, contracts)
    every.write_csv(series / "utilization_all.csv")
    multi.write_csv(series / "utilization_multi.csv")


def _stage_catalog(cfg: RunConfig, w: Path) -> None:
    chains = lineage.read_chains(w / "chains.jsonl")
    ctxs = context.read_contexts(w / "contexts.jsonl")
    lineage.write_catalog(lineage.pattern_catalog(chains.values(), ctxs), w / "patterns.csv")


def _reader(cfg: RunConfig):
    if cfg.state is not None:
        return classify.FixtureStateReader.load(cfg.state)
    return classify.RpcStateReader(cfg.rpc)


def _stage_classify(cfg: RunConfig, w: Path) -> None:
    corpus = _corpus(w)
    findings = detector.read_findings(w / "proxies.jsonl")
    rows = classify.classify_proxies(findings, index_contracts(corpus), _reader(cfg))
    classify.write_classes(rows, w / "classes.csv")


def _stage_stats(cfg: RunConfig, w: Path) -> None:
    corpus = _corpus(w)
    contracts = index_contracts(corpus)
    findings = detector.read_findings(w / "proxies.jsonl")
    chains = lineage.read_chains(w / "chains.jsonl")
    ctxs = context.read_contexts(w / "contexts.jsonl")
    (w / "reports").mkdir(exist_ok=True)
    inputs = _digests({name: w / name for name in (*INDEX_FILES, "proxies.jsonl", "chains.jsonl", "contexts.jsonl")})

    report, samples = analyses.activity_report(iter_index_groups(corpus), frozenset(findings), contracts)
    report["inputs"] = inputs
    _write_json(report, w / "reports/activity.json")
    analyses.write_ccdf_csv(samples, w / "series/activity_ccdf.csv")

    gas_prices = {tx.transaction_hash: tx.root.gas_price for tx in iter_index_groups(corpus)}
    report, samples = analyses.deployment_report(ctxs, chains, contracts, gas_prices)
    report["inputs"] = inputs
    _write_json(report, w / "reports/deployment.json")
    analyses.write_ccdf_csv(samples, w / "series/deployment_ccdf.csv")


def _index_inputs(cfg, w):
    return {name: w / name for name in INDEX_FILES}


PIPELINE = (
    Stage(
        "ingest",
        inputs=lambda cfg, w: {"traces": cfg.traces, "contracts": cfg.contracts},
        outputs=lambda cfg: ["index/traces.jsonl", "index/contracts.jsonl", "index/errors.json", "index/manifest.json"],
        params=lambda cfg: {"strict": cfg.strict},
        run=_stage_ingest,
    ),
    Stage(
        "graph",
        inputs=_index_inputs,
        outputs=lambda cfg: ["series/multi_contract.csv", "series/multi_contract_delegatecall.csv"],
        params=lambda cfg: {},
        run=_stage_graph,
    ),
    Stage(
        "detect",
        inputs=lambda cfg, w: {
            **_index_inputs(cfg, w),
            **({"ground_truth": cfg.ground_truth} if cfg.ground_truth is not None else {}),
        },
        outputs=lambda cfg: ["proxies.jsonl", "series/logic_targets_ccdf.csv", "reports/logic_targets.json"]
        + (["reports/detection_score.json"] if cfg.ground_truth is not None else []),
        params=lambda cfg: {},
        run=_stage_detect,
    ),
    Stage(
        "lineage",
        inputs=lambda cfg, w: {**_index_inputs(cfg, w), "proxies.jsonl": w / "proxies.jsonl"},
        outputs=lambda cfg: ["chains.jsonl"],
        params=lambda cfg: {"max_depth": lineage.MAX_DEPTH},
        run=_stage_lineage,
    ),
    Stage(
        "contexts",
        inputs=lambda cfg, w: {
            **_index_inputs(cfg, w),
            "proxies.jsonl": w / "proxies.jsonl",
            "chains.jsonl": w / "chains.jsonl",
        },
        outputs=lambda cfg: [
            "contexts.jsonl",
            "series/contexts_monthly.csv",
            "series/adoption.csv",
            "series/utilization_all.csv",
            "series/utilization_multi.csv",
        ],
        params=lambda cfg: {},
        run=_stage_contexts,
    ),
    Stage(
        "catalog",
        inputs=lambda cfg, w: {"chains.jsonl": w / "chains.jsonl", "contexts.jsonl": w / "contexts.jsonl"},
        outputs=lambda cfg: ["patterns.csv"],
        params=lambda cfg: {},
        run=_stage_catalog,
    ),
    Stage(
        "classify",
        inputs=lambda cfg, w: {
            "index/contracts.jsonl": w / "index/contracts.jsonl",
            "proxies.jsonl": w / "proxies.jsonl",
            **({"state": cfg.state} if cfg.state is not None else {}),
        },
        outputs=lambda cfg: ["classes.csv"],
        params=lambda cfg: {"reader": "fixture" if cfg.state is not None else "rpc", "rpc": cfg.rpc},
        run=_stage_classify,
        enabled=lambda cfg: cfg.state is not None or cfg.rpc is not None,
    ),
    Stage(
        "stats",
        inputs=lambda cfg, w: {
            **_index_inputs(cfg, w),
            "proxies.jsonl": w / "proxies.jsonl",
            "chains.jsonl": w / "chains.jsonl",
            "contexts.jsonl": w / "contexts.jsonl",
        },
        outputs=lambda cfg: [
            "reports/activity.json",
            "series/activity_ccdf.csv",
            "reports/deployment.json",
            "series/deployment_ccdf.csv",
        ],
        params=lambda cfg: {},
        run=_stage_stats,
    ),
)

# stages whose failure or absence blocks another
REQUIRES = {
    "graph": ("ingest",),
    "detect": ("ingest",),
    "lineage": ("detect",),
    "contexts": ("lineage",),
    "catalog": ("contexts",),
    "classify": ("detect",),
    "stats": ("contexts",),
}


@dataclass
class RunResult:
    manifest: dict
    log: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(s["status"] in ("complete", "not-configured") for s in self.manifest["stages"])


def run_pipeline(cfg: RunConfig, force: bool = False) -> RunResult:
    """Run every stage in order into ``cfg.out``; unchanged stages are skipped.

    A stage is skipped when its key (name, parameters, input digests) matches the
    previous manifest and its recorded outputs are still present and unchanged.
    """
    w = Path(cfg.out)
    w.mkdir(parents=True, exist_ok=True)
    previous = {}
    manifest_path = w / "manifest.json"
    if manifest_path.exists() and not force:
        try:
            previous = {s["name"]: s for s in json.loads(manifest_path.read_text())["stages"]}
        except (ValueError, KeyError, TypeError):
            previous = {}

    entries = []
    run_log = {"workers": cfg.workers, "stages": []}
    status: dict = {}
    for stage in PIPELINE:
        entry: dict = {"name": stage.name, "params": stage.params(cfg)}
        blocked = [r for r in REQUIRES.get(stage.name, ()) if status.get(r) != "complete"]
        if blocked:
            entry["status"] = "not-run"
            entry["blocked_by"] = blocked
        elif not stage.enabled(cfg):
            entry["status"] = "not-configured"
        else:
            t0 = time.perf_counter()
            executed = True
            try:
                inputs = _digests(stage.inputs(cfg, w))
                entry["inputs"] = inputs
                entry["key"] = hashlib.sha256(_canonical([stage.name, entry["params"], inputs, __version__])).hexdigest()
                prev = previous.get(stage.name)
                if prev is not None and prev.get("key") == entry["key"] and prev.get("status") == "complete" and _outputs_intact(w, prev):
                    entry["outputs"] = prev["outputs"]
                    executed = False
                else:
                    stage.run(cfg, w)
                    entry["outputs"] = _digests({rel: w / rel for rel in stage.outputs(cfg)})
                entry["status"] = "complete"
            except Exception as exc:  # recorded, then downstream stages are marked not-run
                log.error("stage %s failed: %s", stage.name, exc)
                entry["status"] = "failed"
                entry["error"] = f"{type(exc).__name__}: {exc}"
            run_log["stages"].append(
                {"name": stage.name, "executed": executed, "seconds": round(time.perf_counter() - t0, 3)}
            )
        status[stage.name] = entry["status"]
        entries.append(entry)

    manifest = {"tool": "proxyprobe", "version": __version__, "stages": entries}
    _write_json(manifest, manifest_path)
    _write_json(run_log, w / "run_log.json")
    return RunResult(manifest, run_log)


def _outputs_intact(w: Path, prev: dict) -> bool:
    for rel, digest in prev.get("outputs", {}).items():
        p = w / rel
        if not p.exists() or file_digest(p) != digest:
            return False
    return True
