"""Generate a seeded corpus, run the whole pipeline on it and summarize the headline numbers.

    python scripts/run_desk_study.py --out /tmp/desk [--seed 1] [--workers 1]
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

from proxyprobe import synth
from proxyprobe.pipeline import RunConfig, run_pipeline


def summarize(run_dir: Path) -> dict:
    score = json.loads((run_dir / "reports/detection_score.json").read_text())
    with open(run_dir / "patterns.csv") as fh:
        patterns = list(csv.DictReader(fh))
    with open(run_dir / "classes.csv") as fh:
        classes = list(csv.DictReader(fh))
    kinds: dict = {}
    purposes: dict = {}
    for r in classes:
        kinds[r["impl_kind"]] = kinds.get(r["impl_kind"], 0) + 1
        purposes[r["purpose"]] = purposes.get(r["purpose"], 0) + 1
    return {
        "detection": {"confusion": score["confusion"], "proxy": score["proxy"], "active_recall": score["active_recall"]},
        "patterns": [(p["signature"], p["style"], int(p["proxy_count"])) for p in patterns],
        "impl_kinds": dict(sorted(kinds.items())),
        "purposes": dict(sorted(purposes.items())),
        "activity": json.loads((run_dir / "reports/activity.json").read_text()),
    }


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, required=True)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args(argv)

    spec = synth.FixtureSpec(seed=args.seed)
    synth.gen_fixture(spec, args.out)
    cfg = RunConfig.load(args.out / "run.conf")
    cfg.workers = args.workers
    t0 = time.perf_counter()
    result = run_pipeline(cfg, force=True)
    elapsed = time.perf_counter() - t0
    for s in result.manifest["stages"]:
        print(f"{s['name']:<9} {s['status']}")
    if not result.ok:
        return 2
    summary = summarize(cfg.out)
    summary["seconds"] = round(elapsed, 2)
    json.dump(summary, sys.stdout, indent=2)
    print()
    return 0


if __name__ == "__main__":
    sys.exit(main())
