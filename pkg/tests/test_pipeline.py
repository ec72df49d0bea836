from __future__ import annotations

import csv
import json
import shutil
import time
from pathlib import Path

import pytest

from proxyprobe.pipeline import STAGES, ConfigError, RunConfig, read_kv, run_pipeline

BUNDLED = Path(__file__).resolve().parents[1] / "fixtures" / "desk"


@pytest.fixture
def desk(tmp_path):
    d = tmp_path / "desk"
    shutil.copytree(BUNDLED, d, ignore=shutil.ignore_patterns("run"))
    return d


def _statuses(result):
    return {s["name"]: s["status"] for s in result.manifest["stages"]}


def test_desk_run_green(desk):
    t0 = time.perf_counter()
    result = run_pipeline(RunConfig.load(desk / "run.conf"))
    assert time.perf_counter() - t0 < 60
    assert result.ok
    assert list(_statuses(result)) == list(STAGES)
    assert set(_statuses(result).values()) == {"complete"}
    score = json.loads((desk / "run/reports/detection_score.json").read_text())
    assert score["confusion"] == {"tp": 20, "fp": 0, "fn": 9, "tn": 80}


def test_desk_classes_match_planted(desk):
    run_pipeline(RunConfig.load(desk / "run.conf"))
    truth = json.loads((desk / "truth.json").read_text())["proxies"]
    with open(desk / "run/classes.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 20
    for r in rows:
        planted = truth[r["proxy"]]
        assert r["impl_kind"] == planted["kind"].split("-hardcoded")[0].split("-slot")[0]
        assert r["purpose"] == planted["purpose"]


def test_rerun_skips_every_stage(desk):
    cfg = RunConfig.load(desk / "run.conf")
    first = run_pipeline(cfg)
    second = run_pipeline(cfg)
    assert first.manifest == second.manifest
    assert not any(s["executed"] for s in second.log["stages"])


def test_touched_output_reruns_only_that_stage(desk):
    cfg = RunConfig.load(desk / "run.conf")
    run_pipeline(cfg)
    (desk / "run/classes.csv").write_text("tampered\n")
    again = run_pipeline(cfg)
    executed = {s["name"] for s in again.log["stages"] if s["executed"]}
    assert executed == {"classify"}
    assert (desk / "run/classes.csv").read_text() != "tampered\n"


def test_force_reruns(desk):
    cfg = RunConfig.load(desk / "run.conf")
    run_pipeline(cfg)
    again = run_pipeline(cfg, force=True)
    assert all(s["executed"] for s in again.log["stages"])


def test_corrupt_traces_blocks_downstream(desk):
    with open(desk / "traces.jsonl", "a") as fh:
        fh.write("{not json\n")
    result = run_pipeline(RunConfig.load(desk / "run.conf"))
    st = _statuses(result)
    assert st["ingest"] == "failed"
    assert all(st[s] == "not-run" for s in STAGES[1:])
    assert not result.ok
    ingest = result.manifest["stages"][0]
    assert ":" in ingest["error"]


def test_manifest_has_no_timings(desk):
    run_pipeline(RunConfig.load(desk / "run.conf"))
    text = (desk / "run/manifest.json").read_text()
    assert "seconds" not in text and "workers" not in text
    assert "seconds" in (desk / "run/run_log.json").read_text()


def test_state_optional(desk):
    conf = desk / "run.conf"
    conf.write_text("\n".join(l for l in conf.read_text().splitlines() if not l.startswith("state")) + "\n")
    result = run_pipeline(RunConfig.load(conf))
    assert _statuses(result)["classify"] == "not-configured"
    assert result.ok


def test_config_paths_relative_to_file(desk):
    cfg = RunConfig.load(desk / "run.conf")
    assert cfg.traces == desk / "traces.jsonl" and cfg.out == desk / "run"


@pytest.mark.parametrize(
    "text, needle",
    [
        ("traces = a\ncontracts = b\n", "out"),
        ("traces = a\ncontracts = b\nout = c\nflavour = x\n", "unknown"),
        ("traces = a\ncontracts = b\nout = c\nworkers = many\n", "many"),
    ],
)
def test_config_errors(tmp_path, text, needle):
    p = tmp_path / "bad.conf"
    p.write_text(text)
    with pytest.raises(ConfigError, match=needle):
        RunConfig.load(p)


def test_read_kv_comments_and_errors(tmp_path):
    p = tmp_path / "x.conf"
    p.write_text("# comment\n\na = 1\nb=two = 2\n")
    assert read_kv(p) == {"a": "1", "b": "two = 2"}
    p.write_text("novalue\n")
    with pytest.raises(ConfigError, match=":1:"):
        read_kv(p)
