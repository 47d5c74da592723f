"""Seeded end-to-end runs of the whole pipeline on a tiny synthetic task."""

import pytest

from src.config import build_config
from src.evaluation import load_report, read_latency, verify_report
from src.model import load_model
from src.pipeline import PipelineRunner
from src.storage import read_json
from src.ucan import load_aux_blocks

pytestmark = pytest.mark.slow

TINY_RUN = {
    "logging": {"mode": "off", "file": "false"},
    "data": {"classes": "3", "per_class": "16", "image_size": "8", "separation": "1.5"},
    "backbone": {"widths": "4,8", "epochs": "3", "batch_size": "8"},
    "aux": {"d_prime": "4", "scale": "16", "margin": "0.3", "epochs": "2", "batch_size": "8"},
    "selection": {"policy": "top", "value": "2"},
    "attack": {"epsilons": "0.1", "steps": "3", "ada_steps": "3", "ada_refresh": "2", "ada_m": "3",
               "cw_lr": "0.05", "chunk_size": "4"},
    "detector": {"k": "3", "svm_max_iter": "20000"},
    "eval": {"seeds": "0,1", "positives": "all", "test_limit": "0"},
    "bench": {"batch": "4", "iterations": "2"},
}


def tiny_config(out_dir, seed=11):
    overrides = {section: dict(keys) for section, keys in TINY_RUN.items()}
    overrides["run"] = {"seed": str(seed), "out_dir": str(out_dir)}
    return build_config(overrides)


@pytest.fixture(scope="module")
def finished_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run_a")
    runner = PipelineRunner(tiny_config(out))
    summaries = runner.run_all()
    summaries["bench"] = runner.run_stage("bench")
    return out, summaries


def test_every_stage_reports(finished_run):
    _, summaries = finished_run
    assert list(summaries) == ["gen-data", "train-backbone", "train-aux", "select-layers", "build-detector",
                               "attack", "evaluate", "report", "bench"]
    assert len(summaries["select-layers"]["layers"]) == 2
    assert set(summaries["build-detector"]["detectors"]) == {
        "dknn/raw", "dnr/raw", "dknn/ucan", "dnr/ucan", "sad/logits"}


def test_backbone_stays_frozen_through_aux_training(finished_run):
    out, _ = finished_run
    model = load_model(out / "models" / "backbone.ucan")
    assert model.frozen
    blocks = load_aux_blocks(out / "models" / "aux.ucan")
    assert [b.channels for b in blocks] == list(model.spec.tap_channels())
    log = read_json(out / "models" / "aux_log.json")
    assert len(log["records"]) == 2
    assert "tcs" in log["initial"]


def test_report_verifies(finished_run):
    out, summaries = finished_run
    report_dir = out / "report"
    assert verify_report(report_dir) == []
    report = load_report(report_dir)
    assert report.seeds == [0, 1]
    methods = {cell.method for cell in report.cells}
    assert {"dknn/ucan", "dknn/raw", "dnr/ucan", "dnr/raw", "sad/logits"} <= methods
    adaptive = {cell.method for cell in report.cells if cell.attack == "ada_dknn"}
    assert adaptive == {"dknn/raw", "dknn/ucan", "dnr/raw", "dnr/ucan"}
    for cell in report.ok_cells():
        assert 0.0 <= cell.best_f1 <= 1.0
    assert report.overhead["aux_params"] > 0
    assert summaries["report"]["cells"] == len(report.cells)


def test_bench_outputs(finished_run):
    out, _ = finished_run
    rows = read_latency(out / "bench" / "latency.csv")
    assert "backbone" in {row["name"] for row in rows}
    assert (out / "bench" / "environment.json").exists()


def test_rerun_is_byte_identical(finished_run, tmp_path):
    first, _ = finished_run
    PipelineRunner(tiny_config(tmp_path)).run_all()
    for name in ("cells.csv", "averages.csv", "report.json", "averaged_curves.csv"):
        assert (tmp_path / "report" / name).read_bytes() == (first / "report" / name).read_bytes()
