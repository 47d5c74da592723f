"""Tests for the Flask report views and the evaluation job endpoints."""

import time
import uuid

import numpy as np
import pytest

from src.attacks import AdvBatch
from src.config import build_config
from src.detectors import Detector
from src.evaluation import BatchKey, aux_parameter_counts, evaluate_grid, write_latency, write_report
from src.exceptions import CancelledError
from src.pipeline import ArtifactPaths, PipelineRunner
from src.web import create_app
from src.web.tasks import FINISHED_STATES, cancel_job, create_evaluation_job, get_job


class ThresholdModel:
    frozen = True

    def logits(self, samples):
        m = np.asarray(samples).reshape(len(samples), -1).mean(axis=1)
        return np.stack([1.0 - m, m], axis=1)

    def predict(self, samples):
        return self.logits(samples).argmax(axis=1)


class LogitDetector(Detector):
    name = "logit"

    def __init__(self):
        super().__init__(None)

    def score_features(self, logits, features):
        return np.clip(logits[:, 1], 0.0, 1.0)


def write_stub_report(out_dir):
    rng = np.random.default_rng(0)
    batches = {}
    for seed in (0, 1):
        x = rng.uniform(0.25, 0.35, size=(6, 4))
        success = np.ones(6, dtype=bool)
        batches[BatchKey("pgd", 0.3, seed)] = AdvBatch("pgd", x, x + 0.3, np.zeros(6, dtype=int), success,
                                                       epsilon=0.3 + 1e-12)
    report = evaluate_grid(ThresholdModel(), [LogitDetector()], batches)
    report.overhead = {"aux_params": 1728, "per_layer": aux_parameter_counts([8, 16, 32, 32], 16, 10)}
    return write_report(report, ArtifactPaths(out_dir).report_dir, plots=False)


@pytest.fixture
def config(out_dir):
    return build_config({"run": {"out_dir": str(out_dir)}, "logging": {"mode": "off", "file": "false"}})


@pytest.fixture
def app(config):
    app = create_app(config)
    app.config.update(TESTING=True, UCAN_BACKGROUND_JOBS=False)
    return app


@pytest.fixture
def client(app):
    return app.test_client()


class TestDefaultRoutes:

    def test_health(self, client):
        response = client.get("/health")
        assert response.status_code == 200
        assert response.get_json() == {"status": "ok"}

    def test_index(self, client, out_dir):
        body = client.get("/").get_json()
        assert body["name"] == "ucan-detect"
        assert body["out_dir"] == str(out_dir)

    def test_unknown_route_is_json(self, client):
        response = client.get("/nowhere")
        assert response.status_code == 404
        assert response.get_json() == {"error": "not found"}


class TestReportViews:

    def test_missing_report_is_404(self, client):
        response = client.get("/api/report/summary")
        assert response.status_code == 404
        assert response.get_json()["code"] == "artifact_missing"

    def test_summary(self, client, out_dir):
        write_stub_report(out_dir)
        body = client.get("/api/report/summary").get_json()
        assert body["cells"] == 2 and body["failed"] == 0
        assert body["seeds"] == [0, 1]
        assert body["positives"] == "successful"
        overall = [row for row in body["averages"] if row["attack"] == "all"]
        assert overall[0]["mean_f1"] == 1.0

    def test_cells_and_curve(self, client, out_dir):
        write_stub_report(out_dir)
        cells = client.get("/api/report/cells").get_json()
        assert [c["cell_id"] for c in cells] == ["logit-logits-pgd-eps0.3000-s0", "logit-logits-pgd-eps0.3000-s1"]
        curve = client.get(f"/api/report/cells/{cells[0]['cell_id']}/curve").get_json()
        assert curve["best_f1"] == 1.0
        assert curve["points"]

    def test_unknown_cell(self, client, out_dir):
        write_stub_report(out_dir)
        assert client.get("/api/report/cells/nope/curve").status_code == 404

    def test_averaged_curves(self, client, out_dir):
        write_stub_report(out_dir)
        body = client.get("/api/report/curves").get_json()
        curve = body["logit/logits"]
        assert len(curve["recall"]) == len(curve["precision"]) == 101

    def test_overhead_with_latency(self, client, out_dir):
        write_stub_report(out_dir)
        row = {"name": "backbone", "batch": 8, "iterations": 2, "mean": 0.5, "std": 0.0}
        write_latency(ArtifactPaths(out_dir).latency, [row])
        body = client.get("/api/report/overhead").get_json()
        assert body["overhead"]["aux_params"] == 1728
        assert body["latency"][0]["name"] == "backbone"


class TestJobs:

    def test_rejects_unknown_stages(self, client):
        response = client.post("/api/jobs", json={"stages": ["evaluate", "dance"]})
        assert response.status_code == 400
        assert "report" in response.get_json()["choices"]

    def test_report_job_completes(self, client, out_dir):
        write_stub_report(out_dir)
        response = client.post("/api/jobs", json={"stages": ["report"]})
        assert response.status_code == 202
        job = response.get_json()
        assert job["state"] == "completed"
        assert job["result"]["report"]["cells"] == 2
        assert (ArtifactPaths(out_dir).report_dir / "pr_logit_logits.svg").exists()

        polled = client.get(f"/api/jobs/{job['job_id']}").get_json()
        assert polled["state"] == "completed"
        assert job["job_id"] in [j["job_id"] for j in client.get("/api/jobs").get_json()]

    def test_job_without_artifacts_fails(self, client):
        job = client.post("/api/jobs").get_json()
        assert job["stages"] == ["evaluate", "report"]
        assert job["state"] == "failed"
        assert "ResolutionError" in job["error"]

    def test_finished_job_cannot_be_cancelled(self, client):
        job = client.post("/api/jobs").get_json()
        assert client.post(f"/api/jobs/{job['job_id']}/cancel").status_code == 409

    def test_unknown_job(self, client):
        assert client.get("/api/jobs/unknown").status_code == 404
        assert client.post("/api/jobs/unknown/cancel").status_code == 409


class TestJobRunner:

    def test_unexpected_error_marks_job_failed(self, config, monkeypatch):
        def disk_full(self, stage):
            raise OSError("No space left on device")

        monkeypatch.setattr(PipelineRunner, "run_stage", disk_full)
        job = create_evaluation_job(config, ["report"], background=False)
        assert job.state == "failed"
        assert "OSError" in job.error
        assert job.finished_at is not None
        assert cancel_job(job.job_id) is False

    def test_unexpected_error_in_background_thread(self, config, monkeypatch):
        def corrupt(self, stage):
            raise ValueError("Expecting value: line 1 column 1")

        monkeypatch.setattr(PipelineRunner, "run_stage", corrupt)
        job = create_evaluation_job(config, ["report"], background=True)
        deadline = time.time() + 10
        while get_job(job.job_id).state not in FINISHED_STATES and time.time() < deadline:
            time.sleep(0.01)
        assert get_job(job.job_id).state == "failed"

    def test_cancelled_stage_ends_cancelled(self, config, monkeypatch):
        def cancelled(self, stage):
            raise CancelledError(f"Stage {stage} cancelled")

        monkeypatch.setattr(PipelineRunner, "run_stage", cancelled)
        job = create_evaluation_job(config, ["evaluate", "report"], background=False)
        assert job.state == "cancelled"
        assert job.finished_at is not None

    def test_cancel_request_reaches_running_stage(self, config, monkeypatch):
        job_id = uuid.UUID(int=7).hex
        seen = []

        def stage_that_gets_cancelled(self, stage):
            assert cancel_job(job_id) is True
            seen.append(self.cancel_check())
            raise CancelledError(f"Stage {stage} cancelled")

        monkeypatch.setattr(uuid, "uuid4", lambda: uuid.UUID(int=7))
        monkeypatch.setattr(PipelineRunner, "run_stage", stage_that_gets_cancelled)
        job = create_evaluation_job(config, ["evaluate", "report"], background=False)
        assert seen == [True]
        assert job.state == "cancelled"
        assert job.result is None
