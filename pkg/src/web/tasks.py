"""
Asynchronous task helpers for long-running background jobs (evaluate + report).
"""

from __future__ import annotations

import threading
import time
import uuid
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional

from src.config import RunConfig
from src.exceptions import CancelledError, UcanError
from src.logger import get_logger
from src.pipeline import PipelineRunner

logger = get_logger(__name__)

JOB_STAGES = ("evaluate", "report")
FINISHED_STATES = ("completed", "failed", "cancelled")


@dataclass
class JobState:
    """In-memory representation of an asynchronous job."""

    job_id: str
    stages: List[str] = field(default_factory=lambda: list(JOB_STAGES))
    cancel_requested: bool = False
    state: str = "pending"  # pending|running|completed|failed|cancelled
    created_at: float = field(default_factory=time.time)
    started_at: Optional[float] = None
    finished_at: Optional[float] = None
    progress: Dict[str, Any] = field(default_factory=dict)
    result: Optional[Dict[str, Any]] = None
    error: Optional[str] = None
    last_update: float = field(default_factory=time.time)

    def request_cancel(self):
        self.cancel_requested = True
        self.last_update = time.time()

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


_jobs: Dict[str, JobState] = {}
_jobs_lock = threading.Lock()
_JOB_RETENTION_SECONDS = 600


def create_evaluation_job(config: RunConfig, stages: Optional[List[str]] = None,
                          background: bool = True) -> JobState:
    """
    Create and launch an evaluate+report job against the config's output directory.

    Args:
        config: Run configuration whose artifacts the job reads.
        stages: Stage names to run, in order; defaults to evaluate then report.
        background: Run on a daemon thread (False runs inline, for tests).

    Returns:
        JobState for the new job (already registered).
    """
    job = JobState(job_id=uuid.uuid4().hex, stages=list(stages or JOB_STAGES))
    with _jobs_lock:
        _cleanup_jobs_locked()
        _jobs[job.job_id] = job

    if background:
        thread = threading.Thread(target=_run_job, args=(job, config), name=f"eval-job-{job.job_id}",
                                  daemon=True)
        thread.start()
    else:
        _run_job(job, config)
    logger.info("Job %s started (stages=%s, out=%s)", job.job_id, ",".join(job.stages), config.out_dir)
    return job


def get_job(job_id: str) -> Optional[JobState]:
    """Fetch a job by ID (if still retained)."""
    with _jobs_lock:
        job = _jobs.get(job_id)
        if job and job.finished_at and (time.time() - job.finished_at) > _JOB_RETENTION_SECONDS:
            _jobs.pop(job_id, None)
            return None
        return job


def cancel_job(job_id: str) -> bool:
    """Request cancellation; False when the job is unknown or already finished."""
    with _jobs_lock:
        job = _jobs.get(job_id)
        if not job or job.state in FINISHED_STATES:
            return False
        job.request_cancel()
        logger.info("Cancellation requested for job %s", job_id)
        return True


def list_jobs() -> List[JobState]:
    with _jobs_lock:
        return sorted(_jobs.values(), key=lambda j: j.created_at)


def serialize_job(job: JobState) -> Dict[str, Any]:
    with _jobs_lock:
        return job.to_dict()


def _run_job(job: JobState, config: RunConfig):
    """Worker function executed in a background thread."""
    job.state = "running"
    job.started_at = time.time()
    job.last_update = job.started_at

    def on_progress(stage: str, done: int, total: int):
        with _jobs_lock:
            job.progress = {"stage": stage, "done": done, "total": total}
            job.last_update = time.time()

    def check_cancel() -> bool:
        with _jobs_lock:
            return job.cancel_requested

    try:
        runner = PipelineRunner(config, progress_callback=on_progress, cancel_check=check_cancel)
        results = {}
        for stage in job.stages:
            if check_cancel():
                break
            results[stage] = runner.run_stage(stage)
        with _jobs_lock:
            job.result = results
            job.state = "cancelled" if job.cancel_requested else "completed"
            job.finished_at = job.last_update = time.time()
        logger.info("Job %s %s", job.job_id, job.state)
    except CancelledError as exc:
        with _jobs_lock:
            job.state = "cancelled"
            job.error = str(exc)
            job.finished_at = job.last_update = time.time()
        logger.info("Job %s cancelled: %s", job.job_id, exc)
    except UcanError as exc:
        with _jobs_lock:
            job.state = "failed"
            job.error = f"{type(exc).__name__}: {exc}"
            job.finished_at = job.last_update = time.time()
        logger.exception("Job %s failed: %s", job.job_id, exc)
    except Exception as exc:
        with _jobs_lock:
            job.state = "failed"
            job.error = f"Unexpected {type(exc).__name__}: {exc}"
            job.finished_at = job.last_update = time.time()
        logger.exception("Job %s crashed: %s", job.job_id, exc)


def _cleanup_jobs_locked():
    """Remove finished jobs past the retention period (call with lock held)."""
    now = time.time()
    expired = [job_id for job_id, job in _jobs.items()
               if job.finished_at and (now - job.finished_at) > _JOB_RETENTION_SECONDS]
    for job_id in expired:
        _jobs.pop(job_id, None)
