"""Background evaluate+report jobs with progress polling and cancellation."""

from __future__ import annotations

from flask import Blueprint, current_app, jsonify, request

from src.logger import get_logger
from src.pipeline import STAGES
from src.web.tasks import JOB_STAGES, cancel_job, create_evaluation_job, get_job, list_jobs, serialize_job

jobs_bp = Blueprint("jobs", __name__)
logger = get_logger(__name__)


@jobs_bp.post("")
def start_job():
    data = request.get_json(silent=True) or {}
    stages = data.get("stages") or list(JOB_STAGES)
    if not isinstance(stages, list) or any(stage not in STAGES for stage in stages):
        return jsonify({"error": "stages must be a list of pipeline stage names", "choices": list(STAGES)}), 400
    job = create_evaluation_job(current_app.config["UCAN_RUN_CONFIG"], stages,
                                background=current_app.config.get("UCAN_BACKGROUND_JOBS", True))
    return jsonify(serialize_job(job)), 202


@jobs_bp.get("")
def all_jobs():
    return jsonify([serialize_job(job) for job in list_jobs()])


@jobs_bp.get("/<job_id>")
def job_status(job_id: str):
    job = get_job(job_id)
    if job is None:
        return jsonify({"error": f"Unknown job '{job_id}'"}), 404
    return jsonify(serialize_job(job))


@jobs_bp.post("/<job_id>/cancel")
def cancel(job_id: str):
    if not cancel_job(job_id):
        logger.debug("Cancel ignored for job %s", job_id)
        return jsonify({"error": f"Job '{job_id}' is unknown or already finished"}), 409
    return jsonify({"job_id": job_id, "cancel_requested": True})
