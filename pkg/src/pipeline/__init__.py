"""
Pipeline module - stage orchestration shared by the CLI and the web service

This module provides:
- PipelineRunner: runs one stage or the whole sequence against an output directory
- ArtifactPaths: the declared artifact locations under that directory
- STAGES / RUN_STAGES: stage names in execution order
"""

from src.pipeline.artifacts import ArtifactPaths, require
from src.pipeline.runner import RUN_STAGES, STAGES, PipelineRunner

__all__ = [
    "ArtifactPaths",
    "require",
    "RUN_STAGES",
    "STAGES",
    "PipelineRunner",
]
