"""Web application package: read-only report views and evaluation jobs."""

from typing import Optional

from flask import Flask

from src.config import RunConfig, load_config


def create_app(config: Optional[RunConfig] = None) -> Flask:
    """Application factory for the HTTP service."""
    from .app import build_app  # Import here to avoid circular imports

    return build_app(config or load_config())


__all__ = ["create_app"]
