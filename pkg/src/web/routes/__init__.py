"""Route blueprints for the web application."""

from .jobs import jobs_bp
from .reports import reports_bp

__all__ = [
    "jobs_bp",
    "reports_bp",
]
