"""Flask application configuration and blueprint registration."""

from __future__ import annotations

from flask import Flask, jsonify

from src.__version__ import __app_name__, __version__
from src.config import RunConfig
from src.logger import get_logger

from .routes.jobs import jobs_bp
from .routes.reports import reports_bp

logger = get_logger(__name__)


def build_app(config: RunConfig) -> Flask:
    """Create and configure the Flask application."""
    app = Flask(__name__)
    app.config["UCAN_RUN_CONFIG"] = config

    register_blueprints(app)
    register_default_routes(app)
    return app


def register_blueprints(app: Flask) -> None:
    app.register_blueprint(reports_bp, url_prefix="/api/report")
    app.register_blueprint(jobs_bp, url_prefix="/api/jobs")


def register_default_routes(app: Flask) -> None:
    """Register default health and index routes."""

    @app.get("/health")
    def health_check():
        logger.debug("Health check requested")
        return jsonify({"status": "ok"})

    @app.get("/")
    def index():
        config = app.config["UCAN_RUN_CONFIG"]
        return jsonify({"name": __app_name__, "version": __version__, "out_dir": str(config.out_dir)})

    @app.errorhandler(404)
    def not_found(e):
        return jsonify({"error": "not found"}), 404

    @app.errorhandler(500)
    def internal_error(e):
        logger.exception("Internal server error: %s", e)
        return jsonify({"error": "internal server error"}), 500
