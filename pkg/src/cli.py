"""
Command-line surface.

    python run.py <command> [--config PATH] [--seed N] [--out DIR]

Commands are the pipeline stages (gen-data, train-backbone, train-aux,
select-layers, build-detector, attack, evaluate, report, bench), `run` for
the whole sequence, and `serve` for the HTTP report service.

Exit codes: 0 success, 2 config error, 3 data or artifact error,
4 solver convergence error, 1 any other failure.
"""

import argparse
import json
import sys
from typing import List, Optional

from src.__version__ import __app_name__, __version__
from src.config import load_config
from src.exceptions import UcanError
from src.logger import get_logger
from src.pipeline import STAGES, PipelineRunner

logger = get_logger(__name__)

DEFAULT_HOST = "127.0.0.1"
DEFAULT_PORT = 5500

STAGE_HELP = {
    "gen-data": "generate (or ingest) the dataset and write the splits",
    "train-backbone": "train and freeze the classifier",
    "train-aux": "train the auxiliary ArcFace blocks",
    "select-layers": "score aux blocks on validation data and select layers",
    "build-detector": "fit DKNN/DNR over raw and refined embeddings, plus SAD",
    "attack": "generate PGD, C&W and adaptive adversarial batches",
    "evaluate": "score every detector against every batch",
    "report": "verify cells against raw scores, write curves and plots",
    "bench": "parameter overhead and per-batch latency",
}


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", "-c", default=None, help="run configuration file (INI)")
    parser.add_argument("--seed", type=int, default=None, help="override [run] seed")
    parser.add_argument("--out", "-o", default=None, help="override the output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=__app_name__,
                                     description="Unsupervised adversarial detection with auxiliary ArcFace heads")
    parser.add_argument("--version", action="version", version=f"{__app_name__} {__version__}")
    commands = parser.add_subparsers(dest="command", metavar="command", required=True)

    for stage in STAGES:
        _add_common(commands.add_parser(stage, help=STAGE_HELP[stage]))
    _add_common(commands.add_parser("run", help="run every stage from gen-data to report"))

    serve = commands.add_parser("serve", help="serve report views and evaluation jobs over HTTP")
    _add_common(serve)
    serve.add_argument("--host", default=DEFAULT_HOST, help="bind address (default: localhost only)")
    serve.add_argument("--port", type=int, default=DEFAULT_PORT)
    return parser


def _serve(config, host: str, port: int) -> int:
    from src.web import create_app

    app = create_app(config)
    logger.info("Serving reports from %s on http://%s:%s", config.out_dir, host, port)
    app.run(host=host, port=port, debug=False)
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config).with_overrides(seed=args.seed, out_dir=args.out)
        if args.command == "serve":
            return _serve(config, args.host, args.port)
        runner = PipelineRunner(config)
        if args.command == "run":
            summary = runner.run_all()
        else:
            summary = runner.run_stage(args.command)
    except UcanError as e:
        logger.error("%s failed: %s", args.command, e)
        print(json.dumps({"error": e.to_dict()}, sort_keys=True), file=sys.stderr)
        return e.exit_code
    print(json.dumps(summary, indent=2, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
