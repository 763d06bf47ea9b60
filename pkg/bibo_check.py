#!/usr/bin/env python3
"""
Batch entry point for BIBO certificates of hyperbolic boundary control systems

    python bibo_check.py certify fixtures/fixtureF.yaml --kmax 12
"""

import argparse
import logging
import sys
from datetime import datetime
from pathlib import Path

# Add the project directory to Python path
project_dir = Path(__file__).parent
sys.path.append(str(project_dir))

from hbcs.cli import load_config, main as cli_main


def setup_logging(log_dir):
    """stderr always, plus a dated log file and a JSON run log when log_dir is set"""
    handlers = [logging.StreamHandler(sys.stderr)]
    run_handler = None
    if log_dir:
        log_dir = Path(log_dir)
        if not log_dir.is_absolute():
            log_dir = project_dir / log_dir
        log_dir.mkdir(exist_ok=True)
        stamp = datetime.now().strftime('%Y%m%d')
        handlers.append(logging.FileHandler(log_dir / f"bibo_check_{stamp}.log"))
        run_handler = logging.FileHandler(log_dir / f"bibo_runs_{stamp}.jsonl")
        run_handler.setFormatter(logging.Formatter('%(message)s'))

    logging.basicConfig(
        level=logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers
    )

    if run_handler is not None:
        runs = logging.getLogger("hbcs.cli.runs")
        runs.setLevel(logging.INFO)
        runs.addHandler(run_handler)


def main():
    """Load configuration, set up logging and dispatch the subcommand"""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=str(project_dir / "config.yaml"))
    known, _ = pre.parse_known_args()

    config = load_config(known.config)
    setup_logging(config.get('log_dir'))

    logger = logging.getLogger(__name__)
    logger.debug(f"Using configuration: {config}")
    return cli_main(sys.argv[1:], settings=config)


if __name__ == "__main__":
    sys.exit(main())
