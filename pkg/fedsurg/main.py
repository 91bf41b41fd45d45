#!/usr/bin/env python3
"""
FedSurg Simulator - Main Entry Point
Sets up logging and environment, then runs the command-line application
"""

import logging
import os
import sys

from dotenv import load_dotenv

from fedsurg.app import FedSurgApp


def setup_logging(level: str = None, log_file: str = None):
    """Configure logging for the application"""
    log_format = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    level = (level or os.getenv('FEDSURG_LOG_LEVEL', 'INFO')).upper()
    log_file = log_file or os.getenv('FEDSURG_LOG_FILE', 'fedsurg.log')

    handlers = [logging.StreamHandler()]
    try:
        handlers.insert(0, logging.FileHandler(log_file, encoding='utf-8'))
    except OSError:
        # read-only working directory: console only
        pass

    logging.basicConfig(level=getattr(logging, level, logging.INFO), format=log_format, handlers=handlers)


def main(argv=None) -> int:
    """Main entry point"""
    load_dotenv()
    setup_logging()
    logger = logging.getLogger(__name__)
    logger.debug("Starting FedSurg simulator...")
    return FedSurgApp().run(argv)


if __name__ == "__main__":
    sys.exit(main())
