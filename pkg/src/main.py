"""Command-line entry point: ``python -m src.main <command> ...``."""

import sys

from src.cli.commands import main
from src.config.settings import settings
from src.utils.logger import logger

if __name__ == "__main__":
    logger.debug(f"Starting {settings.app_name} v{settings.app_version}")
    sys.exit(main())
