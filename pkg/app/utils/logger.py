"""
Logger utility for the GuideTouch simulation toolkit.
Provides centralized, named loggers shared by every module.
Result files never pass through here; logs go to the console and an optional
dated log file only.
"""

import logging
import os
from datetime import datetime
from pathlib import Path


LOG_DIR_ENV = "GUIDETOUCH_LOG_DIR"


class GuideTouchLogger:
    """Named logger for the GuideTouch toolkit."""

    _loggers = {}

    def __init__(self, name: str = "GuideTouch", log_dir: str = None):
        """
        Initialize the logger.

        Args:
            name: Logger name
            log_dir: Directory to store log files (defaults to $GUIDETOUCH_LOG_DIR
                or "logs"; an empty string disables file logging)
        """
        if name in GuideTouchLogger._loggers:
            self.logger = GuideTouchLogger._loggers[name]
            return

        if log_dir is None:
            log_dir = os.environ.get(LOG_DIR_ENV, "logs")

        self.logger = logging.getLogger(f"guidetouch.{name}")

        if not self.logger.handlers:
            self.logger.setLevel(logging.DEBUG)
            self.logger.propagate = False

            formatter = logging.Formatter(
                '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
                datefmt='%Y-%m-%d %H:%M:%S'
            )

            # Console only shows WARNING and above so CLI output stays readable
            console_handler = logging.StreamHandler()
            console_handler.setLevel(logging.WARNING)
            console_handler.setFormatter(formatter)
            self.logger.addHandler(console_handler)

            if log_dir:
                try:
                    log_path = Path(log_dir)
                    log_path.mkdir(parents=True, exist_ok=True)
                    log_file = log_path / f"guidetouch_{datetime.now().strftime('%Y%m%d')}.log"
                    file_handler = logging.FileHandler(log_file)
                    file_handler.setLevel(logging.DEBUG)
                    file_handler.setFormatter(formatter)
                    self.logger.addHandler(file_handler)
                except (OSError, PermissionError):
                    # Read-only filesystem: console logging only
                    pass

        GuideTouchLogger._loggers[name] = self.logger

    def debug(self, message: str, exc_info: bool = False):
        """Log debug message."""
        self.logger.debug(message, exc_info=exc_info)

    def info(self, message: str):
        """Log info message."""
        self.logger.info(message)

    def warning(self, message: str):
        """Log warning message."""
        self.logger.warning(message)

    def error(self, message: str, exc_info: bool = False):
        """Log error message."""
        self.logger.error(message, exc_info=exc_info)

    def critical(self, message: str, exc_info: bool = False):
        """Log critical message."""
        self.logger.critical(message, exc_info=exc_info)


def get_logger(name: str = "GuideTouch") -> GuideTouchLogger:
    """
    Get a logger instance.

    Args:
        name: Logger name

    Returns:
        GuideTouchLogger instance
    """
    return GuideTouchLogger(name)
