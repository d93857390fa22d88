"""
Logging Manager for Feedback Classifier Runs
============================================
Provides hierarchical run logging:
- Main run log file fed by every core.* module logger
- Individual phase log files (train, evaluate, ...) organized by date and run name

Structure:
<base>/logs/YYYYMMDD/run_name/main_HHMMSS.log
<base>/logs/YYYYMMDD/run_name/train_HHMMSS.log

Without a base directory the manager is console-only.
"""

import logging
import sys
from datetime import datetime
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Dict, Optional, Union, cast

import pytz

ROOT_LOGGER_NAME = "core"


class LoggingManager:
    """Manages logging for a run and its individual phases"""

    def __init__(self, base_dir: Optional[Path] = None, run_name: str = "feedback",
                 tz: Optional[str] = "UTC", console_level: int = logging.INFO):
        """
        Initialize logging manager

        Args:
            base_dir: Directory that receives logs/ (None = console only)
            run_name: Name of the run folder (e.g., "en_cnn", "es_cnn_gru")
            tz: Timezone name used to compute the date folder (default: 'UTC')
            console_level: Level of the stderr handler
        """
        self.base_dir = Path(base_dir) if base_dir is not None else None
        self.run_name = run_name
        self.console_level = console_level

        try:
            self.tz = pytz.timezone(tz) if isinstance(tz, str) else tz or pytz.utc
        except pytz.UnknownTimeZoneError:
            self.tz = pytz.utc

        now = datetime.now(self.tz)
        self.date_str = now.strftime('%Y%m%d')

        self.run_logs_dir: Optional[Path] = None
        if self.base_dir is not None:
            self.run_logs_dir = self.base_dir / 'logs' / self.date_str / run_name
            self.run_logs_dir.mkdir(parents=True, exist_ok=True)

        self.log_file: Optional[Path] = None
        self.phase_loggers: Dict[str, logging.Logger] = {}
        self.main_logger = self._setup_main_logger()

    def _formatter(self, with_name: bool = False) -> logging.Formatter:
        fmt = '%(asctime)s - [%(name)s] - %(levelname)s - %(message)s' if with_name \
            else '%(asctime)s - %(levelname)s - %(message)s'
        return logging.Formatter(fmt, datefmt='%Y-%m-%d %H:%M:%S')

    def _setup_main_logger(self) -> logging.Logger:
        """Attach handlers to the package logger so every module logger reaches them"""
        logger = logging.getLogger(ROOT_LOGGER_NAME)
        logger.setLevel(logging.DEBUG)
        for handler in list(logger.handlers):
            logger.removeHandler(handler)
            handler.close()
        logger.propagate = False

        # stdout carries predictions
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setLevel(self.console_level)
        console_handler.setFormatter(self._formatter())
        logger.addHandler(console_handler)

        if self.run_logs_dir is not None:
            timestamp = datetime.now(self.tz).strftime('%H%M%S')
            self.log_file = self.run_logs_dir / f"main_{timestamp}.log"
            file_handler = RotatingFileHandler(
                self.log_file,
                maxBytes=10*1024*1024,  # 10MB
                backupCount=5,
                encoding='utf-8'
            )
            file_handler.setLevel(logging.DEBUG)
            file_handler.setFormatter(self._formatter(with_name=True))
            logger.addHandler(file_handler)

            logger.info(f"📝 Main log file: {self.log_file}")
            logger.debug(f"🗂️  Structure: logs/{self.date_str}/{self.run_name}/")

        return logger

    def get_phase_logger(self, phase: str) -> logging.Logger:
        """
        Get or create the logger for one phase of the run

        Args:
            phase: Phase name ("train", "evaluate", ...)

        Returns:
            Logger writing to its own file (or nowhere when console-only)
        """
        if phase in self.phase_loggers:
            return self.phase_loggers[phase]

        timestamp = datetime.now(self.tz).strftime('%H%M%S')
        logger = logging.getLogger(f'{ROOT_LOGGER_NAME}.phase.{phase}.{timestamp}')
        logger.setLevel(logging.DEBUG)
        for handler in list(logger.handlers):
            logger.removeHandler(handler)
            handler.close()

        # Phase lines go to the phase file only
        logger.propagate = False

        if self.run_logs_dir is not None:
            log_filename = self.run_logs_dir / f"{phase}_{timestamp}.log"
            file_handler = RotatingFileHandler(
                log_filename,
                maxBytes=5*1024*1024,  # 5MB
                backupCount=3,
                encoding='utf-8'
            )
            file_handler.setLevel(logging.DEBUG)
            file_handler.setFormatter(self._formatter(with_name=True))
            logger.addHandler(file_handler)
            self.main_logger.debug(f"📄 Created log file for phase {phase}: {log_filename.name}")
        else:
            logger.addHandler(logging.NullHandler())

        self.phase_loggers[phase] = logger
        logger.info(f"=== {self.run_name} / {phase} Log Started ===")
        return logger

    def log_to_both(self, phase: str, level: str, message: str):
        """Log a message to the main log and, if open, the phase log"""
        getattr(self.main_logger, level.lower())(message)
        if phase in self.phase_loggers:
            getattr(self.phase_loggers[phase], level.lower())(message)

    def close_phase_logger(self, phase: str):
        """Close and forget a phase logger"""
        logger = self.phase_loggers.pop(phase, None)
        if logger is None:
            return
        logger.info(f"=== {self.run_name} / {phase} Log Ended ===")
        for handler in logger.handlers[:]:
            handler.close()
            logger.removeHandler(handler)

    def close_all(self):
        """Close all loggers"""
        for phase in list(self.phase_loggers):
            self.close_phase_logger(phase)
        for handler in self.main_logger.handlers[:]:
            handler.close()
            self.main_logger.removeHandler(handler)


# Global instance
_logging_manager: Optional[LoggingManager] = None


def get_logging_manager(run_name: str = "feedback", base_dir: Union[Path, str, None] = None,
                        tz: Optional[str] = "UTC") -> LoggingManager:
    """Get or create the global logging manager instance.

    Args:
        run_name: Run folder name (e.g., 'en_cnn')
        base_dir: Directory that receives logs/ (None = console only)
        tz: Timezone name used to compute the date folder

    Returns:
        LoggingManager: shared logging manager instance
    """
    global _logging_manager
    if _logging_manager is None:
        _logging_manager = LoggingManager(base_dir=Path(base_dir) if base_dir is not None else None,
                                          run_name=run_name, tz=tz)
    return _logging_manager


def get_phase_logger(phase: str) -> logging.Logger:
    """Get a logger for a specific phase"""
    return get_logging_manager().get_phase_logger(phase)


def close_all_loggers():
    """Close all loggers and drop the global manager"""
    global _logging_manager
    if _logging_manager is not None:
        mgr = cast(LoggingManager, _logging_manager)
        mgr.close_all()
        _logging_manager = None
