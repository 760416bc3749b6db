import logging
import sys
from pathlib import Path

from mmforge.settings import get_settings

CONSOLE_FORMAT = "%(levelname)s %(name)s: %(message)s"
FILE_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

# numpy floating-point RuntimeWarnings arrive through this logger.
_WARNINGS_LOGGER = "py.warnings"


def _reset(logger: logging.Logger) -> None:
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()


def configure_logging(
    log_file: Path | None = None,
    verbose: bool = False,
    level: int | str | None = None,
) -> None:
    """Configure the "mmforge" logger for one command invocation.

    The console gets ``level``; the optional log file always records DEBUG
    so a run directory can keep the full epoch-by-epoch trace. Python
    warnings are captured into the same handlers. Calling it again replaces
    the handlers of the previous call.

    Args:
        log_file: Path to the log file.
        verbose: fast way to set logging to DEBUG.
        level: logging level. Defaults to MMFORGE_LOG_LEVEL.
    """
    logger = logging.getLogger("mmforge")
    warnings_logger = logging.getLogger(_WARNINGS_LOGGER)

    if level is None:
        level = get_settings().log_level
    if verbose:
        level = logging.DEBUG

    _reset(logger)
    _reset(warnings_logger)
    logging.captureWarnings(True)

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(level)
    console_handler.setFormatter(logging.Formatter(CONSOLE_FORMAT))
    handlers: list[logging.Handler] = [console_handler]

    if log_file:
        log_file.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_file, encoding="utf-8")
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(logging.Formatter(FILE_FORMAT))
        handlers.append(file_handler)

    logger.setLevel(logging.DEBUG if log_file else level)
    for handler in handlers:
        logger.addHandler(handler)
        warnings_logger.addHandler(handler)

    if log_file:
        logger.info(f"Logging to file: {log_file}")
