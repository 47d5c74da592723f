import logging
from pathlib import Path
from typing import Optional

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
LOG_MODES = ("off", "info", "debug")

# Current mode and optional file target; set by set_log_mode()
_log_mode = "info"
_log_file: Optional[Path] = None

# Names of loggers handed out by get_logger
_managed = set()


def _levels(log_mode: str):
    if log_mode == 'debug':
        return logging.DEBUG, logging.DEBUG
    if log_mode == 'off':
        # Higher than CRITICAL disables everything
        return logging.CRITICAL + 1, logging.CRITICAL + 1
    return logging.INFO, logging.INFO


def _sync_handlers(logger: logging.Logger) -> None:
    """Bring one logger's level and handlers in line with the current mode."""
    logger_level, console_level = _levels(_log_mode)
    logger.setLevel(logger_level)
    log_format = logging.Formatter(LOG_FORMAT)

    file_handlers = [h for h in logger.handlers if isinstance(h, logging.FileHandler)]
    want_file = _log_mode != 'off' and _log_file is not None

    # Drop file handlers pointing somewhere else (or all of them when off)
    for handler in file_handlers:
        if not want_file or Path(handler.baseFilename) != _log_file.resolve():
            handler.close()
            logger.removeHandler(handler)
    has_file_handler = any(isinstance(h, logging.FileHandler) for h in logger.handlers)
    if want_file and not has_file_handler:
        _log_file.parent.mkdir(parents=True, exist_ok=True)
        f_handler = logging.FileHandler(_log_file)
        f_handler.setLevel(logging.DEBUG)
        f_handler.setFormatter(log_format)
        logger.addHandler(f_handler)

    console = [h for h in logger.handlers
               if isinstance(h, logging.StreamHandler) and not isinstance(h, logging.FileHandler)]
    if not console:
        c_handler = logging.StreamHandler()
        c_handler.setFormatter(log_format)
        logger.addHandler(c_handler)
        console = [c_handler]
    for handler in console:
        handler.setLevel(console_level)


def set_log_mode(log_mode: str, log_file: Optional[Path] = None) -> None:
    """Switch log mode (off|info|debug) and update every logger created by get_logger."""
    global _log_mode, _log_file
    if log_mode not in LOG_MODES:
        raise ValueError(f"Unknown log mode '{log_mode}', expected one of {LOG_MODES}")
    _log_mode = log_mode
    _log_file = Path(log_file) if log_file is not None else None
    for name in list(_managed):
        _sync_handlers(logging.getLogger(name))


def get_log_mode() -> str:
    return _log_mode


def get_logger(name: str) -> logging.Logger:
    logger = logging.getLogger(name)
    _managed.add(name)
    _sync_handlers(logger)
    return logger
