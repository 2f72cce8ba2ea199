import json
import logging
import sys
import time
from contextlib import contextmanager

LOGGER_NAME = "congruence"

logger = logging.getLogger(LOGGER_NAME)


def configure_logging(level: str = "WARNING") -> None:
    """JSON lines on stderr; stdout is reserved for reports."""
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(message)s"))
    logger.handlers[:] = [handler]
    logger.setLevel(level.upper())
    logger.propagate = False


def log_event(event: str, **fields) -> None:
    """Saves a structured event as one JSON line."""
    if not logger.isEnabledFor(logging.INFO):
        return
    log_entry = {"event": event, **fields}
    logger.info(json.dumps(log_entry, sort_keys=True, default=str))


def log_warning(event: str, **fields) -> None:
    logger.warning(json.dumps({"event": event, **fields}, sort_keys=True, default=str))


@contextmanager
def timed(event: str, **fields):
    start_time = time.time()
    try:
        yield
    finally:
        latency = round((time.time() - start_time) * 1000, 2)
        log_event(event, latency_ms=latency, **fields)
