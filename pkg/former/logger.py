# former/logger.py — OneDF v1
import logging
from pathlib import Path
from typing import Optional

from rich.console import Console
from rich.logging import RichHandler

FILE_FORMAT = "%(asctime)s | %(levelname)-8s | %(module)s:%(lineno)d | %(message)s"

# rich console on stderr
CONSOLE = Console(stderr=True)


def setup_logger(level: int = logging.INFO) -> logging.Logger:
    logger = logging.getLogger("OneDF")
    logger.setLevel(logging.DEBUG)
    logger.propagate = False

    if not logger.handlers:
        ch = RichHandler(console=CONSOLE, markup=True, show_path=False, rich_tracebacks=True)
        ch.setLevel(level)
        ch.setFormatter(logging.Formatter("%(message)s"))
        logger.addHandler(ch)

    return logger


def attach_file_handler(log_file: str, logger: Optional[logging.Logger] = None) -> logging.Handler:
    """Mirror every DEBUG+ record into log_file (one per run directory)."""
    logger = logger or logging.getLogger("OneDF")
    path = Path(log_file)
    path.parent.mkdir(parents=True, exist_ok=True)
    for h in logger.handlers:
        if isinstance(h, logging.FileHandler) and Path(h.baseFilename) == path.resolve():
            return h
    fh = logging.FileHandler(path, encoding="utf-8", mode="a")
    fh.setLevel(logging.DEBUG)
    fh.setFormatter(logging.Formatter(FILE_FORMAT))
    logger.addHandler(fh)
    return fh


def detach_file_handler(handler: logging.Handler) -> None:
    logger = logging.getLogger("OneDF")
    logger.removeHandler(handler)
    handler.close()


log = setup_logger()
