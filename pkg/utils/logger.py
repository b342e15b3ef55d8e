import logging
import os
import sys
from logging.handlers import RotatingFileHandler

from config.settings import LOG_DIR

LOG_FILE = "overtaking.log"


def setup_logger(name: str = "overtaking", level: int = logging.INFO, log_file: str = LOG_FILE):
    """Shared logger for the controllers, the closed loop and the sweep workers.

    Records carry the process name so lines from pooled sweep workers can be
    told apart in the one rotating file. A later call with the same name only
    re-levels the existing handlers.
    """
    os.makedirs(LOG_DIR, exist_ok=True)

    logger = logging.getLogger(name)

    if logger.handlers:
        logger.setLevel(level)
        for handler in logger.handlers:
            handler.setLevel(level)
        return logger

    logger.setLevel(level)

    formatter = logging.Formatter(
        "%(asctime)s | %(levelname)s | %(processName)s | %(name)s | %(message)s",
        "%Y-%m-%d %H:%M:%S"
    )

    # 2MB per file, 3 backups
    file_handler = RotatingFileHandler(
        os.path.join(LOG_DIR, log_file), maxBytes=2_000_000, backupCount=3, encoding="utf-8"
    )
    file_handler.setLevel(level)
    file_handler.setFormatter(formatter)

    console_handler = logging.StreamHandler(sys.stdout)
    try:
        console_handler.stream.reconfigure(encoding='utf-8')
    except Exception:
        pass  # stream without reconfigure()

    console_handler.setLevel(level)
    console_handler.setFormatter(formatter)

    logger.addHandler(file_handler)
    logger.addHandler(console_handler)

    return logger
