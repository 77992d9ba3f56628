# logger_config.py

import os
import sys
import logging
from typing import Optional

from config import LOG_FILE

# Third-party loggers that are chatty at DEBUG.
QUIET_LOGGERS = ("matplotlib", "numexpr", "urllib3")


def setup_logging(level=logging.INFO, log_file: Optional[str] = None):
    """Configures the root logger: one file handler plus stdout."""
    path = log_file or LOG_FILE
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    logging.basicConfig(
        level=level,
        format='%(asctime)s:%(levelname)s:%(name)s:%(message)s',
        handlers=[
            logging.FileHandler(path),
            logging.StreamHandler(sys.stdout)
        ]
    )
    for name in QUIET_LOGGERS:
        logging.getLogger(name).setLevel(logging.WARNING)
