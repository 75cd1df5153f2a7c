import logging
import os
from pathlib import Path
from typing import Optional

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
DEFAULT_LOG_DIR = Path("data") / "logs"

_configured = False


def setup_logger(level: Optional[str] = None, log_file: Optional[str] = None) -> logging.Logger:
    """Configure the root logger once (console + optional file)"""
    global _configured

    level_name = (level or os.environ.get("TSKO_LOG_LEVEL", "INFO")).upper()
    root = logging.getLogger()
    root.setLevel(getattr(logging, level_name, logging.INFO))

    if _configured:
        return root

    formatter = logging.Formatter(LOG_FORMAT)

    console = logging.StreamHandler()
    console.setFormatter(formatter)
    root.addHandler(console)

    if log_file:
        path = Path(log_file)
        if not path.is_absolute() and path.parent == Path("."):
            path = DEFAULT_LOG_DIR / path
        path.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(path)
        file_handler.setFormatter(formatter)
        root.addHandler(file_handler)

    _configured = True
    return root
