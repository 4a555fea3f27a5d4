"""Logging setup"""

import logging
from typing import Optional

from rtep.core.config import settings

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def configure_logging(level: Optional[str] = None) -> None:
    """Configure root logging once from RTEP_LOG or an explicit level"""
    name = (level or settings.log_level).upper()
    numeric = getattr(logging, name, None)
    if not isinstance(numeric, int):
        numeric = logging.INFO
    logging.basicConfig(level=numeric, format=LOG_FORMAT, force=True)
    logging.getLogger(__name__).debug(f"Logging configured at {logging.getLevelName(numeric)}")
