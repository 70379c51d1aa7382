"""
Logging setup shared by the CLI and the HTTP application.
"""
import logging
from typing import Optional, Union

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(level: Optional[Union[str, int]] = None) -> None:
    """
    Install a single stream handler on the root logger.

    Args:
        level: level name or number; defaults to Settings.log_level
    """
    if level is None:
        from app.config.settings import get_settings

        level = get_settings().log_level
    if isinstance(level, str):
        level = level.upper()
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)
