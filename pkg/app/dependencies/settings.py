"""
Settings dependencies for FastAPI routes.
"""
from fastapi import Depends

from app.config.settings import Settings, get_settings
from app.models.schemas import SortConfig


def get_sort_config(settings: Settings = Depends(get_settings)) -> SortConfig:
    """
    Default SortConfig for a request.

    Args:
        settings: application settings

    Returns:
        SortConfig built from the settings
    """
    return settings.sort_config()
