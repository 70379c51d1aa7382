"""
Application settings loaded from the environment (prefix LPS_) and an
optional .env file.
"""
from functools import lru_cache
from typing import Any, Literal

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

from app.models.schemas import SortConfig


class Settings(BaseSettings):
    """Defaults for the sorter, the bench harness and the HTTP service."""
    model_config = SettingsConfigDict(
        env_prefix="LPS_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = "INFO"
    default_seed: int = Field(default=0, ge=0)
    default_runs: int = Field(default=10, ge=1)
    max_http_keys: int = Field(default=1_000_000, ge=1)

    rmi_bucket_count: int = 1024
    tree_bucket_count: int = 256
    rmi_model_count: int = 1000
    min_rmi_input: int = 100_000
    max_duplicate_fraction: float = 0.10
    radix_base_case: int = 4096
    insertion_base_case: int = 16
    block_size: int = 2048
    equality_buckets: bool = True
    monotonic_rmi: bool = True
    forward_rmi: bool = False
    workers: int = 1

    def sort_config(self, **overrides: Any) -> SortConfig:
        """
        Build a validated SortConfig from these settings.

        Args:
            **overrides: SortConfig fields that take precedence (CLI flags, request bodies)

        Returns:
            SortConfig instance
        """
        values = {name: getattr(self, name) for name in SortConfig.model_fields if hasattr(self, name)}
        values["seed"] = self.default_seed
        values.update({key: value for key, value in overrides.items() if value is not None})
        return SortConfig(**values)


@lru_cache
def get_settings() -> Settings:
    return Settings()
