"""Process settings read from MMFORGE_* environment variables or .env."""

from functools import cache
from pathlib import Path
from typing import Literal

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

LogLevel = Literal["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]


class Settings(BaseSettings):
    """Process-wide knobs that are not part of a run's configuration.

    None of these change numeric results: ``threads`` only spreads MC
    passes, meta-batch tasks and evaluation windows over worker threads,
    and results are always reduced in input order.
    """

    model_config = SettingsConfigDict(
        env_prefix="MMFORGE_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    threads: int = Field(default=1, ge=1)
    log_level: LogLevel = "INFO"
    runs_base_path: Path = Path("runs")

    @field_validator("log_level", mode="before")
    @classmethod
    def _upper_level(cls, value: object) -> object:
        return value.upper() if isinstance(value, str) else value


@cache
def get_settings() -> Settings:
    """Get application settings singleton.

    Returns:
        The application settings instance.
    """
    return Settings()
