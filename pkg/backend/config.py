"""
Spray Metrizer - Settings
=========================

Runtime settings read from METRIZER_* environment variables, with an
optional .env file in the working directory.

Author: Alfred Munga
License: MIT
"""

from functools import lru_cache
from typing import Optional

from dotenv import load_dotenv
from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

load_dotenv()


class Settings(BaseSettings):
    """Process-wide defaults; scenario files override the numeric ones."""

    model_config = SettingsConfigDict(env_prefix="METRIZER_", extra="ignore")

    log_level: str = Field(default="INFO", description="Root logging level")
    log_json: bool = Field(default=False, description="Emit JSON log records")
    log_dir: Optional[str] = Field(default=None, description="Directory for run traces; off when unset")
    default_seed: int = Field(default=20240101, description="Sampling seed when a scenario omits one")
    default_samples: int = Field(default=200, ge=1, description="Sample count when a scenario omits one")
    workers: int = Field(default=1, ge=1, description="Threads for per-sample evaluation")

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v):
        level = v.upper()
        if level not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            raise ValueError(f"Unknown log level '{v}'")
        return level


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    return Settings()
