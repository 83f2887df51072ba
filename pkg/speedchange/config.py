"""
Runtime settings
Values come from the environment, optionally seeded from a .env file
"""

import logging
import os
from functools import lru_cache
from pathlib import Path

import psutil
from dotenv import load_dotenv
from pydantic import BaseModel, Field, field_validator

logger = logging.getLogger(__name__)

# Numerical defaults shared across modules
SOLVER_TOLERANCE = 1e-8
SOLVER_MAX_ITER = 100_000
ZERO_THRESHOLD = 1e-10
COEFFICIENT_CUTOFF = 1e-14
DEFAULT_LAMBDA0 = 1e-2
DEFAULT_LAMBDA_RATIO = 10 ** (-0.25)
DEFAULT_LAMBDA_COUNT = 25
BLOCK_FACTOR = 10


def _default_threads() -> int:
    physical = psutil.cpu_count(logical=False)
    return int(physical or psutil.cpu_count() or 1)


class Settings(BaseModel):
    """Process-wide configuration"""
    threads: int = Field(default_factory=_default_threads, description="Worker count for replica and lambda fan-out")
    output_dir: Path = Field(Path("reports"), description="Default directory for CLI artifacts")
    log_level: str = Field("INFO", description="Logging level name")
    seed: int = Field(20240601, description="Default base seed for simulations")

    @field_validator("threads")
    @classmethod
    def _positive_threads(cls, value: int) -> int:
        if value < 1:
            raise ValueError("threads must be at least 1")
        return value

    @field_validator("log_level")
    @classmethod
    def _known_level(cls, value: str) -> str:
        level = value.upper()
        if level not in logging.getLevelNamesMapping():
            raise ValueError(f"unknown log level {value!r}")
        return level


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Load settings once per process"""
    load_dotenv()
    raw = {
        "threads": os.getenv("SPEEDCHANGE_THREADS"),
        "output_dir": os.getenv("SPEEDCHANGE_OUTPUT"),
        "log_level": os.getenv("SPEEDCHANGE_LOG_LEVEL"),
        "seed": os.getenv("SPEEDCHANGE_SEED"),
    }
    settings = Settings(**{key: value for key, value in raw.items() if value is not None})
    logger.debug(f"Settings loaded: {settings.model_dump()}")
    return settings


def reset_settings() -> None:
    """Drop the cached settings (used by tests)"""
    get_settings.cache_clear()
