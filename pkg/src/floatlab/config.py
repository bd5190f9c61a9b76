import os
from dataclasses import dataclass, field
from typing import List
from dotenv import load_dotenv

from src.floatlab.errors import ConfigError

# Load .env if present
load_dotenv()


def getenv_default(name: str, default: str) -> str:
    val = os.getenv(name)
    return val if val not in (None, "") else default


def _as_int(name: str, default: str) -> int:
    raw = getenv_default(name, default)
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{name}: expected an integer, got {raw!r}")


def _as_float(name: str, default: str) -> float:
    raw = getenv_default(name, default)
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{name}: expected a number, got {raw!r}")


@dataclass
class Settings:
    # Paths
    out_dir: str = "runs"

    # Execution
    max_workers: int = 4
    seed: int = 20240601
    log_level: str = "INFO"
    default_formats: List[str] = field(default_factory=lambda: ["csv", "json", "svg"])

    # Numerics
    truncation: float = 40.0


def load_settings() -> Settings:
    formats = [f.strip() for f in getenv_default("FLOATLAB_DEFAULT_FORMATS", "csv,json,svg").split(",") if f.strip()]
    settings = Settings(
        out_dir=getenv_default("FLOATLAB_OUT_DIR", "runs"),
        max_workers=_as_int("FLOATLAB_MAX_WORKERS", "4"),
        seed=_as_int("FLOATLAB_SEED", "20240601"),
        log_level=getenv_default("FLOATLAB_LOG_LEVEL", "INFO").upper(),
        default_formats=formats,
        truncation=_as_float("FLOATLAB_TRUNCATION", "40"),
    )
    if settings.max_workers < 1:
        raise ConfigError("FLOATLAB_MAX_WORKERS: must be >= 1")
    if settings.truncation <= 0:
        raise ConfigError("FLOATLAB_TRUNCATION: must be > 0")
    return settings
