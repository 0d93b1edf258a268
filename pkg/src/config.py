import os
from os import getenv
from typing import Optional

from dotenv import load_dotenv

load_dotenv()


def get_env_int(name: str, default: Optional[int] = None) -> Optional[int]:
    value = getenv(name)
    try:
        return int(value)
    except (TypeError, ValueError):
        return default


def get_env_str(name: str, default: str, choices: Optional[tuple] = None) -> str:
    value = (getenv(name) or "").strip()
    if not value:
        return default
    if choices and value not in choices:
        return default
    return value


THREADS: int = max(1, get_env_int("SKELFALL_THREADS", os.cpu_count() or 1))
PRECISION: str = get_env_str("SKELFALL_PRECISION", "float64", ("float64", "float32"))
LOG_LEVEL: str = get_env_str("SKELFALL_LOG_LEVEL", "INFO").upper()
FALL_CLASS: int = get_env_int("SKELFALL_FALL_CLASS", 43)
