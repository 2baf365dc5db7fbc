"""Shapley-gradient slot pricing and day-to-day traffic reallocation."""

from ._core import *  # noqa: F401,F403
from ._core import TardisError, ValidationError, CapacityExceeded, ConfigError

__all__ = [name for name in dir() if not name.startswith("_")]
