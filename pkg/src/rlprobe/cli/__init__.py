"""Pipeline orchestration: config, manifest and the ``rlprobe`` command."""

from .config import ConfigError, RunConfig, load_config, parse_config
from .main import main

__all__ = ["ConfigError", "RunConfig", "load_config", "main", "parse_config"]
