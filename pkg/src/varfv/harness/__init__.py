"""Experiment driver: configs, verification suite, studies, CLI."""

from .config import ConfigError, RunConfig
from .runner import run
from .verify import run_verify

__all__ = ["ConfigError", "RunConfig", "run", "run_verify"]
