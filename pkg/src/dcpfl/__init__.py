"""Desk-scale simulator for dynamically clustered personalized federated learning."""

from .config import RunConfig
from .runtime import run, RunResult

__all__ = ["RunConfig", "run", "RunResult"]
__version__ = "0.1.0"
