"""Translate hard sentences by bridging from sentences the model already handles well."""

from .core import Bridge, DecisionRecord, GradualTrace, PoolEntry, QeScore, RunReport, SentencePair
from .errors import BridgError, ConfigError, ParseError, UsageError

__version__ = "0.1.0"

__all__ = [
    "Bridge",
    "BridgError",
    "ConfigError",
    "DecisionRecord",
    "GradualTrace",
    "ParseError",
    "PoolEntry",
    "QeScore",
    "RunReport",
    "SentencePair",
    "UsageError",
]
