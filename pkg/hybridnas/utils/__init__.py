"""工具模块"""

from .exceptions import (
    HybridNASException,
    ConfigurationError,
    EventFormatError,
    GenomeParseError,
    ERROR_CODES,
)
from .validators import ConfigValidator, EventValidator, BenchmarkValidator
from .logger import NASLogger, get_logger, set_debug_config

__all__ = [
    "HybridNASException",
    "ConfigurationError",
    "EventFormatError",
    "GenomeParseError",
    "ERROR_CODES",
    "ConfigValidator",
    "EventValidator",
    "BenchmarkValidator",
    "NASLogger",
    "get_logger",
    "set_debug_config",
]
