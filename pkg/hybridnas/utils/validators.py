"""
参数验证工具

用于验证配置值、事件字段和基准表数值的合法性
"""

import math
from typing import Any, Sequence, Tuple

from .exceptions import (
    ConfigurationError,
    EventFormatError,
    BenchmarkSchemaError,
    ERROR_CODES,
)


class ConfigValidator:
    """配置值验证器"""

    @staticmethod
    def validate_positive_int(name: str, value: Any) -> int:
        """验证正整数"""
        if isinstance(value, bool) or not isinstance(value, int) or value <= 0:
            raise ConfigurationError(
                f"Invalid {name}: must be a positive integer, got {value!r}",
                ERROR_CODES["INVALID_CONFIG_VALUE"],
                {"key": name, "value": value}
            )
        return value

    @staticmethod
    def validate_non_negative_int(name: str, value: Any) -> int:
        """验证非负整数"""
        if isinstance(value, bool) or not isinstance(value, int) or value < 0:
            raise ConfigurationError(
                f"Invalid {name}: must be a non-negative integer, got {value!r}",
                ERROR_CODES["INVALID_CONFIG_VALUE"],
                {"key": name, "value": value}
            )
        return value

    @staticmethod
    def validate_positive_float(name: str, value: Any) -> float:
        """验证正实数"""
        if isinstance(value, bool) or not isinstance(value, (int, float)) \
                or not math.isfinite(value) or value <= 0:
            raise ConfigurationError(
                f"Invalid {name}: must be a positive number, got {value!r}",
                ERROR_CODES["INVALID_CONFIG_VALUE"],
                {"key": name, "value": value}
            )
        return float(value)

    @staticmethod
    def validate_unit_interval(name: str, value: Any) -> float:
        """验证[0, 1]区间内的实数"""
        if isinstance(value, bool) or not isinstance(value, (int, float)) \
                or not 0.0 <= value <= 1.0:
            raise ConfigurationError(
                f"Invalid {name}: must lie in [0, 1], got {value!r}",
                ERROR_CODES["INVALID_CONFIG_VALUE"],
                {"key": name, "value": value}
            )
        return float(value)

    @staticmethod
    def validate_resolution(height: Any, width: Any) -> Tuple[int, int]:
        """验证输入分辨率（五级步长2下采样，要求被32整除）"""
        for name, value in (("height", height), ("width", width)):
            ConfigValidator.validate_positive_int(name, value)
            if value % 32 != 0:
                raise ConfigurationError(
                    f"Invalid {name}: {value} is not divisible by 32",
                    ERROR_CODES["INVALID_CONFIG_VALUE"],
                    {"key": name, "value": value}
                )
        return height, width

    @staticmethod
    def validate_weights(weights: Sequence[Any]) -> Tuple[float, float, float]:
        """验证代理权重向量W"""
        if len(weights) != 3:
            raise ConfigurationError(
                f"Invalid proxy weights: expected 3 components, got {len(weights)}",
                ERROR_CODES["INVALID_CONFIG_VALUE"],
                {"weights": list(weights)}
            )
        for value in weights:
            if isinstance(value, bool) or not isinstance(value, (int, float)) \
                    or not math.isfinite(value) or value < 0:
                raise ConfigurationError(
                    f"Invalid proxy weight {value!r}: must be a non-negative number",
                    ERROR_CODES["INVALID_CONFIG_VALUE"],
                    {"weights": list(weights)}
                )
        return tuple(float(v) for v in weights)


class EventValidator:
    """事件字段验证器"""

    @staticmethod
    def validate_polarity(p: int, location: str) -> int:
        """验证极性只能为+1或-1"""
        if p not in (1, -1):
            raise EventFormatError(
                f"Invalid polarity {p} at {location}: must be +1 or -1",
                ERROR_CODES["EVENT_INVALID_POLARITY"],
                {"location": location, "polarity": p}
            )
        return p

    @staticmethod
    def validate_field_range(name: str, value: int, upper: int, location: str) -> int:
        """验证字段位于[0, upper)区间"""
        if not 0 <= value < upper:
            raise EventFormatError(
                f"Field {name}={value} out of range [0, {upper}) at {location}",
                ERROR_CODES["EVENT_OUT_OF_BOUNDS"],
                {"location": location, "field": name, "value": value}
            )
        return value


class BenchmarkValidator:
    """基准表数值验证器"""

    @staticmethod
    def validate_map50(value: float, line: int) -> float:
        """验证mAP50位于[0, 1]"""
        if not math.isfinite(value) or not 0.0 <= value <= 1.0:
            raise BenchmarkSchemaError(
                f"map50={value} outside [0, 1] at line {line}",
                ERROR_CODES["BENCHMARK_INVALID_VALUE"],
                {"line": line, "map50": value}
            )
        return value

    @staticmethod
    def validate_count(name: str, value: float, line: int) -> int:
        """验证params/macs为非负整数"""
        if not math.isfinite(value) or value < 0 or value != int(value):
            raise BenchmarkSchemaError(
                f"{name}={value} is not a non-negative integer at line {line}",
                ERROR_CODES["BENCHMARK_INVALID_VALUE"],
                {"line": line, name: value}
            )
        return int(value)
