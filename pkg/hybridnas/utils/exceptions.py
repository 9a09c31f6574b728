"""
HybridNAS模块异常定义

定义了模块中使用的所有自定义异常类和错误码
"""

from typing import Dict, Any


class HybridNASException(Exception):
    """HybridNAS模块基础异常类"""

    def __init__(self, message: str, error_code: int = None, details: Dict[str, Any] = None):
        super().__init__(message)
        self.message = message
        self.error_code = error_code
        self.details = details or {}

    def to_dict(self) -> Dict[str, Any]:
        """转换为字典格式，便于命令行和报告输出"""
        return {
            "error_message": self.message,
            "error_code": self.error_code,
            "details": self.details
        }


class TensorShapeError(HybridNASException):
    """张量形状或参数不匹配异常"""
    pass


class NumericalOverflowError(HybridNASException):
    """前向传播出现非有限值异常（details中包含block名称）"""
    pass


class EventFormatError(HybridNASException):
    """事件文件格式异常（details中包含行号或字节偏移）"""
    pass


class WindowOrderError(HybridNASException):
    """时间窗口乱序异常"""
    pass


class GenomeParseError(HybridNASException):
    """基因串解析异常（details中包含字符位置）"""
    pass


class ConfigurationError(HybridNASException):
    """配置错误异常"""
    pass


class InfeasibleConstraintError(HybridNASException):
    """参数量约束下无法找到可行个体"""
    pass


class BenchmarkSchemaError(HybridNASException):
    """基准表格式异常（details中包含行号）"""
    pass


class ProxyUnavailableError(HybridNASException):
    """代理指标不可用（例如NTK超出参数预算）"""
    pass


# 错误码定义
ERROR_CODES = {
    # 张量相关错误 (1000-1999)
    "TENSOR_SHAPE_MISMATCH": 1001,
    "TENSOR_INVALID_ARGUMENT": 1002,
    "TENSOR_AXIS_OUT_OF_RANGE": 1003,
    "NON_FINITE_ACTIVATION": 1004,

    # 事件相关错误 (2000-2999)
    "EVENT_MALFORMED_ROW": 2001,
    "EVENT_MALFORMED_RECORD": 2002,
    "EVENT_INVALID_POLARITY": 2003,
    "EVENT_OUT_OF_BOUNDS": 2004,
    "EVENT_BAD_HEADER": 2005,
    "WINDOW_OUT_OF_ORDER": 2006,
    "UNKNOWN_EVENT_FORMAT": 2007,

    # 基因相关错误 (3000-3999)
    "GENOME_PARSE_FAILED": 3001,
    "GENOME_INVALID_VALUE": 3002,

    # 配置相关错误 (4000-4999)
    "INVALID_CONFIG_FILE": 4001,
    "UNKNOWN_CONFIG_KEY": 4002,
    "INVALID_CONFIG_VALUE": 4003,

    # 搜索相关错误 (5000-5999)
    "INFEASIBLE_CONSTRAINT": 5001,
    "NTK_UNAVAILABLE": 5002,

    # 统计相关错误 (6000-6999)
    "BENCHMARK_SCHEMA_VIOLATION": 6001,
    "BENCHMARK_DUPLICATE_KEY": 6002,
    "BENCHMARK_INVALID_VALUE": 6003,

    # 通用错误 (9000+)
    "UNKNOWN_ERROR": 9001,
    "PROCESSING_FAILED": 9002,
}
