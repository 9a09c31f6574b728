"""
运行配置管理

扁平 key=value 文本配置（# 开头为注释），由 python-dotenv 解析；
值按默认值的类型转换，未知键直接拒绝。
"""

import math
import os
from typing import Any, Dict, Optional, Tuple

from dotenv import dotenv_values

from ..core.events import Encoding
from ..core.proxies import ScoreConfig
from ..core.search import SearchConfig
from ..utils.exceptions import ERROR_CODES, ConfigurationError, HybridNASException

DEFAULT_CONFIG_PATH = os.path.join(os.path.dirname(os.path.dirname(__file__)), "default.cfg")

# 键 -> 取值类型；默认值只来自 default.cfg
SETTING_TYPES: Dict[str, type] = {
    # 搜索
    "population": int,
    "iterations": int,
    "max_params": int,
    "weight_zen": float,
    "weight_macs": float,
    "weight_ntk": float,
    "diversity_alpha": float,
    "freeze_encoding": bool,
    "encoding": str,
    "seed": int,
    "top_k": int,
    "max_init_attempts": int,
    "max_mutation_attempts": int,
    "jobs": int,
    # 打分
    "batch": int,
    "height": int,
    "width": int,
    "noise_alpha": float,
    "zen_seeds": int,
    "ntk_probe_count": int,
    "ntk_fd_step": float,
    "ntk_max_params": int,
    "ntk_reciprocal": bool,
    "bins": int,
    "num_classes": int,
    # 编码
    "sensor_width": int,
    "sensor_height": int,
    "window_us": int,
    # 路径
    "genomes": str,
    "benchmark": str,
    "events": str,
}

DEBUG_TYPES: Dict[str, type] = {
    "log_enabled": bool,
    "log_level": str,
    "log_to_console": bool,
    "log_to_file": bool,
    "log_file": str,
    "log_processing_steps": bool,
}

_TRUE = {"true", "1", "yes", "on"}
_FALSE = {"false", "0", "no", "off"}


class RunConfig:
    """运行配置管理器"""

    def __init__(self, config_path: Optional[str] = None):
        """
        初始化配置管理器

        Args:
            config_path: 配置文件路径，如果为None则只使用默认配置
        """
        self.settings: Dict[str, Any] = {}
        self.debug_config: Dict[str, Any] = {}

        self._load_default_config()

        if config_path:
            self.load_config(config_path)

    def _load_default_config(self):
        """从包内 default.cfg 加载默认配置，缺键或多键都视为安装损坏"""
        values = self._read_file(DEFAULT_CONFIG_PATH)
        expected = set(SETTING_TYPES) | set(DEBUG_TYPES)
        missing = sorted(expected - set(values))
        unknown = sorted(set(values) - expected)
        if missing or unknown:
            raise ConfigurationError(
                f"Packaged defaults {DEFAULT_CONFIG_PATH} do not match the known keys",
                ERROR_CODES["INVALID_CONFIG_FILE"],
                {"path": DEFAULT_CONFIG_PATH, "missing": missing, "unknown": unknown}
            )
        self.settings = {key: self._coerce(key, values[key], kind) for key, kind in SETTING_TYPES.items()}
        self.debug_config = {key: self._coerce(key, values[key], kind) for key, kind in DEBUG_TYPES.items()}

    @staticmethod
    def _read_file(config_path: str) -> Dict[str, str]:
        if not os.path.exists(config_path):
            raise ConfigurationError(
                f"Configuration file not found: {config_path}",
                ERROR_CODES["INVALID_CONFIG_FILE"],
                {"path": config_path}
            )

        try:
            values = dotenv_values(config_path, interpolate=False)
        except Exception as e:
            raise ConfigurationError(
                f"Error loading configuration: {str(e)}",
                ERROR_CODES["INVALID_CONFIG_FILE"],
                {"path": config_path}
            )

        for key, raw in values.items():
            if raw is None:
                raise ConfigurationError(
                    f"Configuration key {key!r} has no value in {config_path}",
                    ERROR_CODES["INVALID_CONFIG_FILE"],
                    {"key": key, "path": config_path}
                )
        return dict(values)

    def _known(self, key: str) -> Tuple[Dict[str, Any], type]:
        if key in SETTING_TYPES:
            return self.settings, SETTING_TYPES[key]
        if key in DEBUG_TYPES:
            return self.debug_config, DEBUG_TYPES[key]
        raise ConfigurationError(
            f"Unknown configuration key: {key!r}",
            ERROR_CODES["UNKNOWN_CONFIG_KEY"],
            {"key": key}
        )

    @staticmethod
    def _coerce(key: str, raw: Any, kind: type) -> Any:
        """按键的声明类型转换"""
        if not isinstance(raw, str):
            raw_text = str(raw)
        else:
            raw_text = raw.strip()
        try:
            if kind is bool:
                if isinstance(raw, bool):
                    return raw
                lowered = raw_text.lower()
                if lowered in _TRUE:
                    return True
                if lowered in _FALSE:
                    return False
                raise ValueError(raw_text)
            if kind is int:
                if isinstance(raw, int) and not isinstance(raw, bool):
                    return raw
                try:
                    return int(raw_text)
                except ValueError:
                    value = float(raw_text)
                    if not math.isfinite(value) or not value.is_integer():
                        raise
                    return int(value)
            if kind is float:
                return float(raw_text)
            return raw_text
        except ValueError:
            raise ConfigurationError(
                f"Invalid value for {key}: {raw_text!r} is not a valid {kind.__name__}",
                ERROR_CODES["INVALID_CONFIG_VALUE"],
                {"key": key, "value": raw_text}
            )

    def load_config(self, config_path: str):
        """
        从 key=value 文件加载配置，覆盖默认值

        Args:
            config_path: 配置文件路径
        """
        for key, raw in self._read_file(config_path).items():
            self.update_setting(key, raw)

        # 提前暴露越界值
        self.validate()

    def get_setting(self, key: str, default: Any = None) -> Any:
        """
        获取配置设置

        Args:
            key: 设置键名
            default: 未知键时返回的默认值
        """
        if key in self.settings:
            return self.settings[key]
        return self.debug_config.get(key, default)

    def update_setting(self, key: str, value: Any):
        """
        更新配置设置（未知键拒绝，值按默认类型转换）

        Args:
            key: 设置键名
            value: 设置值（字符串或目标类型）
        """
        target, kind = self._known(key)
        target[key] = self._coerce(key, value, kind)

    def validate(self):
        """构造打分与搜索配置以校验全部取值"""
        Encoding.from_name(self.settings["encoding"])
        search = self.search_config()
        if not 1 <= self.settings["top_k"] <= search.population:
            raise ConfigurationError(
                f"Invalid top_k: must lie in [1, population={search.population}], got {self.settings['top_k']}",
                ERROR_CODES["INVALID_CONFIG_VALUE"],
                {"key": "top_k", "value": self.settings["top_k"]}
            )

    def score_config(self) -> ScoreConfig:
        s = self.settings
        return ScoreConfig(
            batch=s["batch"],
            height=s["height"],
            width=s["width"],
            noise_alpha=s["noise_alpha"],
            seeds=tuple(s["seed"] + i for i in range(s["zen_seeds"])),
            graph_seed=s["seed"],
            bins=s["bins"],
            num_classes=s["num_classes"],
            ntk_probe_count=s["ntk_probe_count"],
            ntk_fd_step=s["ntk_fd_step"],
            ntk_max_params=s["ntk_max_params"],
            ntk_reciprocal=s["ntk_reciprocal"],
        )

    def search_config(self) -> SearchConfig:
        s = self.settings
        return SearchConfig(
            population=s["population"],
            iterations=s["iterations"],
            max_params=s["max_params"],
            weights=(s["weight_zen"], s["weight_macs"], s["weight_ntk"]),
            diversity_alpha=s["diversity_alpha"],
            freeze_encoding=s["freeze_encoding"],
            encoding=Encoding.from_name(s["encoding"]),
            seed=s["seed"],
            score=self.score_config(),
            jobs=s["jobs"],
            max_init_attempts=s["max_init_attempts"],
            max_mutation_attempts=s["max_mutation_attempts"],
        )

    def get_debug_config(self) -> Dict[str, Any]:
        """转换为日志器使用的debug配置"""
        d = self.debug_config
        return {
            "enabled": d["log_enabled"],
            "log_level": d["log_level"],
            "log_to_console": d["log_to_console"],
            "log_to_file": d["log_to_file"],
            "log_file": d["log_file"],
            "log_processing_steps": d["log_processing_steps"],
        }

    def is_debug_enabled(self) -> bool:
        return bool(self.debug_config.get("log_enabled", False))

    @staticmethod
    def _format(value: Any) -> str:
        if isinstance(value, bool):
            return "true" if value else "false"
        if isinstance(value, float):
            return repr(value)
        return str(value)

    def dumps(self) -> str:
        lines = [f"{key}={self._format(value)}" for key, value in self.settings.items()]
        lines += [f"{key}={self._format(value)}" for key, value in self.debug_config.items()]
        return "\n".join(lines) + "\n"

    def save_config(self, config_path: str):
        """
        保存完整解析后的配置

        Args:
            config_path: 配置文件保存路径
        """
        try:
            directory = os.path.dirname(config_path)
            if directory:
                os.makedirs(directory, exist_ok=True)
            with open(config_path, "w", encoding="utf-8") as f:
                f.write(self.dumps())
        except OSError as e:
            raise ConfigurationError(
                f"Error saving configuration: {str(e)}",
                ERROR_CODES["INVALID_CONFIG_FILE"],
                {"path": config_path}
            )

    def to_dict(self) -> Dict[str, Any]:
        return {"settings": dict(self.settings), "debug": dict(self.debug_config)}


def load_run_config(config_path: Optional[str] = None) -> RunConfig:
    """加载配置；配置错误之外的异常统一包装为ConfigurationError"""
    try:
        return RunConfig(config_path)
    except HybridNASException as e:
        if isinstance(e, ConfigurationError):
            raise
        raise ConfigurationError(e.message, ERROR_CODES["INVALID_CONFIG_VALUE"], e.details)
