"""配置模块"""

from .run_config import DEFAULT_CONFIG_PATH, RunConfig, load_run_config

__all__ = ["DEFAULT_CONFIG_PATH", "RunConfig", "load_run_config"]
