"""
HybridNAS - 事件相机检测骨干网络的零样本神经架构搜索

主要功能：
- 事件流切窗与四种张量编码（VTEI / MDES / SHIST / TAF）
- 混合骨干（C2f / MaxViT / Mamba / WaveMLP + ConvLSTM）的基因表示与成本模型
- 免训练代理指标（Zen-Score、NTK条件数、MACs、参数量、多样性指数）
- 参数约束下的进化搜索与代理-精度秩相关分析
"""

__version__ = "1.0.0"

from .service import NASService
from .config.run_config import RunConfig
from .utils.exceptions import (
    HybridNASException,
    ConfigurationError,
    InfeasibleConstraintError,
)

__all__ = [
    "NASService",
    "RunConfig",
    "HybridNASException",
    "ConfigurationError",
    "InfeasibleConstraintError",
]
