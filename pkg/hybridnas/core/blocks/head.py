"""
PANET颈部与YOLOv8检测头的解析成本模型（只计成本，不做前向）

颈部：4个C2f（输出通道为 {8,4,8,16}·stem，单个无残差瓶颈）与2个3×3步长2下采样卷积；
检测头：三个尺度各一组 box / cls 卷积栈，c2 = max(16, P3/4, 4·reg_max)，
c3 = max(P3, min(nc, 100))。
"""

from dataclasses import dataclass
from typing import Tuple

from .base import conv_cost
from .conv import c2f_cost

REG_MAX = 16
NECK_REPEATS = 1


@dataclass(frozen=True)
class HeadCost:
    neck_params: int
    neck_macs: int
    head_params: int
    head_macs: int

    @property
    def params(self) -> int:
        return self.neck_params + self.head_params

    @property
    def macs(self) -> int:
        return self.neck_macs + self.head_macs


def _sum(costs) -> Tuple[int, int]:
    costs = list(costs)
    return sum(p for p, _ in costs), sum(m for _, m in costs)


def neck_cost(c3: int, c4: int, c5: int, panet: Tuple[int, ...], height: int, width: int) -> Tuple[int, int]:
    """
    PANET颈部成本

    Args:
        c3, c4, c5: 骨干P3（第2层输出）、P4（第3层输出）、P5（SPPF输出）通道
        panet: 4个C2f的输出通道
        height, width: 网络输入分辨率
    """
    p3 = (height // 8, width // 8)
    p4 = (height // 16, width // 16)
    p5 = (height // 32, width // 32)
    n1, n2, n3, n4 = panet
    return _sum([
        c2f_cost(c5 + c4, n1, NECK_REPEATS, *p4),
        c2f_cost(n1 + c3, n2, NECK_REPEATS, *p3),
        conv_cost(n2, n2, 3, *p4),
        c2f_cost(n2 + n1, n3, NECK_REPEATS, *p4),
        conv_cost(n3, n3, 3, *p5),
        c2f_cost(n3 + c5, n4, NECK_REPEATS, *p5),
    ])


def detect_cost(channels: Tuple[int, ...], height: int, width: int, num_classes: int = 1) -> Tuple[int, int]:
    """三个尺度（步长8/16/32）的检测分支成本"""
    c2 = max(16, channels[0] // 4, 4 * REG_MAX)
    c3 = max(channels[0], min(num_classes, 100))
    costs = []
    for ch, stride in zip(channels, (8, 16, 32)):
        hw = (height // stride, width // stride)
        costs += [conv_cost(ch, c2, 3, *hw), conv_cost(c2, c2, 3, *hw), conv_cost(c2, 4 * REG_MAX, 1, *hw)]
        costs += [conv_cost(ch, c3, 3, *hw), conv_cost(c3, c3, 3, *hw), conv_cost(c3, num_classes, 1, *hw)]
    return _sum(costs)


def head_cost(c3: int, c4: int, c5: int, panet: Tuple[int, ...], height: int, width: int,
              num_classes: int = 1) -> HeadCost:
    neck_p, neck_m = neck_cost(c3, c4, c5, panet, height, width)
    head_p, head_m = detect_cost((panet[1], panet[2], panet[3]), height, width, num_classes)
    return HeadCost(neck_p, neck_m, head_p, head_m)
