"""
WaveMLP块

每次重复：BN → PATM（H向与W向两支相位感知token混合 + 通道支路，求和后1×1投影）→ 残差
→ BN → 通道MLP(×4, SiLU) → 残差。
PATM把token看作波：x·cos(φ) 与 x·sin(φ) 交错后做分组卷积（每组一对实部/虚部），
核长5、步长1、填充2，φ为逐通道可学习相位。
"""

from typing import Optional, Tuple

import numpy as np

from .base import Block, BlockSpec, ForwardTrace, ParamFactory
from .. import tensorcore as tc
from ..tensorcore import Tensor

TOKEN_KERNEL = 5
TOKEN_PAD = 2
MLP_RATIO = 4


def wave_features(x: Tensor, phase: Tensor) -> Tensor:
    """[B,C,H,W] -> [B,2C,H,W]，通道交错排列 (x·cosφ, x·sinφ)"""
    b, c, h, w = x.shape
    phi = phase.reshape(1, c, 1, 1)
    waves = np.stack([x * np.cos(phi), x * np.sin(phi)], axis=2)
    return np.ascontiguousarray(waves.reshape(b, 2 * c, h, w), dtype=np.float32)


class WaveMLPBlock(Block):

    @classmethod
    def init_params(cls, spec: BlockSpec, factory: ParamFactory):
        c = spec.cout
        for r in range(spec.repeats):
            p = f"r{r}"
            factory.conv(f"{p}.fc_h", c, c, 1)
            factory.conv(f"{p}.fc_w", c, c, 1)
            factory.conv(f"{p}.fc_c", c, c, 1)
            factory.gaussian(f"{p}.phase_h", (c,), 1)
            factory.gaussian(f"{p}.phase_w", (c,), 1)
            factory.conv(f"{p}.tfc_h", c, 2, TOKEN_KERNEL, 1)
            factory.conv(f"{p}.tfc_w", c, 2, 1, TOKEN_KERNEL)
            factory.conv(f"{p}.proj", c, c, 1)
            factory.conv(f"{p}.mlp.fc1", MLP_RATIO * c, c, 1)
            factory.conv(f"{p}.mlp.fc2", c, MLP_RATIO * c, 1)

    @staticmethod
    def analytic_cost(spec: BlockSpec) -> Tuple[int, int]:
        c, hw = spec.cout, spec.h * spec.w
        return spec.repeats * (12 * c * c + 33 * c), spec.repeats * hw * (12 * c * c + 20 * c)

    def _patm(self, p: str, x: Tensor) -> Tensor:
        c = x.shape[1]
        x_h = wave_features(self.conv(f"{p}.fc_h", x), self.p(f"{p}.phase_h"))
        x_w = wave_features(self.conv(f"{p}.fc_w", x), self.p(f"{p}.phase_w"))
        h = self.conv(f"{p}.tfc_h", x_h, pad=(TOKEN_PAD, 0), groups=c)
        w = self.conv(f"{p}.tfc_w", x_w, pad=(0, TOKEN_PAD), groups=c)
        mixed = tc.add(tc.add(h, w), self.conv(f"{p}.fc_c", x))
        return self.conv(f"{p}.proj", mixed)

    def forward(self, x: Tensor, trace: Optional[ForwardTrace] = None) -> Tensor:
        for r in range(self.spec.repeats):
            p = f"r{r}"
            x = tc.add(x, self._patm(p, self.bn(x, trace)))
            y = tc.silu(self.conv(f"{p}.mlp.fc1", self.bn(x, trace)))
            x = tc.add(x, self.conv(f"{p}.mlp.fc2", y))
        return x
