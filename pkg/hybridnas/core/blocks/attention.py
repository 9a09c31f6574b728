"""
MaxViT块：窗口注意力 + 网格注意力（不含MBConv）
"""

from typing import Optional, Tuple

import numpy as np

from .base import Block, BlockSpec, ForwardTrace, ParamFactory, largest_divisor_at_most
from .. import tensorcore as tc
from ..tensorcore import Tensor

MAXVIT_WINDOW = 4
MLP_RATIO = 4


def maxvit_heads(c: int) -> int:
    """不超过 max(1, c//32) 的 c 的最大因子"""
    return largest_divisor_at_most(c, max(1, c // 32))


def attention_weights(q: Tensor, k: Tensor) -> Tensor:
    """softmax(q k^T / sqrt(d))，q, k: [..., T, d]"""
    scale = np.float32(1.0 / np.sqrt(q.shape[-1]))
    return tc.softmax(tc.matmul(q, np.swapaxes(k, -1, -2)) * scale, axis=-1)


def multi_head_attention(x: Tensor, block: Block, prefix: str, heads: int,
                         return_weights: bool = False):
    """
    多头自注意力

    Args:
        x: [N, T, C] 的token序列
        block: 持有 {prefix}.qkv 与 {prefix}.proj 权重的块
        prefix: 权重名前缀
        heads: 头数

    Returns:
        [N, T, C]，return_weights为真时同时返回注意力矩阵 [N, heads, T, T]
    """
    n, t, c = x.shape
    d = c // heads
    qkv = block.linear(f"{prefix}.qkv", x).reshape(n, t, 3, heads, d).transpose(2, 0, 3, 1, 4)
    attn = attention_weights(qkv[0], qkv[1])
    out = tc.matmul(attn, qkv[2]).transpose(0, 2, 1, 3).reshape(n, t, c)
    out = block.linear(f"{prefix}.proj", out)
    return (out, attn) if return_weights else out


def window_partition(x: Tensor, ph: int, pw: int) -> Tensor:
    """[B,C,H,W] -> [B*nh*nw, ph*pw, C]，每个窗口内行优先"""
    b, c, h, w = x.shape
    t = x.reshape(b, c, h // ph, ph, w // pw, pw).transpose(0, 2, 4, 3, 5, 1)
    return t.reshape(-1, ph * pw, c)


def window_reverse(t: Tensor, b: int, c: int, h: int, w: int, ph: int, pw: int) -> Tensor:
    x = t.reshape(b, h // ph, w // pw, ph, pw, c).transpose(0, 5, 1, 3, 2, 4)
    return np.ascontiguousarray(x.reshape(b, c, h, w))


def grid_partition(x: Tensor, gh: int, gw: int) -> Tensor:
    """[B,C,H,W] -> [B*(H/gh)*(W/gw), gh*gw, C]，同组token在图上等间隔分布"""
    b, c, h, w = x.shape
    t = x.reshape(b, c, gh, h // gh, gw, w // gw).transpose(0, 3, 5, 2, 4, 1)
    return t.reshape(-1, gh * gw, c)


def grid_reverse(t: Tensor, b: int, c: int, h: int, w: int, gh: int, gw: int) -> Tensor:
    x = t.reshape(b, h // gh, w // gw, gh, gw, c).transpose(0, 5, 3, 1, 4, 2)
    return np.ascontiguousarray(x.reshape(b, c, h, w))


class MaxViTBlock(Block):
    """
    MaxViT块

    每次重复依次做窗口注意力与网格注意力，各自为
    LN → 多头自注意力 → 残差 → LN → MLP(×4, SiLU) → 残差。
    窗口/网格尺寸取不超过4的最大因子以适配小特征图。
    """

    UNITS = ("window", "grid")

    @classmethod
    def init_params(cls, spec: BlockSpec, factory: ParamFactory):
        c = spec.cout
        for r in range(spec.repeats):
            for unit in cls.UNITS:
                prefix = f"r{r}.{unit}"
                factory.linear(f"{prefix}.attn.qkv", 3 * c, c)
                factory.linear(f"{prefix}.attn.proj", c, c)
                factory.linear(f"{prefix}.mlp.fc1", MLP_RATIO * c, c)
                factory.linear(f"{prefix}.mlp.fc2", c, MLP_RATIO * c)

    @staticmethod
    def analytic_cost(spec: BlockSpec) -> Tuple[int, int]:
        c = spec.cout
        per_repeat_params = 24 * c * c + 18 * c
        per_repeat_macs = 24 * c * c * spec.h * spec.w
        return spec.repeats * per_repeat_params, spec.repeats * per_repeat_macs

    def window_size(self) -> Tuple[int, int]:
        window = self.spec.window or MAXVIT_WINDOW
        return largest_divisor_at_most(self.spec.h, window), largest_divisor_at_most(self.spec.w, window)

    def _unit(self, tokens: Tensor, prefix: str, heads: int) -> Tensor:
        y = multi_head_attention(tc.layernorm(tokens), self, f"{prefix}.attn", heads)
        tokens = tc.add(tokens, y)
        y = self.linear(f"{prefix}.mlp.fc2", tc.silu(self.linear(f"{prefix}.mlp.fc1", tc.layernorm(tokens))))
        return tc.add(tokens, y)

    def forward(self, x: Tensor, trace: Optional[ForwardTrace] = None) -> Tensor:
        b, c, h, w = x.shape
        ph, pw = self.window_size()
        heads = self.spec.heads or maxvit_heads(c)
        for r in range(self.spec.repeats):
            t = self._unit(window_partition(x, ph, pw), f"r{r}.window", heads)
            x = window_reverse(t, b, c, h, w, ph, pw)
            t = self._unit(grid_partition(x, ph, pw), f"r{r}.grid", heads)
            x = grid_reverse(t, b, c, h, w, ph, pw)
        return x
