"""
Mamba块：仅保留选择性状态空间（SSM）部分

通道按头数近似等分为若干组，每组独立处理：
in_proj(d→2d) 分成 x 与 z 两支；x 经逐通道 conv1d(k=3) 与 SiLU；
x_proj 生成随输入变化的 B_t、C_t；零阶保持离散化后做对角线性扫描；
输出乘以 silu(z) 门控，out_proj 回到 d 维，再加残差。
"""

from typing import List, Optional, Tuple

import numpy as np

from .attention import window_partition, window_reverse
from .base import Block, BlockSpec, ForwardTrace, ParamFactory, largest_divisor_at_most
from .. import tensorcore as tc
from ..tensorcore import Tensor

STATE_DIM = 16
MAMBA_WINDOW = 8
CONV_KERNEL = 3


def group_sizes(c: int, heads: int) -> List[int]:
    """按 numpy.array_split 的规则把 c 个通道分成 heads 组"""
    return [len(part) for part in np.array_split(np.arange(c), heads)]


def softplus(x):
    return np.logaddexp(0.0, x)


def discretize(delta: float, a: np.ndarray, b_t: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    零阶保持离散化

    Args:
        delta: 时间尺度 Δ > 0
        a: 对角状态矩阵 A [d, N]（全部为负）
        b_t: 输入相关的 B [..., N]

    Returns:
        (A_bar [d, N], B_bar [..., d, N])，A_bar = exp(ΔA)，B_bar = (exp(ΔA) - 1) / A · B
    """
    a_bar = np.exp(delta * a)
    b_bar = ((a_bar - 1.0) / a) * b_t[..., None, :]
    return a_bar, b_bar


def selective_scan(x: Tensor, a_bar: np.ndarray, b_bar: np.ndarray, c_t: np.ndarray) -> Tensor:
    """
    h_t = A_bar ⊙ h_{t-1} + B_bar_t ⊙ x_t，y_t = Σ_n h_t C_t

    Args:
        x: [S, L, d]
        a_bar: [d, N]
        b_bar: [S, L, d, N]
        c_t: [S, L, N]
    """
    s, length, d = x.shape
    h = np.zeros((s, d, a_bar.shape[-1]), dtype=np.float32)
    y = np.empty((s, length, d), dtype=np.float32)
    for t in range(length):
        h = a_bar * h + b_bar[:, t] * x[:, t, :, None]
        y[:, t] = np.einsum("sdn,sn->sd", h, c_t[:, t])
    return y


def mamba_group_cost(d: int, tokens: int) -> Tuple[int, int]:
    params = 3 * d * d + 55 * d + 1
    macs = tokens * (3 * d * d + 3 * d + 2 * STATE_DIM * d)
    return params, macs


class MambaBlock(Block):
    """Mamba块（按窗口把空间特征图组织成序列）"""

    @classmethod
    def init_params(cls, spec: BlockSpec, factory: ParamFactory):
        for g, d in enumerate(group_sizes(spec.cout, spec.heads)):
            prefix = f"g{g}"
            factory.linear(f"{prefix}.in_proj", 2 * d, d)
            factory.conv(f"{prefix}.conv1d", d, 1, 1, CONV_KERNEL)
            factory.linear(f"{prefix}.x_proj", 2 * STATE_DIM, d, bias=False)
            factory.set(f"{prefix}.dt", factory.rng.normal((1,)))
            factory.set(f"{prefix}.A_log", factory.rng.uniform((d, STATE_DIM), 0.0, 1.0))
            factory.linear(f"{prefix}.out_proj", d, d)

    @staticmethod
    def analytic_cost(spec: BlockSpec) -> Tuple[int, int]:
        tokens = spec.h * spec.w
        params = macs = 0
        for d in group_sizes(spec.cout, spec.heads):
            p, m = mamba_group_cost(d, tokens)
            params += p
            macs += m
        return params, macs

    def window_size(self) -> Tuple[int, int]:
        window = self.spec.window or MAMBA_WINDOW
        return largest_divisor_at_most(self.spec.h, window), largest_divisor_at_most(self.spec.w, window)

    def _group(self, prefix: str, seq: Tensor) -> Tensor:
        d = seq.shape[-1]
        xz = self.linear(f"{prefix}.in_proj", seq)
        xs, z = xz[..., :d], xz[..., d:]

        # 序列维上的深度卷积
        w = self.p(f"{prefix}.conv1d.weight")[:, :, 0, :]
        xs = tc.conv1d(np.ascontiguousarray(xs.transpose(0, 2, 1)), w, self.p(f"{prefix}.conv1d.bias"),
                       pad=CONV_KERNEL // 2, groups=d)
        xs = tc.silu(np.ascontiguousarray(xs.transpose(0, 2, 1)))

        bc = self.linear(f"{prefix}.x_proj", xs)
        b_t, c_t = bc[..., :STATE_DIM], bc[..., STATE_DIM:]
        delta = float(softplus(self.p(f"{prefix}.dt")[0]))
        a = -np.exp(self.p(f"{prefix}.A_log"))
        a_bar, b_bar = discretize(delta, a, b_t)
        y = selective_scan(xs, a_bar.astype(np.float32), b_bar.astype(np.float32), c_t)

        y = tc.mul(y, tc.silu(z))
        return tc.add(seq, self.linear(f"{prefix}.out_proj", y))

    def forward(self, x: Tensor, trace: Optional[ForwardTrace] = None) -> Tensor:
        b, c, h, w = x.shape
        ph, pw = self.window_size()
        seq = window_partition(x, ph, pw)
        outs, start = [], 0
        for g, d in enumerate(group_sizes(c, self.spec.heads)):
            outs.append(self._group(f"g{g}", np.ascontiguousarray(seq[..., start:start + d])))
            start += d
        return window_reverse(tc.concat(outs, axis=-1), b, c, h, w, ph, pw)
