"""
计算块公共基础

BlockSpec 描述一个块的结构（不含权重），Block 持有按创建顺序排列的具名权重。
每种块提供解析的参数量/MAC公式，与实例化后的权重枚举及插桩前向严格一致。
"""

import copy
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np

from .. import tensorcore as tc
from ..tensorcore import Rng, Tensor


class BlockKind(str, Enum):
    STEM = "Stem"
    DOWNSAMPLE = "Downsample"
    CONV = "Conv"
    C2F = "C2f"
    MAXVIT = "MaxViT"
    MAMBA = "Mamba"
    WAVEMLP = "WaveMLP"
    CONVLSTM = "ConvLSTM"
    SPPF = "SPPF"


@dataclass(frozen=True)
class BlockSpec:
    """
    块结构描述

    h, w 为块输入的空间尺寸；repeats / heads / window 只对相应块类型有意义。
    """
    kind: BlockKind
    name: str
    cin: int
    cout: int
    h: int
    w: int
    repeats: Optional[int] = None
    heads: Optional[int] = None
    window: Optional[int] = None
    shortcut: bool = True
    stride: int = 1
    kernel: int = 3
    bn: bool = True
    act: bool = True

    @property
    def out_hw(self) -> Tuple[int, int]:
        if self.stride == 1:
            return self.h, self.w
        pad = self.kernel // 2
        return ((self.h + 2 * pad - self.kernel) // self.stride + 1,
                (self.w + 2 * pad - self.kernel) // self.stride + 1)


@dataclass
class ForwardTrace:
    """前向过程中收集的每个BN层的逐通道标准差"""
    bn_sigmas: List[List[float]] = field(default_factory=list)


class ParamFactory:
    """
    权重初始化器

    权重与偏置均为标准正态采样后除以 sqrt(fan_in)；按调用顺序登记。
    """

    def __init__(self, rng: Rng):
        self.rng = rng
        self.params: Dict[str, Tensor] = {}

    def gaussian(self, name: str, shape: Tuple[int, ...], fan_in: int) -> Tensor:
        value = self.rng.normal(shape) / np.float32(np.sqrt(fan_in))
        self.params[name] = value.astype(np.float32)
        return self.params[name]

    def conv(self, name: str, cout: int, cin_g: int, kh: int, kw: int = None, bias: bool = True):
        kw = kh if kw is None else kw
        fan_in = cin_g * kh * kw
        self.gaussian(f"{name}.weight", (cout, cin_g, kh, kw), fan_in)
        if bias:
            self.gaussian(f"{name}.bias", (cout,), fan_in)

    def linear(self, name: str, out_f: int, in_f: int, bias: bool = True):
        self.gaussian(f"{name}.weight", (out_f, in_f), in_f)
        if bias:
            self.gaussian(f"{name}.bias", (out_f,), in_f)

    def set(self, name: str, value: Tensor):
        self.params[name] = np.asarray(value, dtype=np.float32)


def conv_cost(cin: int, cout: int, k: int, ho: int, wo: int, groups: int = 1, kw: int = None) -> Tuple[int, int]:
    """带偏置卷积的 (参数量, MAC)"""
    kw = k if kw is None else kw
    weights = cout * (cin // groups) * k * kw
    return weights + cout, weights * ho * wo


class Block:
    """计算块基类"""

    def __init__(self, spec: BlockSpec, params: Dict[str, Tensor]):
        self.spec = spec
        for value in params.values():
            value.setflags(write=False)
        self.params = params

    # 子类实现 ------------------------------------------------------------
    @classmethod
    def init_params(cls, spec: BlockSpec, factory: ParamFactory):
        raise NotImplementedError

    @staticmethod
    def analytic_cost(spec: BlockSpec) -> Tuple[int, int]:
        raise NotImplementedError

    def forward(self, x: Tensor, trace: Optional[ForwardTrace] = None) -> Tensor:
        raise NotImplementedError

    # 公共 ----------------------------------------------------------------
    @classmethod
    def build(cls, spec: BlockSpec, rng: Rng) -> "Block":
        factory = ParamFactory(rng)
        cls.init_params(spec, factory)
        return cls(spec, factory.params)

    def with_params(self, params: Dict[str, Tensor]) -> "Block":
        clone = copy.copy(self)
        Block.__init__(clone, self.spec, {k: np.array(v, dtype=np.float32) for k, v in params.items()})
        return clone

    def param_count(self) -> int:
        """实例化权重的逐元素计数"""
        return int(sum(v.size for v in self.params.values()))

    def cost(self) -> Tuple[int, int]:
        return self.analytic_cost(self.spec)

    def output_shape(self, batch: int) -> Tuple[int, int, int, int]:
        ho, wo = self.spec.out_hw
        return batch, self.spec.cout, ho, wo

    def p(self, name: str) -> Tensor:
        return self.params[name]

    def conv(self, name: str, x: Tensor, stride=1, pad=0, groups: int = 1) -> Tensor:
        return tc.conv2d(x, self.params[f"{name}.weight"], self.params.get(f"{name}.bias"),
                         stride=stride, pad=pad, groups=groups)

    def linear(self, name: str, x: Tensor) -> Tensor:
        return tc.linear(x, self.params[f"{name}.weight"], self.params.get(f"{name}.bias"))

    @staticmethod
    def bn(x: Tensor, trace: Optional[ForwardTrace]) -> Tensor:
        y, sigmas = tc.batchnorm(x)
        if trace is not None:
            trace.bn_sigmas.append(sigmas)
        return y

    def conv_bn_act(self, name: str, x: Tensor, trace: Optional[ForwardTrace], stride: int = 1,
                    pad: int = 0, bn: bool = True, act: bool = True) -> Tensor:
        """卷积 → BN → SiLU（YOLO风格Conv单元）"""
        y = self.conv(name, x, stride=stride, pad=pad)
        if bn:
            y = self.bn(y, trace)
        return tc.silu(y) if act else y


def largest_divisor_at_most(n: int, limit: int) -> int:
    """n 的不超过 limit 的最大因子"""
    for d in range(min(n, max(1, limit)), 0, -1):
        if n % d == 0:
            return d
    return 1
