"""
卷积类计算块：STEM / 下采样 / 普通卷积、C2f、SPPF
"""

from typing import Optional, Tuple

from .base import Block, BlockSpec, ForwardTrace, ParamFactory, conv_cost
from .. import tensorcore as tc
from ..tensorcore import Tensor


class ConvBlock(Block):
    """卷积 → BN → SiLU；STEM与下采样为3×3步长2"""

    @classmethod
    def init_params(cls, spec: BlockSpec, factory: ParamFactory):
        factory.conv("conv", spec.cout, spec.cin, spec.kernel)

    @staticmethod
    def analytic_cost(spec: BlockSpec) -> Tuple[int, int]:
        ho, wo = spec.out_hw
        return conv_cost(spec.cin, spec.cout, spec.kernel, ho, wo)

    def forward(self, x: Tensor, trace: Optional[ForwardTrace] = None) -> Tensor:
        s = self.spec
        return self.conv_bn_act("conv", x, trace, stride=s.stride, pad=s.kernel // 2, bn=s.bn, act=s.act)


def c2f_cost(cin: int, cout: int, n: int, h: int, w: int) -> Tuple[int, int]:
    """C2f的 (参数量, MAC)，隐藏通道为 cout/2"""
    hid = cout // 2
    parts = [conv_cost(cin, 2 * hid, 1, h, w)]
    parts += [conv_cost(hid, hid, 3, h, w)] * (2 * n)
    parts.append(conv_cost((2 + n) * hid, cout, 1, h, w))
    return sum(p for p, _ in parts), sum(m for _, m in parts)


class C2fBlock(Block):
    """
    C2f：1×1卷积到2h后一分为二，n个瓶颈逐个接在最后一个分支上，
    全部拼接后1×1卷积到cout。骨干中瓶颈带残差。
    """

    @classmethod
    def init_params(cls, spec: BlockSpec, factory: ParamFactory):
        hid = spec.cout // 2
        factory.conv("cv1", 2 * hid, spec.cin, 1)
        for i in range(spec.repeats):
            factory.conv(f"m{i}.cv1", hid, hid, 3)
            factory.conv(f"m{i}.cv2", hid, hid, 3)
        factory.conv("cv2", spec.cout, (2 + spec.repeats) * hid, 1)

    @staticmethod
    def analytic_cost(spec: BlockSpec) -> Tuple[int, int]:
        return c2f_cost(spec.cin, spec.cout, spec.repeats, spec.h, spec.w)

    def forward(self, x: Tensor, trace: Optional[ForwardTrace] = None) -> Tensor:
        ys = tc.split(self.conv_bn_act("cv1", x, trace), axis=1, parts=2)
        for i in range(self.spec.repeats):
            y = self.conv_bn_act(f"m{i}.cv1", ys[-1], trace, pad=1)
            y = self.conv_bn_act(f"m{i}.cv2", y, trace, pad=1)
            ys.append(tc.add(ys[-1], y) if self.spec.shortcut else y)
        return self.conv_bn_act("cv2", tc.concat(ys, axis=1), trace)


def sppf_cost(cin: int, cout: int, h: int, w: int) -> Tuple[int, int]:
    hid = cout // 2
    p1, m1 = conv_cost(cin, hid, 1, h, w)
    p2, m2 = conv_cost(4 * hid, cout, 1, h, w)
    return p1 + p2, m1 + m2


class SPPFBlock(Block):
    """SPPF：1×1到cout/2，三次串联5×5最大池化，拼接后1×1到cout"""

    @classmethod
    def init_params(cls, spec: BlockSpec, factory: ParamFactory):
        hid = spec.cout // 2
        factory.conv("cv1", hid, spec.cin, 1)
        factory.conv("cv2", spec.cout, 4 * hid, 1)

    @staticmethod
    def analytic_cost(spec: BlockSpec) -> Tuple[int, int]:
        return sppf_cost(spec.cin, spec.cout, spec.h, spec.w)

    def forward(self, x: Tensor, trace: Optional[ForwardTrace] = None) -> Tensor:
        y = [self.conv_bn_act("cv1", x, trace)]
        for _ in range(3):
            y.append(tc.maxpool2d(y[-1], k=5, stride=1, pad=2))
        return self.conv_bn_act("cv2", tc.concat(y, axis=1), trace)
