"""
ConvLSTM记忆单元

门变换为作用于 concat(x, h) 的深度可分离3×3卷积（逐通道3×3后接1×1到4c），
i, f, o 取sigmoid，g 取tanh：c' = f⊙c + i⊙g，h' = o⊙tanh(c')。
"""

from typing import Optional, Tuple

import numpy as np

from .base import Block, BlockSpec, ForwardTrace, ParamFactory, conv_cost
from .. import tensorcore as tc
from ..tensorcore import Tensor

LstmState = Tuple[Tensor, Tensor]


def lstm_cell_update(i: Tensor, f: Tensor, o: Tensor, g: Tensor, c: Tensor) -> LstmState:
    """给定已激活的门，返回 (h', c')"""
    c_next = tc.add(tc.mul(f, c), tc.mul(i, g))
    return tc.mul(o, tc.tanh(c_next)), c_next


class ConvLSTMBlock(Block):

    @classmethod
    def init_params(cls, spec: BlockSpec, factory: ParamFactory):
        c = spec.cout
        factory.conv("dw", 2 * c, 1, 3)
        factory.conv("pw", 4 * c, 2 * c, 1)

    @staticmethod
    def analytic_cost(spec: BlockSpec) -> Tuple[int, int]:
        c = spec.cout
        p1, m1 = conv_cost(2 * c, 2 * c, 3, spec.h, spec.w, groups=2 * c)
        p2, m2 = conv_cost(2 * c, 4 * c, 1, spec.h, spec.w)
        return p1 + p2, m1 + m2

    def zero_state(self, batch: int) -> LstmState:
        shape = (batch, self.spec.cout, self.spec.h, self.spec.w)
        return np.zeros(shape, dtype=np.float32), np.zeros(shape, dtype=np.float32)

    def step(self, x: Tensor, state: Optional[LstmState]) -> Tuple[Tensor, LstmState]:
        if state is None:
            state = self.zero_state(x.shape[0])
        h, c = state
        gates = self.conv("pw", self.conv("dw", tc.concat([x, h], axis=1), pad=1, groups=2 * self.spec.cout))
        i, f, o, g = tc.split(gates, axis=1, parts=4)
        h_next, c_next = lstm_cell_update(tc.sigmoid(i), tc.sigmoid(f), tc.sigmoid(o), tc.tanh(g), c)
        return h_next, (h_next, c_next)

    def forward(self, x: Tensor, trace: Optional[ForwardTrace] = None) -> Tensor:
        return self.step(x, None)[0]
