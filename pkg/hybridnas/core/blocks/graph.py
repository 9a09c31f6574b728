"""
骨干网络计算图

层序：STEM → 4 × [下采样, 处理块, ConvLSTM] → SPPF。
计算图不可变，可在线程间共享；前向为 (graph, x, state) 的纯函数。
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Type

import numpy as np
import pandas as pd

from .attention import MaxViTBlock, MAXVIT_WINDOW, maxvit_heads
from .base import Block, BlockKind, BlockSpec, ForwardTrace
from .conv import C2fBlock, ConvBlock, SPPFBlock
from .head import HeadCost, head_cost
from .recurrent import ConvLSTMBlock, LstmState
from .ssm import MambaBlock, MAMBA_WINDOW
from .wavemlp import WaveMLPBlock
from .. import tensorcore as tc
from ..events import DEFAULT_BINS
from ..genome import BlockType, Genome, derive_channels
from ..tensorcore import Rng, Tensor
from ...utils.exceptions import NumericalOverflowError, TensorShapeError, ERROR_CODES

BLOCK_CLASSES: Dict[BlockKind, Type[Block]] = {
    BlockKind.STEM: ConvBlock,
    BlockKind.DOWNSAMPLE: ConvBlock,
    BlockKind.CONV: ConvBlock,
    BlockKind.C2F: C2fBlock,
    BlockKind.MAXVIT: MaxViTBlock,
    BlockKind.MAMBA: MambaBlock,
    BlockKind.WAVEMLP: WaveMLPBlock,
    BlockKind.CONVLSTM: ConvLSTMBlock,
    BlockKind.SPPF: SPPFBlock,
}

_PROCESSING_KINDS = {
    BlockType.C2F: BlockKind.C2F,
    BlockType.MAXVIT: BlockKind.MAXVIT,
    BlockType.MAMBA: BlockKind.MAMBA,
    BlockType.WAVEMLP: BlockKind.WAVEMLP,
}


@dataclass(frozen=True)
class RecurrentState:
    """每个ConvLSTM的 (h, c)，序列开始时全零"""
    memories: Tuple[Optional[LstmState], ...]

    @classmethod
    def empty(cls, graph: "ComputeGraph") -> "RecurrentState":
        return cls(tuple(None for _ in graph.lstm_indices))

    @classmethod
    def zeros(cls, graph: "ComputeGraph", batch: int) -> "RecurrentState":
        return cls(tuple(graph.blocks[i].zero_state(batch) for i in graph.lstm_indices))


@dataclass(frozen=True)
class ComputeGraph:
    blocks: Tuple[Block, ...]
    in_channels: int
    height: int
    width: int
    seed: int = 0
    genome: Optional[Genome] = None
    lstm_indices: Tuple[int, ...] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))
        object.__setattr__(self, "lstm_indices", tuple(
            i for i, b in enumerate(self.blocks) if b.spec.kind is BlockKind.CONVLSTM))

    @property
    def specs(self) -> Tuple[BlockSpec, ...]:
        return tuple(b.spec for b in self.blocks)

    @property
    def out_channels(self) -> int:
        return self.blocks[-1].spec.cout

    def _check_input(self, x: Tensor):
        expected = (self.in_channels, self.height, self.width)
        if x.ndim != 4 or tuple(x.shape[1:]) != expected:
            raise TensorShapeError(
                f"Graph input must be [B,{self.in_channels},{self.height},{self.width}], got {tuple(x.shape)}",
                ERROR_CODES["TENSOR_SHAPE_MISMATCH"],
                {"dimension": "input", "expected": list(expected), "got": list(x.shape)}
            )

    def forward(self, x: Tensor, state: Optional[RecurrentState] = None,
                trace: Optional[ForwardTrace] = None) -> Tuple[Tensor, RecurrentState]:
        self._check_input(x)
        if state is None:
            state = RecurrentState.empty(self)
        memories: List[Optional[LstmState]] = list(state.memories)
        y = x
        slot = 0
        for block in self.blocks:
            if block.spec.kind is BlockKind.CONVLSTM:
                y, memories[slot] = block.step(y, memories[slot])
                slot += 1
            else:
                y = block.forward(y, trace)
            if not tc.is_finite(y):
                raise NumericalOverflowError(
                    f"Non-finite activation after block {block.spec.name}",
                    ERROR_CODES["NON_FINITE_ACTIVATION"],
                    {"block": block.spec.name}
                )
        return y, RecurrentState(tuple(memories))

    def forward_trace(self, x: Tensor, state: Optional[RecurrentState] = None) -> Tuple[Tensor, ForwardTrace]:
        trace = ForwardTrace()
        y, _ = self.forward(x, state, trace)
        return y, trace

    def forward_sequence(self, xs: Sequence[Tensor],
                         state: Optional[RecurrentState] = None) -> Tuple[List[Tensor], RecurrentState]:
        """逐时间步前向，记忆在步间传递"""
        outputs = []
        for x in xs:
            y, state = self.forward(x, state)
            outputs.append(y)
        return outputs, state if state is not None else RecurrentState.empty(self)

    def param_count(self) -> int:
        return sum(b.param_count() for b in self.blocks)

    # 参数化模型接口（NTK使用）------------------------------------------
    def flat_params(self) -> np.ndarray:
        return np.concatenate([v.reshape(-1).astype(np.float64)
                               for b in self.blocks for v in b.params.values()])

    def with_params(self, flat: np.ndarray) -> "ComputeGraph":
        offset, blocks = 0, []
        for b in self.blocks:
            new = {}
            for name, v in b.params.items():
                new[name] = np.asarray(flat[offset:offset + v.size], dtype=np.float32).reshape(v.shape)
                offset += v.size
            blocks.append(b.with_params(new))
        if offset != len(flat):
            raise TensorShapeError(
                f"Parameter vector has {len(flat)} entries, graph expects {offset}",
                ERROR_CODES["TENSOR_SHAPE_MISMATCH"],
                {"dimension": "params"}
            )
        return ComputeGraph(tuple(blocks), self.in_channels, self.height, self.width, self.seed, self.genome)

    def scalar_outputs(self, xs: Tensor) -> np.ndarray:
        """每个输入一个标量：输出全局平均池化后再对通道取平均"""
        y, _ = self.forward(xs)
        return tc.avgpool_global(y).astype(np.float64).mean(axis=1)


def forward(graph: ComputeGraph, x: Tensor, state: Optional[RecurrentState] = None) -> Tuple[Tensor, RecurrentState]:
    return graph.forward(x, state)


# ---------------------------------------------------------------- 构建

def _check_resolution(height: int, width: int):
    for name, value in (("H", height), ("W", width)):
        if value <= 0 or value % 32:
            raise TensorShapeError(
                f"{name}={value} must be a positive multiple of 32",
                ERROR_CODES["TENSOR_INVALID_ARGUMENT"],
                {"dimension": name}
            )


def plan_graph(g: Genome, height: int, width: int, bins: int = DEFAULT_BINS) -> Tuple[BlockSpec, ...]:
    """只生成块结构（不含权重），供成本计算与构建共用"""
    _check_resolution(height, width)
    ch = derive_channels(g, bins)
    h, w = height, width
    specs = [BlockSpec(BlockKind.STEM, "stem", ch.in_channels, ch.stem_ch, h, w, stride=2)]
    h, w = specs[-1].out_hw
    for i, (gene, lc) in enumerate(zip(g.layers, ch.layers), start=1):
        down = BlockSpec(BlockKind.DOWNSAMPLE, f"layer{i}.downsample", lc.cin, lc.cout, h, w, stride=2)
        specs.append(down)
        h, w = down.out_hw
        kind = _PROCESSING_KINDS[gene.block]
        name = f"layer{i}.{gene.block.value}"
        if kind is BlockKind.MAMBA:
            spec = BlockSpec(kind, name, lc.cout, lc.cout, h, w, heads=lc.heads, window=MAMBA_WINDOW)
        elif kind is BlockKind.MAXVIT:
            spec = BlockSpec(kind, name, lc.cout, lc.cout, h, w, repeats=gene.repeats,
                             heads=maxvit_heads(lc.cout), window=MAXVIT_WINDOW)
        else:
            spec = BlockSpec(kind, name, lc.cout, lc.cout, h, w, repeats=gene.repeats)
        specs.append(spec)
        specs.append(BlockSpec(BlockKind.CONVLSTM, f"layer{i}.convlstm", lc.cout, lc.cout, h, w))
    c4 = ch.layers[-1].cout
    specs.append(BlockSpec(BlockKind.SPPF, "sppf", c4, c4, h, w))
    return tuple(specs)


def _materialize(specs: Sequence[BlockSpec], seed: int) -> Tuple[Block, ...]:
    root = Rng(seed)
    return tuple(BLOCK_CLASSES[s.kind].build(s, root.spawn(i)) for i, s in enumerate(specs))


def build_graph(g: Genome, height: int, width: int, seed: int = 0, bins: int = DEFAULT_BINS) -> ComputeGraph:
    """
    按基因实例化计算图

    Args:
        g: 基因
        height, width: 输入分辨率（需被32整除）
        seed: 权重初始化种子
        bins: 编码时间箱数

    Returns:
        ComputeGraph，对 (g, seed) 确定
    """
    specs = plan_graph(g, height, width, bins)
    return ComputeGraph(_materialize(specs, seed), specs[0].cin, height, width, seed, g)


def build_plain_graph(in_channels: int, widths: Sequence[int], height: int, width: int, seed: int = 0,
                      bn: bool = True, act: bool = True) -> ComputeGraph:
    """普通卷积骨干：每层3×3步长2卷积，可选BN与SiLU"""
    h, w, cin = height, width, in_channels
    specs = []
    for i, cout in enumerate(widths, start=1):
        spec = BlockSpec(BlockKind.CONV, f"conv{i}", cin, cout, h, w, stride=2, bn=bn, act=act)
        specs.append(spec)
        h, w = spec.out_hw
        cin = cout
    return ComputeGraph(_materialize(specs, seed), in_channels, height, width, seed)


# ---------------------------------------------------------------- 成本

def _specs_cost(specs: Sequence[BlockSpec]) -> Tuple[int, int]:
    params = macs = 0
    for s in specs:
        p, m = BLOCK_CLASSES[s.kind].analytic_cost(s)
        params += p
        macs += m
    return params, macs


def cost(graph: ComputeGraph) -> Tuple[int, int]:
    """骨干的 (参数量, 单样本MAC)"""
    return _specs_cost(graph.specs)


@dataclass(frozen=True)
class CostBreakdown:
    backbone_params: int
    backbone_macs: int
    head: HeadCost

    @property
    def params(self) -> int:
        return self.backbone_params + self.head.params

    @property
    def macs(self) -> int:
        return self.backbone_macs + self.head.macs


def cost_breakdown(g: Genome, height: int, width: int, bins: int = DEFAULT_BINS,
                   num_classes: int = 1) -> CostBreakdown:
    specs = plan_graph(g, height, width, bins)
    params, macs = _specs_cost(specs)
    ch = derive_channels(g, bins)
    neck_head = head_cost(ch.layers[1].cout, ch.layers[2].cout, specs[-1].cout, ch.panet,
                          height, width, num_classes)
    return CostBreakdown(params, macs, neck_head)


def cost_full_model(g: Genome, height: int, width: int, bins: int = DEFAULT_BINS,
                    num_classes: int = 1) -> Tuple[int, int]:
    """整模型（骨干 + PANET + 检测头）的 (参数量, MAC)"""
    breakdown = cost_breakdown(g, height, width, bins, num_classes)
    return breakdown.params, breakdown.macs


def summary(graph: ComputeGraph) -> str:
    """层表：名称、类型、通道、输出形状、参数量、MAC"""
    rows = []
    for b in graph.blocks:
        s = b.spec
        p, m = b.cost()
        rows.append({
            "block": s.name,
            "kind": s.kind.value,
            "cin": s.cin,
            "cout": s.cout,
            "output": "x".join(str(d) for d in (s.cout, *s.out_hw)),
            "params": p,
            "macs": m,
        })
    table = pd.DataFrame(rows)
    total_p, total_m = cost(graph)
    footer = f"total params={total_p:,} macs={total_m:,}"
    return table.to_string(index=False) + "\n" + footer
