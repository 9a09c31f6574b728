"""
基因表示与设计空间

一个基因 = (事件编码, STEM通道, 4个层基因)。提供采样、变异、通道推导、
串行化/解析以及设计空间规模计算。
"""

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterator, List, Optional, Sequence, Tuple

from .events import Encoding, DEFAULT_BINS
from .tensorcore import Rng
from ..utils.exceptions import GenomeParseError, ERROR_CODES

NUM_LAYERS = 4


class BlockType(str, Enum):
    C2F = "c2f"
    MAXVIT = "maxvit"
    MAMBA = "mamba"
    WAVEMLP = "wavemlp"


BLOCK_ORDER: Tuple[BlockType, ...] = (BlockType.C2F, BlockType.MAXVIT, BlockType.MAMBA, BlockType.WAVEMLP)
ENCODINGS: Tuple[Encoding, ...] = (Encoding.VTEI, Encoding.SHIST, Encoding.MDES, Encoding.TAF)
STEM_CHANNELS: Tuple[int, ...] = (16, 24, 32, 40, 48)
MULTIPLIERS: Tuple[float, ...] = (1.0, 1.25, 1.33, 1.50, 1.66, 1.75, 2.00)
REPEATS: Tuple[int, ...] = (1, 2, 3)
HEADS: Tuple[int, ...] = (1, 2, 3)
HEAD_MULTIPLIERS: Tuple[float, ...] = (1.0, 1.25, 1.5, 2.0)

# PANET中C2f输出通道相对STEM通道的倍数
PANET_FACTORS: Tuple[int, ...] = (8, 4, 8, 16)


def _in_domain(value: float, domain: Sequence[float]) -> Optional[float]:
    for candidate in domain:
        if abs(value - candidate) < 1e-9:
            return candidate
    return None


@dataclass(frozen=True)
class LayerGene:
    """
    单层基因

    repeats 仅在非Mamba块存在；heads / head_multiplier 仅在Mamba块存在。
    """
    block: BlockType
    multiplier: float
    repeats: Optional[int] = None
    heads: Optional[int] = None
    head_multiplier: Optional[float] = None

    def __post_init__(self):
        if _in_domain(self.multiplier, MULTIPLIERS) is None:
            raise GenomeParseError(f"Multiplier {self.multiplier} outside the design space",
                                   ERROR_CODES["GENOME_INVALID_VALUE"])
        if self.block is BlockType.MAMBA:
            if self.repeats is not None or self.heads not in HEADS \
                    or self.head_multiplier is None or _in_domain(self.head_multiplier, HEAD_MULTIPLIERS) is None:
                raise GenomeParseError(
                    f"Mamba layer needs heads in {HEADS} and head_multiplier in {HEAD_MULTIPLIERS}, no repeats",
                    ERROR_CODES["GENOME_INVALID_VALUE"])
        elif self.repeats not in REPEATS or self.heads is not None or self.head_multiplier is not None:
            raise GenomeParseError(
                f"{self.block.value} layer needs repeats in {REPEATS} and no head genes",
                ERROR_CODES["GENOME_INVALID_VALUE"])


@dataclass(frozen=True)
class Genome:
    encoding: Encoding
    stem_ch: int
    layers: Tuple[LayerGene, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if len(self.layers) != NUM_LAYERS:
            raise GenomeParseError(f"Genome needs exactly {NUM_LAYERS} layers, got {len(self.layers)}",
                                   ERROR_CODES["GENOME_INVALID_VALUE"])
        if self.stem_ch not in STEM_CHANNELS:
            raise GenomeParseError(f"Stem channels {self.stem_ch} outside {STEM_CHANNELS}",
                                   ERROR_CODES["GENOME_INVALID_VALUE"])

    def __str__(self) -> str:
        return serialize(self)

    @property
    def blocks(self) -> Tuple[BlockType, ...]:
        return tuple(layer.block for layer in self.layers)


@dataclass(frozen=True)
class DesignSpace:
    """
    可配置的设计空间

    blocks 给出每层允许的块类型；其余为各基因的取值域。
    """
    encodings: Tuple[Encoding, ...] = ENCODINGS
    stem_channels: Tuple[int, ...] = STEM_CHANNELS
    multipliers: Tuple[float, ...] = MULTIPLIERS
    blocks: Tuple[Tuple[BlockType, ...], ...] = (BLOCK_ORDER,) * NUM_LAYERS
    repeats: Tuple[int, ...] = REPEATS
    heads: Tuple[int, ...] = HEADS
    head_multipliers: Tuple[float, ...] = HEAD_MULTIPLIERS

    @property
    def num_layers(self) -> int:
        return len(self.blocks)

    def with_encoding(self, encoding: Encoding) -> "DesignSpace":
        return replace(self, encodings=(encoding,))

    def with_blocks(self, block: BlockType) -> "DesignSpace":
        """所有层固定为同一种块（同构模型）"""
        return replace(self, blocks=((block,),) * self.num_layers)

    def block_choices(self, block: BlockType) -> int:
        if block is BlockType.MAMBA:
            return len(self.multipliers) * len(self.heads) * len(self.head_multipliers)
        return len(self.multipliers) * len(self.repeats)

    def layer_options(self, layer: int) -> Iterator[LayerGene]:
        for block in self.blocks[layer]:
            for m in self.multipliers:
                if block is BlockType.MAMBA:
                    for h in self.heads:
                        for hm in self.head_multipliers:
                            yield LayerGene(block, m, heads=h, head_multiplier=hm)
                else:
                    for r in self.repeats:
                        yield LayerGene(block, m, repeats=r)


DEFAULT_SPACE = DesignSpace()


@dataclass(frozen=True)
class LayerChannels:
    cin: int
    cout: int
    heads: Optional[int] = None


@dataclass(frozen=True)
class DerivedChannels:
    in_channels: int
    stem_ch: int
    layers: Tuple[LayerChannels, ...]
    panet: Tuple[int, ...] = field(default=())

    @property
    def outputs(self) -> Tuple[int, ...]:
        return tuple(layer.cout for layer in self.layers)


# ---------------------------------------------------------------- 采样与变异

def _sample_layer(rng: Rng, space: DesignSpace, layer: int) -> LayerGene:
    block = rng.choice(space.blocks[layer])
    return _sample_dependents(rng, space, block, rng.choice(space.multipliers))


def _sample_dependents(rng: Rng, space: DesignSpace, block: BlockType, multiplier: float) -> LayerGene:
    if block is BlockType.MAMBA:
        return LayerGene(block, multiplier, heads=rng.choice(space.heads),
                         head_multiplier=rng.choice(space.head_multipliers))
    return LayerGene(block, multiplier, repeats=rng.choice(space.repeats))


def sample(rng: Rng, space: DesignSpace = DEFAULT_SPACE) -> Genome:
    """每个基因在其取值域上均匀采样，块类型确定后再采样依赖基因"""
    encoding = rng.choice(space.encodings)
    stem_ch = rng.choice(space.stem_channels)
    layers = tuple(_sample_layer(rng, space, i) for i in range(space.num_layers))
    return Genome(encoding, stem_ch, layers)


def sample_homogeneous(rng: Rng, block: BlockType, space: DesignSpace = DEFAULT_SPACE) -> Genome:
    return sample(rng, space.with_blocks(block))


def _other(rng: Rng, domain: Sequence, current):
    options = [v for v in domain if v != current]
    return rng.choice(options)


def mutate(g: Genome, rng: Rng, space: DesignSpace = DEFAULT_SPACE, mutate_encoding: bool = False) -> Genome:
    """
    单基因变异

    在所有可变基因（取值域大于1）中均匀选择一个，替换为不同的合法值；
    块类型变化时重新采样该层的依赖基因。编码基因只有 mutate_encoding 为真时可变。

    Args:
        g: 父代基因
        rng: 随机数发生器
        space: 设计空间
        mutate_encoding: 是否允许变异编码格式

    Returns:
        子代基因
    """
    slots: List[Tuple[str, int]] = []
    if mutate_encoding and len(space.encodings) > 1:
        slots.append(("encoding", -1))
    if len(space.stem_channels) > 1:
        slots.append(("stem_ch", -1))
    for i, layer in enumerate(g.layers):
        if len(space.multipliers) > 1:
            slots.append(("multiplier", i))
        if len(space.blocks[i]) > 1:
            slots.append(("block", i))
        if layer.block is BlockType.MAMBA:
            if len(space.heads) > 1:
                slots.append(("heads", i))
            if len(space.head_multipliers) > 1:
                slots.append(("head_multiplier", i))
        elif len(space.repeats) > 1:
            slots.append(("repeats", i))
    if not slots:
        return g

    name, i = slots[rng.integers(0, len(slots))]
    if name == "encoding":
        return replace(g, encoding=_other(rng, space.encodings, g.encoding))
    if name == "stem_ch":
        return replace(g, stem_ch=_other(rng, space.stem_channels, g.stem_ch))

    layer = g.layers[i]
    if name == "block":
        new_layer = _sample_dependents(rng, space, _other(rng, space.blocks[i], layer.block), layer.multiplier)
    elif name == "multiplier":
        new_layer = replace(layer, multiplier=_other(rng, space.multipliers, layer.multiplier))
    elif name == "repeats":
        new_layer = replace(layer, repeats=_other(rng, space.repeats, layer.repeats))
    elif name == "heads":
        new_layer = replace(layer, heads=_other(rng, space.heads, layer.heads))
    else:
        new_layer = replace(layer, head_multiplier=_other(rng, space.head_multipliers, layer.head_multiplier))
    layers = list(g.layers)
    layers[i] = new_layer
    return replace(g, layers=tuple(layers))


# ---------------------------------------------------------------- 通道推导

def round8(value: float) -> int:
    """取最近的8的倍数，恰在中点时向上，最小为8"""
    return max(8, 8 * math.floor(value / 8 + 0.5))


def derive_channels(g: Genome, bins: int = DEFAULT_BINS) -> DerivedChannels:
    """
    推导每层输入/输出通道以及Mamba头数

    Args:
        g: 基因
        bins: 编码的时间箱数（VTEI/MDES为B，SHIST/TAF为T/K）

    Returns:
        DerivedChannels
    """
    layers = []
    cin = g.stem_ch
    prev_heads: Optional[int] = None
    for gene in g.layers:
        cout = round8(gene.multiplier * cin)
        heads = None
        if gene.block is BlockType.MAMBA:
            base = prev_heads if prev_heads is not None else gene.heads
            heads = min(max(1, math.floor(gene.head_multiplier * base + 0.5)), max(1, cout // 8))
            prev_heads = heads
        layers.append(LayerChannels(cin, cout, heads))
        cin = cout
    panet = tuple(f * g.stem_ch for f in PANET_FACTORS)
    return DerivedChannels(g.encoding.input_channels(bins), g.stem_ch, tuple(layers), panet)


# ---------------------------------------------------------------- 串行化

def _format_head_multiplier(value: float) -> str:
    text = f"{value:.2f}"
    return text[:-1] if text.endswith("0") else text


def serialize(g: Genome) -> str:
    parts = [g.encoding.value, f"Ch{g.stem_ch}"]
    for i, layer in enumerate(g.layers, start=1):
        fields = [layer.block.value, f"m{layer.multiplier:.2f}"]
        if layer.block is BlockType.MAMBA:
            fields += [f"h{layer.heads}", f"hm{_format_head_multiplier(layer.head_multiplier)}"]
        else:
            fields.append(f"r{layer.repeats}")
        parts.append(f"L{i}:" + ",".join(fields))
    return "|".join(parts)


class _Cursor:
    """带位置信息的分段读取器"""

    def __init__(self, text: str):
        self.text = text

    def fail(self, message: str, pos: int):
        raise GenomeParseError(
            f"{message} at position {pos} in {self.text!r}",
            ERROR_CODES["GENOME_PARSE_FAILED"],
            {"position": pos, "text": self.text}
        )

    def segments(self, text: str, sep: str, start: int) -> List[Tuple[str, int]]:
        out, pos = [], start
        for piece in text.split(sep):
            out.append((piece, pos))
            pos += len(piece) + 1
        return out


def _parse_number(cur: _Cursor, token: str, prefix: str, pos: int, integer: bool):
    if not token.startswith(prefix) or len(token) == len(prefix):
        cur.fail(f"expected '{prefix}<value>', got {token!r}", pos)
    body = token[len(prefix):]
    try:
        return int(body) if integer else float(body)
    except ValueError:
        cur.fail(f"bad numeric value {body!r}", pos + len(prefix))


def _parse_layer(cur: _Cursor, token: str, pos: int, index: int) -> LayerGene:
    label = f"L{index}:"
    if not token.startswith(label):
        cur.fail(f"expected layer label {label!r}", pos)
    fields = cur.segments(token[len(label):], ",", pos + len(label))
    name, name_pos = fields[0]
    try:
        block = BlockType(name)
    except ValueError:
        cur.fail(f"unknown block {name!r}", name_pos)
    expected = 4 if block is BlockType.MAMBA else 3
    if len(fields) != expected:
        cur.fail(f"{block.value} layer takes {expected} fields, got {len(fields)}", name_pos)

    mult_token, mult_pos = fields[1]
    multiplier = _in_domain(_parse_number(cur, mult_token, "m", mult_pos, False), MULTIPLIERS)
    if multiplier is None:
        cur.fail(f"multiplier {mult_token!r} outside {MULTIPLIERS}", mult_pos)

    if block is BlockType.MAMBA:
        h_token, h_pos = fields[2]
        if h_token.startswith("hm"):
            cur.fail("expected heads 'h<n>' before 'hm<x>'", h_pos)
        heads = _parse_number(cur, h_token, "h", h_pos, True)
        if heads not in HEADS:
            cur.fail(f"heads {heads} outside {HEADS}", h_pos)
        hm_token, hm_pos = fields[3]
        hm = _in_domain(_parse_number(cur, hm_token, "hm", hm_pos, False), HEAD_MULTIPLIERS)
        if hm is None:
            cur.fail(f"head multiplier {hm_token!r} outside {HEAD_MULTIPLIERS}", hm_pos)
        return LayerGene(block, multiplier, heads=heads, head_multiplier=hm)

    r_token, r_pos = fields[2]
    repeats = _parse_number(cur, r_token, "r", r_pos, True)
    if repeats not in REPEATS:
        cur.fail(f"repeats {repeats} outside {REPEATS}", r_pos)
    return LayerGene(block, multiplier, repeats=repeats)


def parse(text: str) -> Genome:
    """解析 ENC|ChN|L1:...|L4:... 格式的基因串，错误信息带字符位置"""
    cur = _Cursor(text)
    parts = cur.segments(text.strip(), "|", 0)
    if len(parts) != 2 + NUM_LAYERS:
        cur.fail(f"expected {2 + NUM_LAYERS} '|'-separated sections, got {len(parts)}", len(text))
    enc_token, enc_pos = parts[0]
    try:
        encoding = Encoding(enc_token)
    except ValueError:
        cur.fail(f"unknown encoding {enc_token!r}", enc_pos)
    stem_token, stem_pos = parts[1]
    stem_ch = _parse_number(cur, stem_token, "Ch", stem_pos, True)
    if stem_ch not in STEM_CHANNELS:
        cur.fail(f"stem channels {stem_ch} outside {STEM_CHANNELS}", stem_pos)
    layers = tuple(_parse_layer(cur, token, pos, i) for i, (token, pos) in enumerate(parts[2:], start=1))
    return Genome(encoding, stem_ch, layers)


# ---------------------------------------------------------------- 设计空间规模

def design_space_size(space: DesignSpace = DEFAULT_SPACE) -> int:
    """解析计算组合总数：|编码|·|STEM|·Π_层 Σ_块 该块的取值组合数"""
    total = len(space.encodings) * len(space.stem_channels)
    for layer_blocks in space.blocks:
        total *= sum(space.block_choices(b) for b in layer_blocks)
    return total


def enumerate_space(space: DesignSpace) -> Iterator[Tuple[Encoding, int, Tuple[LayerGene, ...]]]:
    """逐一枚举设计空间中的点（仅用于小空间）"""
    def layers_from(i: int):
        if i == space.num_layers:
            yield ()
            return
        for gene in space.layer_options(i):
            for rest in layers_from(i + 1):
                yield (gene,) + rest

    for enc in space.encodings:
        for stem in space.stem_channels:
            for layers in layers_from(0):
                yield enc, stem, layers


# ---------------------------------------------------------------- 组成统计

def block_counts(g: Genome) -> Tuple[int, ...]:
    """按 BLOCK_ORDER 统计每种块的层数"""
    return tuple(sum(1 for b in g.blocks if b is kind) for kind in BLOCK_ORDER)


def composition_class(g: Genome) -> str:
    """同构模型返回块名，否则返回 heterogeneous"""
    kinds = set(g.blocks)
    return next(iter(kinds)).value if len(kinds) == 1 else "heterogeneous"


# 公开的搜索所得骨干网络（通道阶梯可由设计空间乘子复现）
FIXTURES = {
    "3M": "SHIST|Ch16|L1:maxvit,m2.00,r1|L2:mamba,m1.50,h1,hm1.0|L3:c2f,m1.75,r3|L4:wavemlp,m1.33,r3",
    "5M": "SHIST|Ch24|L1:maxvit,m1.66,r1|L2:c2f,m1.75,r3|L3:mamba,m1.00,h2,hm1.0|L4:wavemlp,m2.00,r3",
    "10M": "SHIST|Ch24|L1:mamba,m2.00,h2,hm1.0|L2:c2f,m1.75,r3|L3:wavemlp,m1.75,r3|L4:maxvit,m1.25,r1",
}

REFERENCE_PARAMS = {"3M": 3.0e6, "5M": 4.9e6, "10M": 7.2e6}
