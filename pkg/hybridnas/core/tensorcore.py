"""
前向计算张量引擎

基于numpy float32实现打分所需的全部算子，只做前向，不做自动求导。
conv2d / conv1d / linear 在 mac_counter() 上下文中累计权重乘法次数。
"""

import contextlib
import threading
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from ..utils.exceptions import TensorShapeError, ERROR_CODES

# 张量即float32的numpy数组，按行优先存储
Tensor = np.ndarray

BN_EPS = 1e-5
LN_EPS = 1e-5

IntPair = Union[int, Tuple[int, int]]


def as_tensor(data, shape: Optional[Sequence[int]] = None) -> Tensor:
    """把任意数组数据转换为连续的float32张量"""
    arr = np.ascontiguousarray(np.asarray(data, dtype=np.float32))
    if shape is not None:
        shape = tuple(int(d) for d in shape)
        if int(np.prod(shape)) != arr.size:
            raise TensorShapeError(
                f"Cannot view {arr.size} elements as shape {shape}",
                ERROR_CODES["TENSOR_SHAPE_MISMATCH"],
                {"shape": list(shape), "size": arr.size}
            )
        arr = arr.reshape(shape)
    return arr


class Rng:
    """
    可复现随机数发生器

    封装 numpy PCG64 位生成器；标准正态采样使用 numpy Generator 的 ziggurat
    算法（float64抽样后转为float32），同一种子在所有平台上得到相同序列。
    """

    algorithm = "PCG64/ziggurat"

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def normal(self, shape: Sequence[int]) -> Tensor:
        return self._gen.standard_normal(tuple(shape)).astype(np.float32)

    def uniform(self, shape: Sequence[int], low: float = 0.0, high: float = 1.0) -> Tensor:
        return self._gen.uniform(low, high, tuple(shape)).astype(np.float32)

    def integers(self, low: int, high: int) -> int:
        """[low, high) 内均匀整数"""
        return int(self._gen.integers(low, high))

    def choice(self, options: Sequence):
        return options[self.integers(0, len(options))]

    def spawn(self, *keys: int) -> "Rng":
        """派生子发生器，由(seed, keys)唯一确定"""
        seq = np.random.SeedSequence([self.seed, *[int(k) & 0xFFFFFFFF for k in keys]])
        return Rng(int(seq.generate_state(1, dtype=np.uint64)[0]))


# ---------------------------------------------------------------- MAC计数

_mac_state = threading.local()


class MacCount:
    def __init__(self):
        self.macs = 0


@contextlib.contextmanager
def mac_counter() -> Iterator[MacCount]:
    """统计上下文内所有权重乘法次数（线程局部，可嵌套）"""
    stack = getattr(_mac_state, "stack", None)
    if stack is None:
        stack = _mac_state.stack = []
    counter = MacCount()
    stack.append(counter)
    try:
        yield counter
    finally:
        stack.pop()


def _count_macs(n: int):
    stack = getattr(_mac_state, "stack", None)
    if stack:
        for counter in stack:
            counter.macs += int(n)


# ---------------------------------------------------------------- 卷积

def _pair(v: IntPair, name: str) -> Tuple[int, int]:
    if isinstance(v, (tuple, list)):
        if len(v) != 2:
            raise TensorShapeError(
                f"{name} must be an int or a pair, got {v!r}",
                ERROR_CODES["TENSOR_INVALID_ARGUMENT"]
            )
        return int(v[0]), int(v[1])
    return int(v), int(v)


def _shape_error(message: str, dim: str, **details) -> TensorShapeError:
    return TensorShapeError(message, ERROR_CODES["TENSOR_SHAPE_MISMATCH"], {"dimension": dim, **details})


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None,
           stride: IntPair = 1, pad: IntPair = 0, groups: int = 1) -> Tensor:
    """
    二维互相关卷积

    Args:
        x: 输入 [B, Cin, H, W]
        weight: 卷积核 [Cout, Cin/groups, kh, kw]
        bias: 偏置 [Cout]，可选
        stride: 步长（整数或(sh, sw)）
        pad: 零填充（整数或(ph, pw)）
        groups: 分组数

    Returns:
        输出 [B, Cout, H', W']，H' = floor((H + 2ph - kh) / sh) + 1
    """
    if x.ndim != 4:
        raise _shape_error(f"conv2d input must be 4-D [B,Cin,H,W], got shape {x.shape}", "x.ndim")
    if weight.ndim != 4:
        raise _shape_error(f"conv2d weight must be 4-D [Cout,Cin,kh,kw], got shape {weight.shape}", "weight.ndim")
    sh, sw = _pair(stride, "stride")
    ph, pw = _pair(pad, "pad")
    b, cin, h, w = x.shape
    cout, cin_g, kh, kw = weight.shape
    if groups < 1 or cin % groups or cout % groups:
        raise _shape_error(f"groups={groups} must divide Cin={cin} and Cout={cout}", "groups")
    if cin_g * groups != cin:
        raise _shape_error(
            f"Cin mismatch: input has {cin} channels, weight expects {cin_g * groups}", "Cin",
            input=cin, weight=cin_g * groups)
    if kh < 1 or kw < 1 or sh < 1 or sw < 1 or ph < 0 or pw < 0:
        raise TensorShapeError(
            f"Invalid conv2d geometry: kernel ({kh},{kw}) stride ({sh},{sw}) pad ({ph},{pw})",
            ERROR_CODES["TENSOR_INVALID_ARGUMENT"]
        )
    if h + 2 * ph < kh:
        raise _shape_error(f"H+2*pad={h + 2 * ph} smaller than kernel height {kh}", "H")
    if w + 2 * pw < kw:
        raise _shape_error(f"W+2*pad={w + 2 * pw} smaller than kernel width {kw}", "W")
    if bias is not None and bias.shape != (cout,):
        raise _shape_error(f"bias shape {bias.shape} does not match Cout={cout}", "Cout")

    ho = (h + 2 * ph - kh) // sh + 1
    wo = (w + 2 * pw - kw) // sw + 1

    if kh == 1 and kw == 1 and ph == 0 and pw == 0 and groups == 1:
        xs = x[:, :, ::sh, ::sw]
        y = np.tensordot(weight[:, :, 0, 0], xs, axes=([1], [1])).transpose(1, 0, 2, 3)
    else:
        xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x
        win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
        if groups == 1:
            y = np.tensordot(win, weight, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
        else:
            win = win.reshape(b, groups, cin_g, ho, wo, kh, kw)
            wg = weight.reshape(groups, cout // groups, cin_g, kh, kw)
            y = np.einsum("bgchwij,gocij->bgohw", win, wg, optimize=True).reshape(b, cout, ho, wo)
    y = np.ascontiguousarray(y, dtype=np.float32)
    if bias is not None:
        y += bias.reshape(1, cout, 1, 1)
    _count_macs(b * cout * ho * wo * cin_g * kh * kw)
    return y


def conv1d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None,
           pad: int = 0, groups: int = 1) -> Tensor:
    """一维卷积，x: [B, C, L]，weight: [Cout, C/groups, k]"""
    if x.ndim != 3:
        raise _shape_error(f"conv1d input must be 3-D [B,C,L], got shape {x.shape}", "x.ndim")
    if weight.ndim != 3:
        raise _shape_error(f"conv1d weight must be 3-D [Cout,Cin,k], got shape {weight.shape}", "weight.ndim")
    y = conv2d(x[:, :, None, :], weight[:, :, None, :], bias, stride=1, pad=(0, pad), groups=groups)
    return y[:, :, 0, :]


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """全连接：y = x @ W^T + b，weight: [out, in]，作用于最后一维"""
    if weight.ndim != 2:
        raise _shape_error(f"linear weight must be 2-D [out,in], got shape {weight.shape}", "weight.ndim")
    out_f, in_f = weight.shape
    if x.shape[-1] != in_f:
        raise _shape_error(
            f"linear in_features mismatch: input has {x.shape[-1]}, weight expects {in_f}", "in_features",
            input=x.shape[-1], weight=in_f)
    y = np.matmul(x, weight.T).astype(np.float32, copy=False)
    if bias is not None:
        if bias.shape != (out_f,):
            raise _shape_error(f"bias shape {bias.shape} does not match out_features={out_f}", "out_features")
        y = y + bias
    _count_macs(int(np.prod(x.shape[:-1])) * in_f * out_f)
    return y


# ---------------------------------------------------------------- 归一化

def batchnorm(x: Tensor, eps: float = BN_EPS) -> Tuple[Tensor, List[float]]:
    """
    批统计量归一化（无仿射参数）

    Returns:
        (y, sigmas)：y 逐通道零均值单位方差；sigmas 为归一化前每通道的 sqrt(var + eps)
    """
    if x.ndim != 4:
        raise _shape_error(f"batchnorm input must be 4-D [B,C,H,W], got shape {x.shape}", "x.ndim")
    b, c, h, w = x.shape
    if b * h * w < 2:
        raise TensorShapeError(
            f"batchnorm needs at least 2 values per channel, got B*H*W={b * h * w}",
            ERROR_CODES["TENSOR_INVALID_ARGUMENT"],
            {"dimension": "B*H*W"}
        )
    xd = x.astype(np.float64)
    mean = xd.mean(axis=(0, 2, 3), keepdims=True)
    var = ((xd - mean) ** 2).mean(axis=(0, 2, 3), keepdims=True)
    sigma = np.sqrt(var + eps)
    y = ((xd - mean) / sigma).astype(np.float32)
    return y, [float(s) for s in sigma.reshape(c)]


def layernorm(x: Tensor, eps: float = LN_EPS) -> Tensor:
    """最后一维上的层归一化（无仿射参数）"""
    xd = x.astype(np.float64)
    mean = xd.mean(axis=-1, keepdims=True)
    var = ((xd - mean) ** 2).mean(axis=-1, keepdims=True)
    return ((xd - mean) / np.sqrt(var + eps)).astype(np.float32)


# ---------------------------------------------------------------- 逐元素

def sigmoid(x: Tensor) -> Tensor:
    return expit(x).astype(np.float32, copy=False)


def silu(x: Tensor) -> Tensor:
    return (x * expit(x)).astype(np.float32, copy=False)


def tanh(x: Tensor) -> Tensor:
    return np.tanh(x).astype(np.float32, copy=False)


def relu(x: Tensor) -> Tensor:
    return np.maximum(x, np.float32(0))


def _check_axis(ndim: int, axis: int) -> int:
    if not -ndim <= axis < ndim:
        raise TensorShapeError(
            f"axis {axis} out of range for a {ndim}-D tensor",
            ERROR_CODES["TENSOR_AXIS_OUT_OF_RANGE"],
            {"axis": axis, "ndim": ndim}
        )
    return axis % ndim


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    axis = _check_axis(x.ndim, axis)
    z = x.astype(np.float64) - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return (e / e.sum(axis=axis, keepdims=True)).astype(np.float32)


def _broadcast(a: Tensor, b: Tensor, op: str):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise _shape_error(f"{op}: shapes {a.shape} and {b.shape} do not conform", "shape",
                           left=list(a.shape), right=list(b.shape))


def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast(a, b, "add")
    return np.add(a, b, dtype=np.float32)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _broadcast(a, b, "mul")
    return np.multiply(a, b, dtype=np.float32)


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    if not tensors:
        raise TensorShapeError("concat of an empty tensor list", ERROR_CODES["TENSOR_INVALID_ARGUMENT"])
    axis = _check_axis(tensors[0].ndim, axis)
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(t.shape[i] != ref[i] for i in range(len(ref)) if i != axis):
            raise _shape_error(f"concat: shape {t.shape} does not conform to {ref} off axis {axis}", "shape")
    return np.concatenate(tensors, axis=axis).astype(np.float32, copy=False)


def split(x: Tensor, axis: int, parts: Union[int, Sequence[int]]) -> List[Tensor]:
    """沿axis切分；parts为整数时等分，为列表时按给定长度切分"""
    axis = _check_axis(x.ndim, axis)
    n = x.shape[axis]
    if isinstance(parts, int):
        if parts < 1 or n % parts:
            raise _shape_error(f"split: axis length {n} not divisible into {parts} parts", "axis")
        sizes = [n // parts] * parts
    else:
        sizes = [int(s) for s in parts]
        if sum(sizes) != n or any(s < 0 for s in sizes):
            raise _shape_error(f"split: sizes {sizes} do not sum to axis length {n}", "axis")
    return [np.ascontiguousarray(p) for p in np.split(x, np.cumsum(sizes)[:-1], axis=axis)]


def maxpool2d(x: Tensor, k: int, stride: int = 1, pad: int = 0) -> Tensor:
    if x.ndim != 4:
        raise _shape_error(f"maxpool2d input must be 4-D, got shape {x.shape}", "x.ndim")
    if k < 1 or stride < 1 or pad < 0 or x.shape[2] + 2 * pad < k or x.shape[3] + 2 * pad < k:
        raise TensorShapeError(
            f"Invalid maxpool2d geometry k={k} stride={stride} pad={pad} for shape {x.shape}",
            ERROR_CODES["TENSOR_INVALID_ARGUMENT"]
        )
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)), constant_values=-np.inf) if pad else x
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    return np.ascontiguousarray(win.max(axis=(4, 5)), dtype=np.float32)


def avgpool_global(x: Tensor) -> Tensor:
    """[B, C, H, W] -> [B, C]"""
    if x.ndim != 4:
        raise _shape_error(f"avgpool_global input must be 4-D, got shape {x.shape}", "x.ndim")
    return x.mean(axis=(2, 3), dtype=np.float64).astype(np.float32)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise _shape_error(f"matmul: shapes {a.shape} and {b.shape} do not conform", "inner")
    return np.matmul(a, b).astype(np.float32, copy=False)


def frobenius_norm(x: Tensor) -> float:
    return float(np.sqrt(np.sum(np.square(x, dtype=np.float64))))


def is_finite(x: Tensor) -> bool:
    return bool(np.isfinite(x).all())
