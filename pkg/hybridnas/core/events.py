"""
事件流建模与稠密编码

事件 e = (t, x, y, p)，按固定时间窗口切分后编码为 VTEI / MDES / SHIST / TAF 张量。
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, NamedTuple, Optional

import numpy as np

from .tensorcore import Tensor
from ..utils.exceptions import (
    EventFormatError,
    WindowOrderError,
    TensorShapeError,
    ERROR_CODES,
)

# 默认传感器几何（DAVIS346）
DEFAULT_WIDTH = 346
DEFAULT_HEIGHT = 260
DEFAULT_BINS = 5
DEFAULT_WINDOW_US = 40_000

EVENT_DTYPE = np.dtype([("t_us", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "i1")])

# 编码按int64计算时间差，时间戳不得达到2^63
MAX_TIMESTAMP_US = 2 ** 63 - 1

# 小于1的最大float32，TAF年龄的上界
_AGE_CEILING = float(np.nextafter(np.float32(1.0), np.float32(0.0)))


class Encoding(str, Enum):
    """事件编码格式"""
    VTEI = "VTEI"
    MDES = "MDES"
    SHIST = "SHIST"
    TAF = "TAF"

    @classmethod
    def from_name(cls, name: str) -> "Encoding":
        try:
            return cls(name.upper())
        except ValueError:
            raise EventFormatError(
                f"Unknown encoding format: {name!r}",
                ERROR_CODES["UNKNOWN_EVENT_FORMAT"],
                {"format": name}
            )

    def input_channels(self, bins: int) -> int:
        """骨干网络STEM的输入通道数"""
        return bins if self in (Encoding.VTEI, Encoding.MDES) else 2 * bins


class EventRecord(NamedTuple):
    t_us: int
    x: int
    y: int
    p: int


def records_to_array(records: Iterable[EventRecord]) -> np.ndarray:
    rows = [tuple(r) for r in records]
    return np.array(rows, dtype=EVENT_DTYPE) if rows else np.empty(0, dtype=EVENT_DTYPE)


@dataclass(frozen=True)
class EventWindow:
    """
    半开时间窗口 [t_a, t_b) 内的事件

    events 为 EVENT_DTYPE 结构化数组，按 t_us 非降序排列。
    """
    events: np.ndarray
    t_a: int
    t_b: int
    width: int = DEFAULT_WIDTH
    height: int = DEFAULT_HEIGHT

    def __post_init__(self):
        if self.t_b <= self.t_a:
            raise EventFormatError(
                f"Empty window bounds [{self.t_a}, {self.t_b})",
                ERROR_CODES["EVENT_OUT_OF_BOUNDS"],
                {"t_a": self.t_a, "t_b": self.t_b}
            )
        ev = self.events
        if ev.dtype != EVENT_DTYPE:
            object.__setattr__(self, "events", ev.astype(EVENT_DTYPE))
            ev = self.events
        if len(ev) == 0:
            return
        t = ev["t_us"]
        if t[0] < self.t_a or t[-1] >= self.t_b:
            raise EventFormatError(
                f"Events outside window [{self.t_a}, {self.t_b})",
                ERROR_CODES["EVENT_OUT_OF_BOUNDS"],
                {"t_first": int(t[0]), "t_last": int(t[-1])}
            )
        if np.any(t[1:] < t[:-1]):
            raise WindowOrderError(
                "Events within a window must be nondecreasing in t_us",
                ERROR_CODES["WINDOW_OUT_OF_ORDER"]
            )
        if ev["x"].max() >= self.width or ev["y"].max() >= self.height:
            raise EventFormatError(
                f"Event coordinates exceed sensor geometry {self.width}x{self.height}",
                ERROR_CODES["EVENT_OUT_OF_BOUNDS"]
            )
        if not np.isin(ev["p"], (-1, 1)).all():
            raise EventFormatError(
                "Polarity must be +1 or -1",
                ERROR_CODES["EVENT_INVALID_POLARITY"]
            )

    @classmethod
    def from_records(cls, records: Iterable[EventRecord], t_a: int, t_b: int,
                     width: int = DEFAULT_WIDTH, height: int = DEFAULT_HEIGHT) -> "EventWindow":
        return cls(records_to_array(records), t_a, t_b, width, height)

    def __len__(self) -> int:
        return len(self.events)

    def records(self) -> Iterator[EventRecord]:
        for t, x, y, p in self.events.tolist():
            yield EventRecord(t, x, y, p)


@dataclass(frozen=True)
class EncodedTensor:
    format: Encoding
    bins: int
    tensor: Tensor = field(repr=False)


def _check_bins(bins: int, name: str):
    if bins < 1:
        raise TensorShapeError(f"{name} must be >= 1, got {bins}", ERROR_CODES["TENSOR_INVALID_ARGUMENT"])


def _time_bins(w: EventWindow, bins: int) -> np.ndarray:
    """bin = clamp(floor((t - t_a) * bins / (t_b - t_a)), 0, bins - 1)"""
    offset = w.events["t_us"].astype(np.int64) - np.int64(w.t_a)
    return np.clip((offset * bins) // (w.t_b - w.t_a), 0, bins - 1)


def _last_occurrence(index: np.ndarray) -> np.ndarray:
    """每个取值最后一次出现的位置"""
    _, first_in_reversed = np.unique(index[::-1], return_index=True)
    return len(index) - 1 - first_in_reversed


def encode_vtei(w: EventWindow, B: int = DEFAULT_BINS) -> EncodedTensor:
    """VTEI：时间分箱后每个格子写入最后一个事件的极性"""
    _check_bins(B, "B")
    out = np.zeros((B, w.height, w.width), dtype=np.float32)
    if len(w):
        ev = w.events
        idx = (_time_bins(w, B) * w.height + ev["y"].astype(np.int64)) * w.width + ev["x"].astype(np.int64)
        last = _last_occurrence(idx)
        out.reshape(-1)[idx[last]] = ev["p"][last]
    return EncodedTensor(Encoding.VTEI, B, out)


def encode_mdes(w: EventWindow, B: int = DEFAULT_BINS) -> EncodedTensor:
    """MDES：第b层只看最后 N // 2^(b-1) 个事件，每个像素取最后事件，+1为255，-1为127"""
    _check_bins(B, "B")
    out = np.zeros((B, w.height, w.width), dtype=np.float32)
    n = len(w)
    ev = w.events
    pix = ev["y"].astype(np.int64) * w.width + ev["x"].astype(np.int64)
    values = np.where(ev["p"] > 0, np.float32(255), np.float32(127))
    for b in range(B):
        n_b = n >> b
        if n_b == 0:
            continue
        tail = pix[n - n_b:]
        last = _last_occurrence(tail) + (n - n_b)
        out[b].reshape(-1)[pix[last]] = values[last]
    return EncodedTensor(Encoding.MDES, B, out)


def encode_shist(w: EventWindow, T: int = DEFAULT_BINS) -> EncodedTensor:
    """SHIST：按(极性, 时间箱, y, x)计数，极性优先展平为2T通道，计数饱和于255"""
    _check_bins(T, "T")
    size = 2 * T * w.height * w.width
    if len(w):
        ev = w.events
        p_idx = (ev["p"] > 0).astype(np.int64)
        channel = p_idx * T + _time_bins(w, T)
        idx = (channel * w.height + ev["y"].astype(np.int64)) * w.width + ev["x"].astype(np.int64)
        counts = np.bincount(idx, minlength=size)
    else:
        counts = np.zeros(size, dtype=np.int64)
    out = np.minimum(counts, 255).astype(np.float32).reshape(2 * T, w.height, w.width)
    return EncodedTensor(Encoding.SHIST, T, out)


class TafEncoder:
    """
    TAF时间感知编码器

    每个(极性, 像素)维护深度为K的FIFO，保存最近K个事件的绝对时间戳，
    跨窗口持续存在。输出通道 p_idx*K + j 为第j新事件的归一化年龄
    (t_b - t_j)/(t_b - t_a)，截断到[0, 1)，空槽为-1。
    """

    def __init__(self, width: int = DEFAULT_WIDTH, height: int = DEFAULT_HEIGHT, K: int = DEFAULT_BINS):
        _check_bins(K, "K")
        self.width = width
        self.height = height
        self.K = K
        # [极性, 槽位, H, W]，-1表示空槽
        self._fifo = np.full((2, K, height, width), -1, dtype=np.int64)
        self._last_t_b: Optional[int] = None

    def reset(self):
        self._fifo.fill(-1)
        self._last_t_b = None

    def push_window(self, w: EventWindow, K: Optional[int] = None) -> EncodedTensor:
        if K is not None and K != self.K:
            raise TensorShapeError(
                f"TafEncoder was built with K={self.K}, got K={K}",
                ERROR_CODES["TENSOR_INVALID_ARGUMENT"]
            )
        if (w.width, w.height) != (self.width, self.height):
            raise TensorShapeError(
                f"Window geometry {w.width}x{w.height} does not match encoder {self.width}x{self.height}",
                ERROR_CODES["TENSOR_SHAPE_MISMATCH"],
                {"dimension": "geometry"}
            )
        if self._last_t_b is not None and w.t_a < self._last_t_b:
            raise WindowOrderError(
                f"Window [{w.t_a}, {w.t_b}) pushed after a window ending at {self._last_t_b}",
                ERROR_CODES["WINDOW_OUT_OF_ORDER"],
                {"t_a": w.t_a, "previous_t_b": self._last_t_b}
            )
        self._push_events(w)
        self._last_t_b = w.t_b
        return EncodedTensor(Encoding.TAF, self.K, self._ages(w))

    def _push_events(self, w: EventWindow):
        if not len(w):
            return
        K, H, W = self.K, self.height, self.width
        ev = w.events
        key = ((ev["p"] > 0).astype(np.int64) * H + ev["y"].astype(np.int64)) * W + ev["x"].astype(np.int64)
        counts = np.bincount(key, minlength=2 * H * W)

        # 旧事件整体后移 counts 个槽位，超出深度的丢弃
        old = self._fifo.transpose(1, 0, 2, 3).reshape(K, -1)
        new = np.full_like(old, -1)
        for j in range(K):
            src = j - counts
            keep = src >= 0
            new[j, keep] = old[src[keep], np.nonzero(keep)[0]]

        # 新事件：组内从尾部数的名次即槽位，0为最新
        order = np.argsort(key, kind="stable")
        sorted_key = key[order]
        ends = np.cumsum(counts)[sorted_key]
        rank_from_end = ends - 1 - np.arange(len(order))
        keep = rank_from_end < K
        new[rank_from_end[keep], sorted_key[keep]] = ev["t_us"][order][keep].astype(np.int64)

        self._fifo = new.reshape(K, 2, H, W).transpose(1, 0, 2, 3).copy()

    def _ages(self, w: EventWindow) -> Tensor:
        stamps = self._fifo.reshape(2 * self.K, self.height, self.width)
        empty = stamps < 0
        age = (w.t_b - stamps.astype(np.float64)) / float(w.t_b - w.t_a)
        age = np.clip(age, 0.0, _AGE_CEILING)
        return np.where(empty, -1.0, age).astype(np.float32)


def encode(w: EventWindow, fmt: Encoding, bins: int = DEFAULT_BINS,
           taf: Optional[TafEncoder] = None) -> EncodedTensor:
    """按格式分派编码；TAF需传入有状态的编码器"""
    if fmt is Encoding.VTEI:
        return encode_vtei(w, bins)
    if fmt is Encoding.MDES:
        return encode_mdes(w, bins)
    if fmt is Encoding.SHIST:
        return encode_shist(w, bins)
    if taf is None:
        taf = TafEncoder(w.width, w.height, bins)
    return taf.push_window(w, bins)


def window_split(stream: Iterable[EventRecord], t_window_us: int,
                 width: int = DEFAULT_WIDTH, height: int = DEFAULT_HEIGHT) -> Iterator[EventWindow]:
    """
    把事件流切成连续的半开窗口

    窗口起点对齐到首个事件时间向下取整到 t_window_us 的倍数；
    稀疏区间之间的空窗口同样输出。

    Args:
        stream: 按时间非降序的事件流
        t_window_us: 窗口长度（微秒）
        width: 传感器宽度
        height: 传感器高度
    """
    if t_window_us <= 0:
        raise TensorShapeError(
            f"t_window_us must be positive, got {t_window_us}",
            ERROR_CODES["TENSOR_INVALID_ARGUMENT"]
        )
    t_a: Optional[int] = None
    buffer = []
    previous = None
    for ev in stream:
        if previous is not None and ev.t_us < previous:
            raise WindowOrderError(
                f"Event stream not time-ordered: {ev.t_us} after {previous}",
                ERROR_CODES["WINDOW_OUT_OF_ORDER"],
                {"t_us": ev.t_us, "previous": previous}
            )
        if ev.t_us > MAX_TIMESTAMP_US - t_window_us:
            raise EventFormatError(
                f"Timestamp {ev.t_us} leaves no room for a {t_window_us} us window below 2^63",
                ERROR_CODES["EVENT_OUT_OF_BOUNDS"],
                {"field": "t_us", "value": ev.t_us}
            )
        previous = ev.t_us
        if t_a is None:
            t_a = (ev.t_us // t_window_us) * t_window_us
        while ev.t_us >= t_a + t_window_us:
            yield EventWindow.from_records(buffer, t_a, t_a + t_window_us, width, height)
            buffer = []
            t_a += t_window_us
        buffer.append(ev)
    if t_a is not None:
        yield EventWindow.from_records(buffer, t_a, t_a + t_window_us, width, height)
