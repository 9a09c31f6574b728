"""
事件文件读写

支持两种格式：
- csv：表头严格为 t_us,x,y,p
- evt：小端定长记录，每条16字节（u64 t_us, u16 x, u16 y, i8 p, 3字节零填充）

读取均为流式，不一次性加载整个文件。
"""

import csv
import os
from typing import Iterable, Iterator

import numpy as np

from ..core.events import MAX_TIMESTAMP_US, EventRecord
from ..utils.exceptions import EventFormatError, ERROR_CODES
from ..utils.validators import EventValidator

CSV_HEADER = ["t_us", "x", "y", "p"]
EVT_RECORD_SIZE = 16
EVT_DTYPE = np.dtype([("t_us", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "i1"), ("pad", "V3")])
EVENT_FORMATS = ("csv", "evt")

_CHUNK_RECORDS = 65536
_U16_LIMIT = 2 ** 16


def _check_format(fmt: str) -> str:
    fmt = fmt.lower()
    if fmt not in EVENT_FORMATS:
        raise EventFormatError(
            f"Unknown event file format: {fmt!r}",
            ERROR_CODES["UNKNOWN_EVENT_FORMAT"],
            {"format": fmt}
        )
    return fmt


def infer_format(path: str) -> str:
    """根据扩展名推断格式"""
    return _check_format(os.path.splitext(path)[1].lstrip("."))


def read_events(path: str, fmt: str = None) -> Iterator[EventRecord]:
    """
    流式读取事件文件

    Args:
        path: 文件路径
        fmt: csv 或 evt，为None时按扩展名推断

    Yields:
        EventRecord
    """
    fmt = _check_format(fmt) if fmt else infer_format(path)
    if fmt == "csv":
        yield from _read_csv(path)
    else:
        yield from _read_evt(path)


def _read_csv(path: str) -> Iterator[EventRecord]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != CSV_HEADER:
            raise EventFormatError(
                f"{path}: line 1: header must be exactly {','.join(CSV_HEADER)}",
                ERROR_CODES["EVENT_BAD_HEADER"],
                {"path": path, "line": 1, "header": header}
            )
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            location = f"{path}: line {line}"
            if len(row) != 4:
                raise EventFormatError(
                    f"{location}: expected 4 fields, got {len(row)}",
                    ERROR_CODES["EVENT_MALFORMED_ROW"],
                    {"path": path, "line": line}
                )
            try:
                t_us, x, y, p = (int(v) for v in row)
            except ValueError:
                raise EventFormatError(
                    f"{location}: non-integer field in {row}",
                    ERROR_CODES["EVENT_MALFORMED_ROW"],
                    {"path": path, "line": line}
                )
            EventValidator.validate_field_range("t_us", t_us, MAX_TIMESTAMP_US + 1, location)
            EventValidator.validate_field_range("x", x, _U16_LIMIT, location)
            EventValidator.validate_field_range("y", y, _U16_LIMIT, location)
            EventValidator.validate_polarity(p, location)
            yield EventRecord(t_us, x, y, p)


def _read_evt(path: str) -> Iterator[EventRecord]:
    offset = 0
    with open(path, "rb") as f:
        while True:
            chunk = f.read(EVT_RECORD_SIZE * _CHUNK_RECORDS)
            if not chunk:
                break
            if len(chunk) % EVT_RECORD_SIZE:
                bad = offset + (len(chunk) // EVT_RECORD_SIZE) * EVT_RECORD_SIZE
                raise EventFormatError(
                    f"{path}: byte {bad}: truncated record",
                    ERROR_CODES["EVENT_MALFORMED_RECORD"],
                    {"path": path, "byte_offset": bad}
                )
            records = np.frombuffer(chunk, dtype=EVT_DTYPE)
            late = np.nonzero(records["t_us"] > MAX_TIMESTAMP_US)[0]
            if len(late):
                at = offset + int(late[0]) * EVT_RECORD_SIZE
                raise EventFormatError(
                    f"{path}: byte {at}: t_us at or above 2^63",
                    ERROR_CODES["EVENT_OUT_OF_BOUNDS"],
                    {"path": path, "byte_offset": at}
                )
            bad_p = np.nonzero(~np.isin(records["p"], (-1, 1)))[0]
            raw = np.frombuffer(chunk, dtype=np.uint8).reshape(-1, EVT_RECORD_SIZE)
            bad_pad = np.nonzero(raw[:, 13:].any(axis=1))[0]
            if len(bad_p) or len(bad_pad):
                first = int(min(np.concatenate([bad_p, bad_pad])))
                at = offset + first * EVT_RECORD_SIZE
                raise EventFormatError(
                    f"{path}: byte {at}: invalid polarity or nonzero padding",
                    ERROR_CODES["EVENT_MALFORMED_RECORD"],
                    {"path": path, "byte_offset": at}
                )
            for t_us, x, y, p in zip(records["t_us"].tolist(), records["x"].tolist(),
                                     records["y"].tolist(), records["p"].tolist()):
                yield EventRecord(t_us, x, y, p)
            offset += len(chunk)


def write_events(stream: Iterable[EventRecord], path: str, fmt: str = None) -> int:
    """
    写出事件文件

    Returns:
        写出的事件数
    """
    fmt = _check_format(fmt) if fmt else infer_format(path)
    count = 0
    if fmt == "csv":
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for ev in stream:
                EventValidator.validate_polarity(ev.p, f"record {count}")
                writer.writerow([ev.t_us, ev.x, ev.y, ev.p])
                count += 1
        return count

    with open(path, "wb") as f:
        buffer = []
        for ev in stream:
            EventValidator.validate_polarity(ev.p, f"record {count}")
            buffer.append((ev.t_us, ev.x, ev.y, ev.p, b"\x00\x00\x00"))
            count += 1
            if len(buffer) >= _CHUNK_RECORDS:
                f.write(np.array(buffer, dtype=EVT_DTYPE).tobytes())
                buffer = []
        if buffer:
            f.write(np.array(buffer, dtype=EVT_DTYPE).tobytes())
    return count
