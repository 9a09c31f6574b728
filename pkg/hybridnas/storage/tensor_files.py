"""
.ten张量文件与编码清单

.ten 格式（小端）：u32 维数，随后每维一个u32，最后是float32原始数据。
"""

import os
import struct
from typing import Dict, List

import numpy as np
import pandas as pd

from ..core.tensorcore import Tensor
from ..utils.exceptions import EventFormatError, ERROR_CODES

MANIFEST_COLUMNS = ["index", "t_a", "t_b", "n_events", "file"]


def write_tensor(tensor: Tensor, path: str):
    arr = np.ascontiguousarray(tensor, dtype="<f4")
    with open(path, "wb") as f:
        f.write(struct.pack("<I", arr.ndim))
        f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        f.write(arr.tobytes())


def read_tensor(path: str) -> Tensor:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 4:
        raise EventFormatError(f"{path}: byte 0: missing tensor header",
                               ERROR_CODES["EVENT_MALFORMED_RECORD"], {"path": path, "byte_offset": 0})
    (ndim,) = struct.unpack_from("<I", blob, 0)
    header = 4 + 4 * ndim
    if len(blob) < header:
        raise EventFormatError(f"{path}: byte 4: truncated shape header",
                               ERROR_CODES["EVENT_MALFORMED_RECORD"], {"path": path, "byte_offset": 4})
    shape = struct.unpack_from(f"<{ndim}I", blob, 4)
    expected = header + 4 * int(np.prod(shape, dtype=np.int64))
    if len(blob) != expected:
        raise EventFormatError(
            f"{path}: byte {header}: payload has {len(blob) - header} bytes, expected {expected - header}",
            ERROR_CODES["EVENT_MALFORMED_RECORD"], {"path": path, "byte_offset": header})
    return np.frombuffer(blob, dtype="<f4", offset=header).astype(np.float32).reshape(shape)


def write_manifest(rows: List[Dict], path: str):
    """写出窗口清单（零个窗口时只有表头）"""
    pd.DataFrame(rows, columns=MANIFEST_COLUMNS).to_csv(path, index=False)


def read_manifest(path: str) -> pd.DataFrame:
    if not os.path.exists(path):
        raise EventFormatError(f"Manifest not found: {path}", ERROR_CODES["EVENT_BAD_HEADER"], {"path": path})
    return pd.read_csv(path)
