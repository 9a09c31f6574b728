"""
基准表CSV读写

表头严格为 genome,encoding,zen,macs,params,ntk_cond,map50；ntk_cond 可为空。
浮点数按 repr 写出，读写往返不丢精度。
"""

import math
import os
from typing import Optional

import pandas as pd

from ..core.stats import BENCHMARK_COLUMNS, BenchmarkRow, BenchmarkTable
from ..utils.exceptions import BenchmarkSchemaError, ERROR_CODES


def _float(value: str, name: str, line: int, path: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise BenchmarkSchemaError(
            f"{path}:{line}: column {name} is not a number: {value!r}",
            ERROR_CODES["BENCHMARK_INVALID_VALUE"],
            {"path": path, "line": line, "column": name, "value": value}
        )


def _optional_float(value: str, name: str, line: int, path: str) -> Optional[float]:
    return None if value.strip() == "" else _float(value, name, line, path)


def read_benchmark(path: str) -> BenchmarkTable:
    """
    读取基准表

    Raises:
        BenchmarkSchemaError: 表头不符、数值非法、重复键（错误信息带行号）
    """
    if not os.path.exists(path):
        raise BenchmarkSchemaError(f"Benchmark file not found: {path}",
                                   ERROR_CODES["BENCHMARK_SCHEMA_VIOLATION"], {"path": path})
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise BenchmarkSchemaError(f"{path}: missing header", ERROR_CODES["BENCHMARK_SCHEMA_VIOLATION"],
                                   {"path": path, "line": 1})
    header = list(frame.columns)
    if header != BENCHMARK_COLUMNS:
        raise BenchmarkSchemaError(
            f"{path}:1: header must be {','.join(BENCHMARK_COLUMNS)}, got {','.join(header)}",
            ERROR_CODES["BENCHMARK_SCHEMA_VIOLATION"],
            {"path": path, "line": 1, "missing": [c for c in BENCHMARK_COLUMNS if c not in header]}
        )

    rows = []
    for index, record in enumerate(frame.itertuples(index=False)):
        line = index + 2
        macs = _float(record.macs, "macs", line, path)
        params = _float(record.params, "params", line, path)
        rows.append(BenchmarkRow(
            genome=record.genome,
            encoding=record.encoding,
            zen=_float(record.zen, "zen", line, path),
            macs=int(macs) if math.isfinite(macs) and macs == int(macs) else macs,
            params=int(params) if math.isfinite(params) and params == int(params) else params,
            ntk_cond=_optional_float(record.ntk_cond, "ntk_cond", line, path),
            map50=_float(record.map50, "map50", line, path),
        ))
    return BenchmarkTable(tuple(rows))


def write_benchmark(table: BenchmarkTable, path: str):
    frame = pd.DataFrame([
        {
            "genome": r.genome,
            "encoding": r.encoding,
            "zen": repr(float(r.zen)),
            "macs": str(int(r.macs)),
            "params": str(int(r.params)),
            "ntk_cond": "" if r.ntk_cond is None else repr(float(r.ntk_cond)),
            "map50": repr(float(r.map50)),
        }
        for r in table.rows
    ], columns=BENCHMARK_COLUMNS)
    frame.to_csv(path, index=False)
