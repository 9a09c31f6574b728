"""
秩相关与代理-精度基准分析

- Kendall tau-b（含并列校正）与 Spearman（中位秩）相关
- Zen / MACs 权重扫描
- 按编码分组的代理相关性报告、按块组成的汇总
- 同一架构在不同编码下的mAP领先统计
- 带预设系数的合成基准表（真实mAP需要训练，不在本项目范围内）
"""

import math
import warnings
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats
from sklearn.preprocessing import minmax_scale

from .blocks import cost_full_model
from .events import Encoding
from .genome import DEFAULT_SPACE, DesignSpace, composition_class, design_space_size, parse, sample, serialize
from .tensorcore import Rng
from ..utils.exceptions import (
    BenchmarkSchemaError,
    ConfigurationError,
    GenomeParseError,
    TensorShapeError,
    ERROR_CODES,
)
from ..utils.logger import get_logger
from ..utils.validators import BenchmarkValidator

BENCHMARK_COLUMNS = ["genome", "encoding", "zen", "macs", "params", "ntk_cond", "map50"]
REPORT_PROXIES = ("zen", "macs", "params", "ntk_cond")
OVERALL = "overall"


# ---------------------------------------------------------------- 相关系数

def _paired(x: Sequence[float], y: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    a = np.asarray(x, dtype=np.float64)
    b = np.asarray(y, dtype=np.float64)
    if a.ndim != 1 or a.shape != b.shape:
        raise TensorShapeError(
            f"Correlation inputs must be equal-length vectors, got {a.shape} and {b.shape}",
            ERROR_CODES["TENSOR_SHAPE_MISMATCH"],
            {"x": list(a.shape), "y": list(b.shape)}
        )
    if len(a) < 2:
        raise TensorShapeError(
            f"Correlation needs at least 2 observations, got {len(a)}",
            ERROR_CODES["TENSOR_INVALID_ARGUMENT"],
            {"n": len(a)}
        )
    return a, b


def _all_tied(v: np.ndarray) -> bool:
    return bool(np.all(v == v[0]))


def kendall_tau(x: Sequence[float], y: Sequence[float]) -> float:
    """
    Kendall tau-b：(nc - nd) / sqrt((n0 - n1)(n0 - n2))

    任一向量全部并列时无定义，返回NaN。
    """
    a, b = _paired(x, y)
    if _all_tied(a) or _all_tied(b):
        return math.nan
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return float(stats.kendalltau(a, b, variant="b").statistic)


def spearman_r(x: Sequence[float], y: Sequence[float]) -> float:
    """中位秩的Pearson相关；秩方差为0时返回NaN"""
    a, b = _paired(x, y)
    if _all_tied(a) or _all_tied(b):
        return math.nan
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return float(stats.spearmanr(a, b).statistic)


# ---------------------------------------------------------------- 基准表

@dataclass(frozen=True)
class BenchmarkRow:
    genome: str
    encoding: str
    zen: float
    macs: int
    params: int
    ntk_cond: Optional[float]
    map50: float

    @property
    def key(self) -> Tuple[str, str]:
        return self.genome, self.encoding


_ENCODING_NAMES = tuple(e.value for e in Encoding)


def _check_encoding(row: BenchmarkRow, line: int):
    """encoding列必须是已知编码，且与基因串自带的编码一致"""
    try:
        g = parse(row.genome)
    except GenomeParseError as e:
        raise BenchmarkSchemaError(f"line {line}: {e.message}", ERROR_CODES["BENCHMARK_INVALID_VALUE"],
                                   {"line": line, "genome": row.genome})
    if row.encoding not in _ENCODING_NAMES:
        raise BenchmarkSchemaError(
            f"line {line}: unknown encoding {row.encoding!r}, expected one of {_ENCODING_NAMES}",
            ERROR_CODES["BENCHMARK_INVALID_VALUE"],
            {"line": line, "encoding": row.encoding}
        )
    if row.encoding != g.encoding.value:
        raise BenchmarkSchemaError(
            f"line {line}: encoding column {row.encoding} disagrees with genome encoding {g.encoding.value}",
            ERROR_CODES["BENCHMARK_INVALID_VALUE"],
            {"line": line, "encoding": row.encoding, "genome": row.genome}
        )


@dataclass(frozen=True)
class BenchmarkTable:
    """
    代理-精度基准表

    行号按CSV计（表头为第1行），用于错误定位。
    """
    rows: Tuple[BenchmarkRow, ...]

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))
        seen: Dict[Tuple[str, str], int] = {}
        for index, row in enumerate(self.rows):
            line = index + 2
            _check_encoding(row, line)
            BenchmarkValidator.validate_map50(row.map50, line)
            BenchmarkValidator.validate_count("macs", row.macs, line)
            BenchmarkValidator.validate_count("params", row.params, line)
            if row.key in seen:
                raise BenchmarkSchemaError(
                    f"Duplicate (genome, encoding) key at line {line}, first seen at line {seen[row.key]}",
                    ERROR_CODES["BENCHMARK_DUPLICATE_KEY"],
                    {"line": line, "first_line": seen[row.key], "genome": row.genome, "encoding": row.encoding}
                )
            seen[row.key] = line

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        """取一列为float64数组，ntk_cond缺失记为NaN"""
        values = [getattr(row, name) for row in self.rows]
        return np.array([math.nan if v is None else v for v in values], dtype=np.float64)

    def encodings(self) -> List[str]:
        return sorted({row.encoding for row in self.rows})

    def subset(self, encoding: str) -> "BenchmarkTable":
        return BenchmarkTable(tuple(row for row in self.rows if row.encoding == encoding))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([
            {"genome": r.genome, "encoding": r.encoding, "zen": r.zen, "macs": r.macs,
             "params": r.params, "ntk_cond": r.ntk_cond, "map50": r.map50}
            for r in self.rows
        ], columns=BENCHMARK_COLUMNS)


def normalize_column(values: np.ndarray) -> np.ndarray:
    """表内min-max归一化；常数列为0.5，非有限值为0"""
    out = np.zeros(len(values), dtype=np.float64)
    valid = np.isfinite(values)
    if not valid.any():
        return out
    finite = values[valid]
    if finite.min() == finite.max():
        out[valid] = 0.5
    else:
        out[valid] = minmax_scale(finite)
    return out


# ---------------------------------------------------------------- 权重扫描

@dataclass(frozen=True)
class SweepRow:
    w_zen: float
    w_macs: float
    tau: float
    rho: float


@dataclass(frozen=True)
class SweepResult:
    rows: Tuple[SweepRow, ...]
    best: SweepRow

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([vars(r) for r in self.rows], columns=["w_zen", "w_macs", "tau", "rho"])


def _sweep_steps(step: float) -> int:
    if not isinstance(step, (int, float)) or not 0.0 < step <= 1.0:
        raise ConfigurationError(
            f"Invalid sweep step {step!r}: must lie in (0, 1]",
            ERROR_CODES["INVALID_CONFIG_VALUE"],
            {"step": step}
        )
    count = round(1.0 / step)
    if abs(count * step - 1.0) > 1e-9:
        raise ConfigurationError(
            f"Invalid sweep step {step!r}: must divide 1",
            ERROR_CODES["INVALID_CONFIG_VALUE"],
            {"step": step}
        )
    return count


def weight_sweep(table: BenchmarkTable, step: float = 0.1) -> SweepResult:
    """
    对 w ∈ {0, step, ..., 1}：组合分 = w·zen_norm + (1-w)·macs_norm，与map50求两种相关

    最优行按 tau 最大选取（其次 rho），并列时取较小的 w。
    """
    if len(table) == 0:
        raise BenchmarkSchemaError("Weight sweep needs a nonempty benchmark table",
                                   ERROR_CODES["BENCHMARK_SCHEMA_VIOLATION"])
    count = _sweep_steps(step)
    zen = normalize_column(table.column("zen"))
    macs = normalize_column(table.column("macs"))
    map50 = table.column("map50")

    rows = []
    for i in range(count + 1):
        w = i / count
        combined = w * zen + (1.0 - w) * macs
        rows.append(SweepRow(w, 1.0 - w, kendall_tau(combined, map50), spearman_r(combined, map50)))

    def rank_key(item):
        index, row = item
        tau = row.tau if math.isfinite(row.tau) else -math.inf
        rho = row.rho if math.isfinite(row.rho) else -math.inf
        return tau, rho, -index

    best = max(enumerate(rows), key=rank_key)[1]
    get_logger().info("权重扫描完成", {"rows": len(rows), "best_w_zen": best.w_zen, "best_tau": best.tau})
    return SweepResult(tuple(rows), best)


# ---------------------------------------------------------------- 代理报告

@dataclass(frozen=True)
class ReportEntry:
    proxy: str
    group: str
    n: int
    tau: float
    rho: float
    degenerate: bool


@dataclass(frozen=True)
class ProxyReport:
    entries: Tuple[ReportEntry, ...]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([vars(e) for e in self.entries],
                            columns=["proxy", "group", "n", "tau", "rho", "degenerate"])

    def matrix(self, statistic: str = "tau") -> pd.DataFrame:
        """proxy × group 的相关矩阵"""
        frame = self.to_frame()
        return frame.pivot(index="proxy", columns="group", values=statistic).reindex(list(REPORT_PROXIES))

    def to_text(self) -> str:
        lines = []
        for statistic, title in (("tau", "Kendall tau-b"), ("rho", "Spearman rho")):
            lines.append(f"{title} vs map50")
            lines.append(self.matrix(statistic).to_string(float_format=lambda v: f"{v:.4f}", na_rep="n/a"))
            lines.append("")
        flagged = [e for e in self.entries if e.degenerate]
        if flagged:
            lines.append("degenerate groups: " + ", ".join(f"{e.proxy}/{e.group}(n={e.n})" for e in flagged))
        return "\n".join(lines).rstrip() + "\n"


def _report_entry(proxy: str, group: str, table: BenchmarkTable) -> ReportEntry:
    x = table.column(proxy)
    y = table.column("map50")
    mask = np.isfinite(x)
    x, y = x[mask], y[mask]
    if len(x) < 2:
        return ReportEntry(proxy, group, len(x), math.nan, math.nan, True)
    tau, rho = kendall_tau(x, y), spearman_r(x, y)
    return ReportEntry(proxy, group, len(x), tau, rho, not (math.isfinite(tau) and math.isfinite(rho)))


def proxy_report(table: BenchmarkTable) -> ProxyReport:
    """每个代理在各编码分组及整体上与map50的 (tau, rho)；退化分组只标记不报错"""
    groups = [(enc, table.subset(enc)) for enc in table.encodings()] + [(OVERALL, table)]
    entries = [_report_entry(proxy, name, sub) for proxy in REPORT_PROXIES for name, sub in groups]
    degenerate = sum(1 for e in entries if e.degenerate)
    if degenerate:
        get_logger().warning("部分分组相关性退化", {"count": degenerate})
    return ProxyReport(tuple(entries))


def composition_report(table: BenchmarkTable) -> pd.DataFrame:
    """按块组成（同构块类型 / heterogeneous）汇总样本数、平均map50与平均Zen"""
    frame = table.to_frame()
    frame["composition"] = [composition_class(parse(g)) for g in frame["genome"]]
    return (frame.groupby("composition")
            .agg(n=("map50", "size"), mean_map50=("map50", "mean"), mean_zen=("zen", "mean"))
            .reset_index())


def architecture_key(genome: str) -> str:
    """去掉编码字段后的基因串，同一骨干在不同编码下共享此键"""
    return genome.split("|", 1)[1] if "|" in genome else genome


def format_lead_report(table: BenchmarkTable) -> pd.DataFrame:
    """
    每个在至少两种编码下都有结果的架构，统计map50最高的编码

    并列时取 Encoding 声明顺序中靠前者。share 为领先次数占可比架构数的比例。
    """
    order = {name: i for i, name in enumerate(_ENCODING_NAMES)}
    frame = table.to_frame()
    frame["architecture"] = [architecture_key(g) for g in frame["genome"]]
    frame["order"] = [order[e] for e in frame["encoding"]]

    leads = {name: 0 for name in _ENCODING_NAMES}
    compared = 0
    for _, group in frame.groupby("architecture", sort=True):
        if group["encoding"].nunique() < 2:
            continue
        compared += 1
        best = group.sort_values(["map50", "order"], ascending=[False, True]).iloc[0]
        leads[best["encoding"]] += 1

    get_logger().info("编码领先统计", {"architectures": compared, "leads": leads})
    return pd.DataFrame({
        "encoding": list(leads),
        "leads": list(leads.values()),
        "share": [count / compared if compared else 0.0 for count in leads.values()],
    })


# ---------------------------------------------------------------- 合成基准

PLANTED_TARGETS = ("weights", "zen", "macs", "ntk_anti")


def synthesize_benchmark(n: int, rng: Rng, target: str = "weights", w_zen: float = 0.6,
                         w_macs: float = 0.4, noise: float = 0.02, height: int = 64, width: int = 64,
                         space: DesignSpace = DEFAULT_SPACE) -> BenchmarkTable:
    """
    生成带预设信号的合成基准表

    基因随机采样，macs/params 取自解析成本模型，zen 与 ntk_cond 为随机数；
    map50 按 target 构造：
        weights  -> w_zen·zen_norm + w_macs·macs_norm + N(0, noise²)
        zen      -> zen_norm
        macs     -> macs_norm
        ntk_anti -> 1 - ntk_norm + N(0, noise²)
    结果截断到 [0, 1]。
    """
    if target not in PLANTED_TARGETS:
        raise ConfigurationError(
            f"Unknown planted target {target!r}, expected one of {PLANTED_TARGETS}",
            ERROR_CODES["INVALID_CONFIG_VALUE"],
            {"target": target}
        )
    size = design_space_size(space)
    if n > size:
        raise ConfigurationError(
            f"Cannot draw {n} distinct genomes from a design space of {size}",
            ERROR_CODES["INVALID_CONFIG_VALUE"],
            {"count": n, "space_size": size}
        )
    genomes, keys = [], set()
    while len(genomes) < n:
        g = sample(rng, space)
        key = serialize(g)
        if key not in keys:
            keys.add(key)
            genomes.append(g)

    costs = [cost_full_model(g, height, width) for g in genomes]
    params = np.array([p for p, _ in costs], dtype=np.float64)
    macs = np.array([m for _, m in costs], dtype=np.float64)
    zen = 100.0 + 10.0 * rng.normal((n,)).astype(np.float64)
    ntk = rng.uniform((n,), 0.0, 1.0).astype(np.float64)
    eps = noise * rng.normal((n,)).astype(np.float64)

    zen_norm, macs_norm, ntk_norm = normalize_column(zen), normalize_column(macs), normalize_column(ntk)
    if target == "weights":
        map50 = w_zen * zen_norm + w_macs * macs_norm + eps
    elif target == "zen":
        map50 = zen_norm
    elif target == "macs":
        map50 = macs_norm
    else:
        map50 = 1.0 - ntk_norm + eps
    map50 = np.clip(map50, 0.0, 1.0)

    rows = [
        BenchmarkRow(serialize(g), g.encoding.value, float(zen[i]), int(macs[i]), int(params[i]),
                     float(ntk[i]), float(map50[i]))
        for i, g in enumerate(genomes)
    ]
    return BenchmarkTable(tuple(rows))


# ---------------------------------------------------------------- gnuplot 数据

def _write_dat(frame: pd.DataFrame, path: str, title: str):
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# {title}\n")
        f.write("# " + " ".join(frame.columns) + "\n")
        frame.to_csv(f, sep=" ", header=False, index=False, na_rep="nan")


def write_sweep_dat(result: SweepResult, path: str):
    _write_dat(result.to_frame(), path, "weight sweep: w_zen w_macs tau rho")


def write_report_dat(report: ProxyReport, path: str, statistic: str = "tau"):
    """每行一个代理，列为各分组的相关系数"""
    matrix = report.matrix(statistic).reset_index()
    _write_dat(matrix, path, f"{statistic} by proxy and group")
