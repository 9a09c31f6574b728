"""
零样本代理指标

- Zen-Score：输入扰动的有限差分响应 + 各BN层标准差项
- NTK条件数：有限差分雅可比得到的核矩阵特征值比
- MACs / Params：整模型解析成本
- 多样性指数：四层块类型分布的均匀程度
"""

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from itertools import combinations
from typing import Callable, List, NamedTuple, Optional, Protocol, Sequence, Tuple

import numpy as np

from . import tensorcore as tc
from .blocks import ComputeGraph, build_graph, cost_full_model
from .genome import Genome, block_counts, serialize
from .tensorcore import Rng, Tensor
from ..utils.exceptions import HybridNASException, ProxyUnavailableError, ERROR_CODES
from ..utils.logger import get_logger
from ..utils.validators import ConfigValidator

# 四层、四种块时成对差之和的最大值（在 [4,0,0,0] 处取得）
DIVERSITY_NORMALIZER = 12

_NTK_INPUT_STREAM = 0x4E544B


@dataclass(frozen=True)
class ScoreConfig:
    """打分配置，默认 64×64、batch 8、4个种子取平均"""
    batch: int = 8
    height: int = 64
    width: int = 64
    noise_alpha: float = 0.01
    seeds: Tuple[int, ...] = (0, 1, 2, 3)
    graph_seed: int = 0
    bins: int = 5
    num_classes: int = 1
    ntk_probe_count: int = 8
    ntk_fd_step: float = 1e-3
    ntk_max_params: int = 50_000
    ntk_reciprocal: bool = False

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        ConfigValidator.validate_positive_int("batch", self.batch)
        ConfigValidator.validate_resolution(self.height, self.width)
        ConfigValidator.validate_positive_float("noise_alpha", self.noise_alpha)
        ConfigValidator.validate_positive_int("zen_seeds", len(self.seeds))
        ConfigValidator.validate_positive_int("bins", self.bins)
        ConfigValidator.validate_positive_int("num_classes", self.num_classes)
        ConfigValidator.validate_positive_int("ntk_probe_count", self.ntk_probe_count)
        ConfigValidator.validate_positive_float("ntk_fd_step", self.ntk_fd_step)
        ConfigValidator.validate_positive_int("ntk_max_params", self.ntk_max_params)


@dataclass(frozen=True)
class ProxyVector:
    zen: float
    macs: int
    params: int
    ntk_cond: Optional[float]
    diversity: float
    zen_degenerate: bool = field(default=False)

    def to_dict(self) -> dict:
        return asdict(self)


class ZenResult(NamedTuple):
    score: float
    degenerate: bool


# ---------------------------------------------------------------- Zen-Score

def zen_score_from_inputs(graph: ComputeGraph, x: Tensor, noise: Tensor, alpha: float) -> ZenResult:
    """
    单组输入上的Zen-Score

    Δ 为 f(x) 与 f(x + α·ε) 之差逐样本Frobenius范数的批平均；
    得分 = log Δ + Σ_BN层 mean_c log σ_c（σ取自干净输入x的前向）。
    """
    y, trace = graph.forward_trace(x)
    y_noisy, _ = graph.forward(tc.add(x, np.float32(alpha) * noise))
    diff = tc.add(y, -y_noisy)
    delta = float(np.mean([tc.frobenius_norm(d) for d in diff]))
    if delta == 0.0:
        return ZenResult(-math.inf, True)
    bn_term = sum(float(np.mean(np.log(s))) for s in trace.bn_sigmas)
    return ZenResult(math.log(delta) + bn_term, False)


def zen_score_detail(graph: ComputeGraph, cfg: ScoreConfig) -> ZenResult:
    scores = []
    shape = (cfg.batch, graph.in_channels, graph.height, graph.width)
    for seed in cfg.seeds:
        rng = Rng(seed)
        x = rng.normal(shape)
        noise = rng.normal(shape)
        result = zen_score_from_inputs(graph, x, noise, cfg.noise_alpha)
        if result.degenerate:
            return result
        scores.append(result.score)
    return ZenResult(float(np.mean(scores)), False)


def zen_score(graph: ComputeGraph, cfg: ScoreConfig) -> float:
    """多个种子上的平均Zen-Score；Δ = 0 时返回 -inf"""
    return zen_score_detail(graph, cfg).score


# ---------------------------------------------------------------- NTK

class ParametricModel(Protocol):
    """可做有限差分NTK的模型接口"""

    def flat_params(self) -> np.ndarray: ...

    def with_params(self, flat: np.ndarray) -> "ParametricModel": ...

    def scalar_outputs(self, xs) -> np.ndarray: ...


class ScalarLinearModel:
    """标量线性模型 f(x) = w·x（float64），解析NTK为 X X^T"""

    def __init__(self, weights: Sequence[float]):
        self.weights = np.asarray(weights, dtype=np.float64)

    def flat_params(self) -> np.ndarray:
        return self.weights.copy()

    def with_params(self, flat: np.ndarray) -> "ScalarLinearModel":
        return ScalarLinearModel(flat)

    def scalar_outputs(self, xs) -> np.ndarray:
        return np.asarray(xs, dtype=np.float64) @ self.weights


def ntk_gram(model: ParametricModel, inputs, step: float) -> np.ndarray:
    """
    中心差分雅可比 J（每行对应一个探针输入），返回 Θ = J J^T

    Args:
        model: 参数化模型
        inputs: m 个探针输入（模型一次前向处理）
        step: 差分步长
    """
    theta = model.flat_params().astype(np.float64)
    m = len(inputs)
    jac = np.empty((m, theta.size), dtype=np.float64)
    for i in range(theta.size):
        plus = theta.copy()
        plus[i] += step
        minus = theta.copy()
        minus[i] -= step
        f_plus = np.asarray(model.with_params(plus).scalar_outputs(inputs), dtype=np.float64)
        f_minus = np.asarray(model.with_params(minus).scalar_outputs(inputs), dtype=np.float64)
        jac[:, i] = (f_plus - f_minus) / (2.0 * step)
    return jac @ jac.T


def ntk_cond_from_gram(gram: np.ndarray, reciprocal: bool = False) -> float:
    """λ_lowest / λ_highest（reciprocal为真时取倒数），特征值由对称特征求解器给出"""
    eig = np.linalg.eigvalsh((gram + gram.T) / 2.0)
    lowest, highest = float(eig[0]), float(eig[-1])
    if reciprocal:
        return highest / lowest if lowest != 0.0 else math.inf
    return lowest / highest if highest != 0.0 else math.nan


def ntk_cond_strict(graph: ComputeGraph, cfg: ScoreConfig) -> float:
    """
    计算图的NTK条件数

    Raises:
        ProxyUnavailableError: 参数量超过 cfg.ntk_max_params，有限差分不可行
    """
    n_params = graph.param_count()
    if n_params > cfg.ntk_max_params:
        raise ProxyUnavailableError(
            f"NTK needs {n_params} finite-difference columns, budget is {cfg.ntk_max_params}",
            ERROR_CODES["NTK_UNAVAILABLE"],
            {"params": n_params, "budget": cfg.ntk_max_params}
        )
    rng = Rng(cfg.seeds[0]).spawn(_NTK_INPUT_STREAM)
    inputs = rng.normal((cfg.ntk_probe_count, graph.in_channels, graph.height, graph.width))
    return ntk_cond_from_gram(ntk_gram(graph, inputs, cfg.ntk_fd_step), cfg.ntk_reciprocal)


def ntk_cond(graph: ComputeGraph, cfg: ScoreConfig) -> Optional[float]:
    """同 ntk_cond_strict，但不可用时返回None"""
    try:
        return ntk_cond_strict(graph, cfg)
    except ProxyUnavailableError as e:
        get_logger().debug("NTK超出参数预算，跳过", e.details)
        return None


# ---------------------------------------------------------------- 多样性

def diversity_from_counts(counts: Sequence[int]) -> float:
    pairwise = sum(abs(a - b) for a, b in combinations(counts, 2))
    return 1.0 - pairwise / DIVERSITY_NORMALIZER


def diversity_index(g: Genome) -> float:
    """D = 1 - Σ_{i<j}|B_i - B_j| / 12，B为各块类型的层数"""
    return diversity_from_counts(block_counts(g))


# ---------------------------------------------------------------- 汇总

def profile(g: Genome, cfg: ScoreConfig) -> ProxyVector:
    """在cfg几何下构建计算图并计算全部代理指标"""
    logger = get_logger()
    started = time.perf_counter()
    graph = build_graph(g, cfg.height, cfg.width, cfg.graph_seed, cfg.bins)
    zen = zen_score_detail(graph, cfg)
    params, macs = cost_full_model(g, cfg.height, cfg.width, cfg.bins, cfg.num_classes)
    vector = ProxyVector(
        zen=zen.score,
        macs=macs,
        params=params,
        ntk_cond=ntk_cond(graph, cfg),
        diversity=diversity_index(g),
        zen_degenerate=zen.degenerate,
    )
    logger.log_processing_step("profile", serialize(g), vector.to_dict(), time.perf_counter() - started)
    return vector


class ProfileOutcome(NamedTuple):
    index: int
    genome: Optional[Genome]
    vector: Optional[ProxyVector]
    error: Optional[HybridNASException]


def profile_many(genomes: Sequence[Genome], cfg: ScoreConfig, jobs: int = 1,
                 profiler: Callable[[Genome, ScoreConfig], ProxyVector] = profile) -> List[ProfileOutcome]:
    """
    批量打分，可多线程；结果按输入下标排列，与完成顺序无关

    单个基因的失败记录在对应结果的error中，不影响其他基因。
    """
    def run(item: Tuple[int, Genome]) -> ProfileOutcome:
        index, genome = item
        try:
            return ProfileOutcome(index, genome, profiler(genome, cfg), None)
        except HybridNASException as e:
            return ProfileOutcome(index, genome, None, e)
        except Exception as e:
            return ProfileOutcome(index, genome, None, HybridNASException(
                f"Unexpected error: {e}", ERROR_CODES["PROCESSING_FAILED"], {"original_error": str(e)}))

    items = list(enumerate(genomes))
    if jobs <= 1:
        outcomes = [run(item) for item in items]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            outcomes = list(executor.map(run, items))
    return sorted(outcomes, key=lambda o: o.index)
