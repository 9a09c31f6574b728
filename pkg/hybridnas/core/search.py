"""
第一阶段进化搜索

在参数量约束下最大化 F = α·W·Z_norm + (1-α)·D：Z = (zen, macs, ntk_cond)
在当前种群内做min-max归一化，D为多样性指数。每次迭代随机选父代、单基因变异，
可行子代插入后淘汰适应度最低的个体（并列时淘汰较早出生者）。
α 扫描在一组多样性权重上重复搜索，比较前k个个体的组成。
"""

import math
import time
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.preprocessing import MinMaxScaler

from .blocks import cost_full_model
from .events import Encoding
from .genome import DEFAULT_SPACE, DesignSpace, Genome, block_counts, composition_class, mutate, sample, serialize
from .proxies import ProxyVector, ScoreConfig, profile, profile_many
from .tensorcore import Rng
from ..utils.exceptions import ConfigurationError, InfeasibleConstraintError, ERROR_CODES
from ..utils.logger import get_logger
from ..utils.validators import ConfigValidator

PROXY_FIELDS = ("zen", "macs", "ntk_cond")

Profiler = Callable[[Genome, ScoreConfig], ProxyVector]


@dataclass(frozen=True)
class SearchConfig:
    population: int = 50
    iterations: int = 1000
    max_params: int = 3_000_000
    weights: Tuple[float, float, float] = (0.6, 0.4, 0.0)
    diversity_alpha: float = 0.05
    freeze_encoding: bool = True
    encoding: Encoding = Encoding.SHIST
    seed: int = 0
    score: ScoreConfig = field(default_factory=ScoreConfig)
    jobs: int = 1
    max_init_attempts: int = 10_000
    max_mutation_attempts: int = 1_000
    space: DesignSpace = DEFAULT_SPACE

    def __post_init__(self):
        ConfigValidator.validate_positive_int("population", self.population)
        if self.population < 2:
            raise ConfigurationError(
                f"Invalid population: need at least 2 individuals, got {self.population}",
                ERROR_CODES["INVALID_CONFIG_VALUE"],
                {"key": "population", "value": self.population}
            )
        ConfigValidator.validate_non_negative_int("iterations", self.iterations)
        ConfigValidator.validate_positive_int("max_params", self.max_params)
        object.__setattr__(self, "weights", ConfigValidator.validate_weights(self.weights))
        ConfigValidator.validate_unit_interval("diversity_alpha", self.diversity_alpha)
        ConfigValidator.validate_positive_int("jobs", self.jobs)
        ConfigValidator.validate_positive_int("max_init_attempts", self.max_init_attempts)
        ConfigValidator.validate_positive_int("max_mutation_attempts", self.max_mutation_attempts)

    def search_space(self) -> DesignSpace:
        return self.space.with_encoding(self.encoding) if self.freeze_encoding else self.space


@dataclass(frozen=True)
class Individual:
    genome: Genome
    proxies: ProxyVector
    birth: int

    @property
    def key(self) -> str:
        return serialize(self.genome)


@dataclass(frozen=True)
class RankedIndividual:
    genome: Genome
    proxies: ProxyVector
    birth: int
    fitness: float


@dataclass(frozen=True)
class SearchEvent:
    iteration: int
    attempt: int
    parent: str
    child: str
    accepted: bool
    evicted: Optional[str] = None
    child_birth: Optional[int] = None
    evicted_birth: Optional[int] = None


@dataclass
class SearchResult:
    population: List[RankedIndividual]
    history: List[Dict[str, float]]
    events: List[SearchEvent]
    individuals: Dict[int, Individual]
    initial_births: Tuple[int, ...]
    config: SearchConfig

    @property
    def diversity_history(self) -> List[float]:
        """每次迭代后种群的平均多样性"""
        return [row["mean_diversity"] for row in self.history]


# ---------------------------------------------------------------- 适应度

def _raw(vector: ProxyVector, name: str) -> float:
    value = getattr(vector, name)
    if value is None:
        return math.nan
    return float(value)


class ProxyNormalizer:
    """
    逐代理的min-max归一化

    只用有限值拟合；常数代理映射为0.5；缺失或非有限值映射为0。
    """

    def __init__(self, population: Sequence[Individual]):
        self._scalers: Dict[str, Optional[MinMaxScaler]] = {}
        self._has_valid: Dict[str, bool] = {}
        for name in PROXY_FIELDS:
            values = np.array([_raw(ind.proxies, name) for ind in population], dtype=np.float64)
            valid = values[np.isfinite(values)]
            if len(valid) == 0 or valid.min() == valid.max():
                self._scalers[name] = None
            else:
                self._scalers[name] = MinMaxScaler().fit(valid.reshape(-1, 1))
            self._has_valid[name] = len(valid) > 0

    def transform(self, population: Sequence[Individual]) -> np.ndarray:
        """返回 [n, 3] 的归一化矩阵"""
        out = np.zeros((len(population), len(PROXY_FIELDS)), dtype=np.float64)
        for j, name in enumerate(PROXY_FIELDS):
            values = np.array([_raw(ind.proxies, name) for ind in population], dtype=np.float64)
            valid = np.isfinite(values)
            scaler = self._scalers[name]
            if scaler is None:
                out[valid, j] = 0.5 if self._has_valid[name] else 0.0
            elif valid.any():
                out[valid, j] = scaler.transform(values[valid].reshape(-1, 1)).ravel()
        return out


def fitness_with(normalizer: ProxyNormalizer, population: Sequence[Individual], cfg: SearchConfig) -> List[float]:
    z = normalizer.transform(population)
    weighted = z @ np.asarray(cfg.weights, dtype=np.float64)
    diversity = np.array([ind.proxies.diversity for ind in population], dtype=np.float64)
    alpha = cfg.diversity_alpha
    return [float(v) for v in alpha * weighted + (1.0 - alpha) * diversity]


def fitness_all(population: Sequence[Individual], cfg: SearchConfig) -> List[float]:
    """F_i = α·(W·Z_norm,i) + (1-α)·D_i，Z在当前种群内归一化"""
    return fitness_with(ProxyNormalizer(population), population, cfg)


# ---------------------------------------------------------------- 进化

def _feasible(g: Genome, cfg: SearchConfig) -> Tuple[bool, int]:
    score = cfg.score
    params, _ = cost_full_model(g, score.height, score.width, score.bins, score.num_classes)
    return params <= cfg.max_params, params


def _initial_genomes(rng: Rng, space: DesignSpace, cfg: SearchConfig) -> List[Genome]:
    genomes: List[Genome] = []
    attempts = 0
    while len(genomes) < cfg.population:
        attempts += 1
        if attempts > cfg.max_init_attempts:
            raise InfeasibleConstraintError(
                f"Found only {len(genomes)} of {cfg.population} genomes with params <= {cfg.max_params} "
                f"in {cfg.max_init_attempts} attempts",
                ERROR_CODES["INFEASIBLE_CONSTRAINT"],
                {"max_params": cfg.max_params, "found": len(genomes), "attempts": cfg.max_init_attempts}
            )
        g = sample(rng, space)
        if _feasible(g, cfg)[0]:
            genomes.append(g)
    return genomes


def _history_row(iteration: int, fitness: Sequence[float], population: Sequence[Individual]) -> Dict[str, float]:
    return {
        "iteration": iteration,
        "min_fitness": float(min(fitness)),
        "mean_fitness": float(np.mean(fitness)),
        "max_fitness": float(max(fitness)),
        "mean_diversity": float(np.mean([ind.proxies.diversity for ind in population])),
    }


def evolve(cfg: SearchConfig, profiler: Profiler = profile) -> SearchResult:
    """
    执行进化搜索

    随机抽样全部发生在主序列上，只有代理打分可并行，
    因此结果只由 cfg（含种子）决定。

    Args:
        cfg: 搜索配置
        profiler: 打分函数，默认为 proxies.profile

    Returns:
        SearchResult：按适应度排序的最终种群、每代统计、事件日志
    """
    logger = get_logger()
    logger.create_section_separator("开始进化搜索")
    logger.info("搜索配置", {
        "population": cfg.population, "iterations": cfg.iterations, "max_params": cfg.max_params,
        "weights": list(cfg.weights), "alpha": cfg.diversity_alpha, "seed": cfg.seed,
    })
    started = time.perf_counter()
    rng = Rng(cfg.seed)
    space = cfg.search_space()

    cache: Dict[str, ProxyVector] = {}
    genomes = _initial_genomes(rng, space, cfg)
    pending = []
    for g in genomes:
        key = serialize(g)
        if key not in cache and key not in pending:
            pending.append(key)
    by_key = {serialize(g): g for g in genomes}
    for outcome in profile_many([by_key[k] for k in pending], cfg.score, cfg.jobs, profiler):
        if outcome.error is not None:
            raise outcome.error
        cache[pending[outcome.index]] = outcome.vector

    population = [Individual(g, cache[serialize(g)], i) for i, g in enumerate(genomes)]
    individuals = {ind.birth: ind for ind in population}
    initial_births = tuple(ind.birth for ind in population)
    fitness = fitness_all(population, cfg)
    history = [_history_row(0, fitness, population)]
    events: List[SearchEvent] = []
    next_birth = len(population)
    logger.info("初始种群完成", {"elapsed_s": round(time.perf_counter() - started, 2)})

    for iteration in range(1, cfg.iterations + 1):
        attempt = 0
        while True:
            attempt += 1
            if attempt > cfg.max_mutation_attempts:
                raise InfeasibleConstraintError(
                    f"No feasible child after {cfg.max_mutation_attempts} mutations at iteration {iteration}",
                    ERROR_CODES["INFEASIBLE_CONSTRAINT"],
                    {"iteration": iteration, "max_params": cfg.max_params}
                )
            parent = population[rng.integers(0, len(population))]
            child_genome = mutate(parent.genome, rng, space, mutate_encoding=not cfg.freeze_encoding)
            if _feasible(child_genome, cfg)[0]:
                break
            events.append(SearchEvent(iteration, attempt, parent.key, serialize(child_genome), False))

        child_key = serialize(child_genome)
        if child_key not in cache:
            cache[child_key] = profiler(child_genome, cfg.score)
        child = Individual(child_genome, cache[child_key], next_birth)
        individuals[child.birth] = child
        next_birth += 1

        pool = population + [child]
        pool_fitness = fitness_all(pool, cfg)
        victim = min(range(len(pool)), key=lambda i: (pool_fitness[i], pool[i].birth))
        evicted = pool[victim]
        population = pool[:victim] + pool[victim + 1:]
        fitness = pool_fitness[:victim] + pool_fitness[victim + 1:]

        events.append(SearchEvent(iteration, attempt, parent.key, child_key, True,
                                  evicted.key, child.birth, evicted.birth))
        history.append(_history_row(iteration, fitness, population))
        logger.log_search_event(iteration, parent.key, child_key, True, evicted.key, min(fitness))
        if iteration % 100 == 0:
            logger.info(f"迭代 {iteration}/{cfg.iterations}", history[-1])

    final = fitness_all(population, cfg)
    ranked = sorted(
        (RankedIndividual(ind.genome, ind.proxies, ind.birth, f) for ind, f in zip(population, final)),
        key=lambda r: (-r.fitness, serialize(r.genome)),
    )
    logger.info("进化搜索完成", {
        "elapsed_s": round(time.perf_counter() - started, 2),
        "best": serialize(ranked[0].genome),
        "best_fitness": ranked[0].fitness,
        "profiled": len(cache),
    })
    return SearchResult(ranked, history, events, individuals, initial_births, cfg)


def _check_k(k: int, population: int):
    if k < 1 or k > population:
        raise ConfigurationError(
            f"top_k needs 1 <= k <= {population}, got {k}",
            ERROR_CODES["INVALID_CONFIG_VALUE"],
            {"key": "top_k", "value": k}
        )


def top_ranked(result: SearchResult, k: int) -> List[RankedIndividual]:
    _check_k(k, len(result.population))
    return result.population[:k]


def top_k(result: SearchResult, k: int) -> List[Genome]:
    """适应度降序的前k个基因（并列按基因串排序）"""
    return [r.genome for r in top_ranked(result, k)]


# ---------------------------------------------------------------- α 扫描

# 0.05 之外再取 0.1 到 1.0，步长 0.1
ALPHA_GRID: Tuple[float, ...] = (0.05,) + tuple(round(0.1 * i, 1) for i in range(1, 11))


@dataclass(frozen=True)
class AlphaSweepEntry:
    alpha: float
    top: Tuple[RankedIndividual, ...]

    @property
    def mean_diversity(self) -> float:
        return float(np.mean([r.proxies.diversity for r in self.top]))

    @property
    def block_counts(self) -> Tuple[int, ...]:
        """top-k 中各块类型（BLOCK_ORDER顺序）的层数之和"""
        return tuple(int(sum(counts)) for counts in zip(*(block_counts(r.genome) for r in self.top)))

    @property
    def compositions(self) -> Dict[str, int]:
        return dict(Counter(composition_class(r.genome) for r in self.top))


def alpha_sweep(cfg: SearchConfig, alphas: Sequence[float] = ALPHA_GRID, k: int = 5,
                profiler: Profiler = profile) -> List[AlphaSweepEntry]:
    """
    对每个 α 用同一配置（含种子）重新搜索，记录前k个个体的多样性与块组成

    代理打分与 α 无关，各次搜索共享缓存。
    """
    if not alphas:
        raise ConfigurationError("Alpha sweep needs at least one alpha value",
                                 ERROR_CODES["INVALID_CONFIG_VALUE"], {"key": "alphas"})
    for alpha in alphas:
        ConfigValidator.validate_unit_interval("diversity_alpha", alpha)
    _check_k(k, cfg.population)

    cache: Dict[str, ProxyVector] = {}

    def cached(g: Genome, score: ScoreConfig) -> ProxyVector:
        key = serialize(g)
        if key not in cache:
            cache[key] = profiler(g, score)
        return cache[key]

    logger = get_logger()
    entries = []
    for alpha in alphas:
        result = evolve(replace(cfg, diversity_alpha=float(alpha)), cached)
        entry = AlphaSweepEntry(float(alpha), tuple(top_ranked(result, k)))
        logger.info("α扫描", {"alpha": entry.alpha, "mean_diversity": entry.mean_diversity,
                             "block_counts": list(entry.block_counts)})
        entries.append(entry)
    return entries


def replay_min_fitness(result: SearchResult) -> List[float]:
    """
    按事件日志重放种群，在最终种群上冻结的归一化下计算每步后的最低适应度

    α = 0 或 α = 1 且 W 为独热向量时，该序列单调不减。
    """
    cfg = result.config
    final = [result.individuals[r.birth] for r in result.population]
    normalizer = ProxyNormalizer(final)
    members = set(result.initial_births)

    def current_min() -> float:
        pop = [result.individuals[b] for b in sorted(members)]
        return min(fitness_with(normalizer, pop, cfg))

    trace = [current_min()]
    for event in result.events:
        if not event.accepted:
            continue
        members.add(event.child_birth)
        members.discard(event.evicted_birth)
        trace.append(current_min())
    return trace
