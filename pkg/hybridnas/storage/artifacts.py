"""
搜索与打分产物的落盘

- 基因列表：每行一个基因串，空行与 # 注释忽略
- 代理打分CSV（每个基因一行，失败记录在 error 列）
- 搜索结果：种群CSV、事件日志CSV、每代统计CSV、文字报告、top-k 基因列表
- α 扫描：每个 α 的汇总CSV与各 α 的前k个基因
"""

from typing import Iterable, List, Optional, Sequence, Tuple

import pandas as pd

from ..core.genome import BLOCK_ORDER, Genome, serialize
from ..core.proxies import ProfileOutcome, ProxyVector
from ..core.search import AlphaSweepEntry, SearchResult, replay_min_fitness, top_k
from ..utils.exceptions import HybridNASException, ERROR_CODES

PROXY_COLUMNS = ["zen", "macs", "params", "ntk_cond", "diversity", "zen_degenerate"]
PROFILE_COLUMNS = ["index", "genome"] + PROXY_COLUMNS + ["error"]
POPULATION_COLUMNS = ["rank", "genome"] + PROXY_COLUMNS + ["fitness", "birth"]
EVENT_COLUMNS = ["iteration", "attempt", "parent", "child", "accepted", "evicted"]
HISTORY_COLUMNS = ["iteration", "min_fitness", "mean_fitness", "max_fitness", "mean_diversity"]
ALPHA_BLOCK_COLUMNS = [b.value for b in BLOCK_ORDER]


def _num(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, int):
        return str(value)
    return repr(float(value))


def _proxy_cells(vector: Optional[ProxyVector]) -> dict:
    if vector is None:
        return {name: "" for name in PROXY_COLUMNS}
    return {name: _num(getattr(vector, name)) for name in PROXY_COLUMNS}


def read_genomes(path: str) -> List[Tuple[int, str]]:
    """返回 (行号, 基因串) 列表，解析交给调用方（便于逐行容错）"""
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = f.read().splitlines()
    except OSError as e:
        raise HybridNASException(f"Cannot read genome file {path}: {e}",
                                 ERROR_CODES["PROCESSING_FAILED"], {"path": path})
    return [(i + 1, line.strip()) for i, line in enumerate(lines)
            if line.strip() and not line.strip().startswith("#")]


def write_genomes(genomes: Iterable[Genome], path: str):
    with open(path, "w", encoding="utf-8") as f:
        for g in genomes:
            f.write(serialize(g) + "\n")


def write_profile_csv(outcomes: Sequence[ProfileOutcome], texts: Sequence[str], path: str):
    """
    Args:
        outcomes: profile_many 的结果（按下标排列）
        texts: 与outcomes对应的原始基因串（解析失败时仍需写出）
    """
    rows = []
    for outcome, text in zip(outcomes, texts):
        row = {"index": str(outcome.index), "genome": text}
        row.update(_proxy_cells(outcome.vector))
        row["error"] = "" if outcome.error is None else outcome.error.message
        rows.append(row)
    pd.DataFrame(rows, columns=PROFILE_COLUMNS).to_csv(path, index=False)


def write_population(result: SearchResult, path: str):
    rows = []
    for rank, ind in enumerate(result.population, start=1):
        row = {"rank": str(rank), "genome": serialize(ind.genome)}
        row.update(_proxy_cells(ind.proxies))
        row["fitness"] = _num(ind.fitness)
        row["birth"] = str(ind.birth)
        rows.append(row)
    pd.DataFrame(rows, columns=POPULATION_COLUMNS).to_csv(path, index=False)


def write_event_log(result: SearchResult, path: str):
    rows = [{
        "iteration": e.iteration,
        "attempt": e.attempt,
        "parent": e.parent,
        "child": e.child,
        "accepted": _num(e.accepted),
        "evicted": e.evicted or "",
    } for e in result.events]
    pd.DataFrame(rows, columns=EVENT_COLUMNS).to_csv(path, index=False)


def write_history(result: SearchResult, path: str):
    rows = [{k: _num(h[k]) if k != "iteration" else str(h[k]) for k in HISTORY_COLUMNS}
            for h in result.history]
    pd.DataFrame(rows, columns=HISTORY_COLUMNS).to_csv(path, index=False)


def write_top_k(result: SearchResult, k: int, path: str):
    write_genomes(top_k(result, k), path)


def format_report(result: SearchResult, k: int) -> str:
    cfg = result.config
    rejected = sum(1 for e in result.events if not e.accepted)
    replay = replay_min_fitness(result)
    monotone = all(b >= a for a, b in zip(replay, replay[1:]))
    lines = [
        "search summary",
        "=" * 60,
        f"population        {cfg.population}",
        f"iterations        {cfg.iterations}",
        f"max_params        {cfg.max_params}",
        f"weights           {', '.join(f'{w:g}' for w in cfg.weights)}",
        f"diversity_alpha   {cfg.diversity_alpha:g}",
        f"seed              {cfg.seed}",
        f"rejected children {rejected}",
        f"final mean D      {result.history[-1]['mean_diversity']:.4f}",
        f"replay min-F non-decreasing  {'yes' if monotone else 'no'}",
        "",
        f"top {k}",
        "-" * 60,
    ]
    for rank, ind in enumerate(result.population[:k], start=1):
        p = ind.proxies
        lines.append(f"{rank:>2}  F={ind.fitness:.4f}  zen={p.zen:.3f}  params={p.params}  "
                     f"macs={p.macs}  D={p.diversity:.3f}")
        lines.append(f"    {serialize(ind.genome)}")
    return "\n".join(lines) + "\n"


def write_report(result: SearchResult, k: int, path: str):
    with open(path, "w", encoding="utf-8") as f:
        f.write(format_report(result, k))


def write_alpha_sweep(entries: Sequence[AlphaSweepEntry], path: str):
    """每个 α 一行：前k个个体的平均多样性、各块层数之和、同构/异构个数"""
    columns = ["alpha", "k", "mean_diversity"] + ALPHA_BLOCK_COLUMNS + ["homogeneous", "heterogeneous", "best"]
    rows = []
    for entry in entries:
        compositions = entry.compositions
        heterogeneous = compositions.get("heterogeneous", 0)
        row = {"alpha": _num(entry.alpha), "k": str(len(entry.top)), "mean_diversity": _num(entry.mean_diversity)}
        row.update({name: str(count) for name, count in zip(ALPHA_BLOCK_COLUMNS, entry.block_counts)})
        row["homogeneous"] = str(len(entry.top) - heterogeneous)
        row["heterogeneous"] = str(heterogeneous)
        row["best"] = serialize(entry.top[0].genome)
        rows.append(row)
    pd.DataFrame(rows, columns=columns).to_csv(path, index=False)


def write_alpha_top(entries: Sequence[AlphaSweepEntry], path: str):
    rows = [{
        "alpha": _num(entry.alpha),
        "rank": str(rank),
        "genome": serialize(ind.genome),
        "fitness": _num(ind.fitness),
        "diversity": _num(ind.proxies.diversity),
    } for entry in entries for rank, ind in enumerate(entry.top, start=1)]
    pd.DataFrame(rows, columns=["alpha", "rank", "genome", "fitness", "diversity"]).to_csv(path, index=False)
