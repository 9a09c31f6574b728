"""
HybridNAS主服务接口

把编码、打分、搜索与相关性分析串成可复现的运行；
每个操作返回统一的成功/失败响应字典，由命令行层映射为退出码。
"""

import os
import time
from typing import Any, Dict, List, Optional, Sequence

from .config.run_config import RunConfig
from .core.events import Encoding, TafEncoder, encode, window_split
from .core.genome import BLOCK_ORDER, Genome, parse, sample, sample_homogeneous, serialize
from .core.proxies import ProfileOutcome, profile_many
from .core.search import ALPHA_GRID, alpha_sweep, evolve
from .core.stats import proxy_report, composition_report, format_lead_report, synthesize_benchmark, \
    weight_sweep, write_report_dat, write_sweep_dat
from .core.tensorcore import Rng
from .storage.artifacts import read_genomes, write_alpha_sweep, write_alpha_top, write_event_log, \
    write_genomes, write_history, write_population, write_profile_csv, write_report, write_top_k
from .storage.benchmark import read_benchmark, write_benchmark
from .storage.event_files import read_events
from .storage.tensor_files import write_manifest, write_tensor
from .utils.exceptions import HybridNASException, ERROR_CODES
from .utils.logger import get_logger, set_debug_config

RESOLVED_CONFIG = "resolved.cfg"


def companion_path(out_file: str, suffix: str) -> str:
    """与输出文件同名的伴随文件，如 sweep.csv -> sweep.dat / sweep.resolved.cfg"""
    return f"{os.path.splitext(out_file)[0]}.{suffix}"


class NASService:
    """HybridNAS服务主入口类"""

    def __init__(self, config: Optional[RunConfig] = None):
        """
        初始化服务

        Args:
            config: 运行配置，为None时使用默认配置
        """
        self.config = config or RunConfig()
        set_debug_config(self.config.get_debug_config())
        self.logger = get_logger()

    # ------------------------------------------------------------ 响应

    @staticmethod
    def _create_success_response(message: str, data: Dict[str, Any]) -> Dict[str, Any]:
        return {
            "success": True,
            "message": message,
            "data": data,
            "error_code": None,
            "error_message": None,
        }

    @staticmethod
    def _create_error_response(message: str, exception: HybridNASException) -> Dict[str, Any]:
        return {
            "success": False,
            "message": message,
            "data": None,
            "error_code": exception.error_code,
            "error_message": exception.message,
            "details": exception.details,
        }

    def _run(self, title: str, action) -> Dict[str, Any]:
        """统一的异常到响应转换"""
        self.logger.create_section_separator(title)
        started = time.perf_counter()
        try:
            data = action()
            self.logger.info(f"{title}完成", {"elapsed_s": round(time.perf_counter() - started, 3)})
            return self._create_success_response(f"{title} completed", data)
        except HybridNASException as e:
            self.logger.error(f"{title}失败: {e.message}", e.to_dict())
            return self._create_error_response(f"{title} failed", e)
        except OSError as e:
            error = HybridNASException(f"I/O error: {e}", ERROR_CODES["PROCESSING_FAILED"],
                                       {"path": getattr(e, "filename", None)})
            self.logger.error(f"{title}失败: {error.message}", error.to_dict())
            return self._create_error_response(f"{title} failed", error)
        except Exception as e:
            unknown = HybridNASException(f"Unexpected error: {str(e)}", ERROR_CODES["UNKNOWN_ERROR"],
                                         {"original_error": str(e)})
            self.logger.error(f"{title}失败", unknown.to_dict(), exc_info=True)
            return self._create_error_response(f"{title} failed", unknown)

    def _echo_config(self, out_dir: str):
        os.makedirs(out_dir, exist_ok=True)
        self.config.save_config(os.path.join(out_dir, RESOLVED_CONFIG))

    def _echo_config_beside(self, out_file: str):
        """单文件输出：配置写到同名的 <stem>.resolved.cfg"""
        os.makedirs(os.path.dirname(os.path.abspath(out_file)), exist_ok=True)
        self.config.save_config(companion_path(out_file, RESOLVED_CONFIG))

    def _remove_outputs(self, out_dir: str, names: List[str]):
        for name in names:
            try:
                os.remove(os.path.join(out_dir, name))
            except OSError as e:
                self.logger.warning("清理部分输出失败", {"file": name, "error": str(e)})
        if names:
            self.logger.info("已清理部分输出", {"removed": len(names)})

    # ------------------------------------------------------------ 编码

    def encode_events(self, input_path: str, fmt: str, out_dir: str, bins: Optional[int] = None,
                      window_us: Optional[int] = None) -> Dict[str, Any]:
        """
        把事件文件切窗并编码，每个窗口一个 .ten 文件，外加 manifest.csv

        Args:
            input_path: events.csv 或 events.evt
            fmt: vtei / mdes / shist / taf
            out_dir: 输出目录
            bins: 时间分箱数（默认取配置）
            window_us: 窗口长度（默认取配置）
        """
        def action():
            encoding = Encoding.from_name(fmt)
            n_bins = bins if bins is not None else self.config.get_setting("bins")
            t_window = window_us if window_us is not None else self.config.get_setting("window_us")
            width = self.config.get_setting("sensor_width")
            height = self.config.get_setting("sensor_height")
            self._echo_config(out_dir)

            taf = TafEncoder(width, height, n_bins) if encoding is Encoding.TAF else None
            manifest: List[Dict[str, Any]] = []
            written: List[str] = []
            stream = read_events(input_path)
            try:
                for index, window in enumerate(window_split(stream, t_window, width, height)):
                    tensor = encode(window, encoding, n_bins, taf).tensor
                    name = f"window_{index:06d}.ten"
                    written.append(name)
                    write_tensor(tensor, os.path.join(out_dir, name))
                    manifest.append({"index": index, "t_a": window.t_a, "t_b": window.t_b,
                                     "n_events": len(window), "file": name})
            except Exception:
                # 中途失败时不留下没有manifest的窗口文件
                self._remove_outputs(out_dir, written)
                raise
            manifest_path = os.path.join(out_dir, "manifest.csv")
            write_manifest(manifest, manifest_path)
            return {"windows": len(manifest), "manifest": manifest_path, "format": encoding.value}

        return self._run("事件编码", action)

    # ------------------------------------------------------------ 打分

    def profile_genomes(self, genomes_path: str, out_csv: str, keep_going: bool = False) -> Dict[str, Any]:
        """
        批量计算代理指标

        解析或打分失败的基因在CSV的error列记录；keep_going为真时整体仍视为成功。
        """
        def action():
            self._echo_config_beside(out_csv)
            entries = read_genomes(genomes_path)
            texts = [text for _, text in entries]
            parsed: List[Optional[Genome]] = []
            failures: Dict[int, HybridNASException] = {}
            for index, (line, text) in enumerate(entries):
                try:
                    parsed.append(parse(text))
                except HybridNASException as e:
                    e.details = {**e.details, "line": line}
                    failures[index] = e
                    parsed.append(None)

            valid = [(i, g) for i, g in enumerate(parsed) if g is not None]
            scored = profile_many([g for _, g in valid], self.config.score_config(),
                                  self.config.get_setting("jobs"))
            outcomes: List[ProfileOutcome] = [None] * len(entries)
            for (index, g), outcome in zip(valid, scored):
                outcomes[index] = ProfileOutcome(index, g, outcome.vector, outcome.error)
                if outcome.error is not None:
                    failures[index] = outcome.error
            for index, error in failures.items():
                if outcomes[index] is None:
                    outcomes[index] = ProfileOutcome(index, None, None, error)

            write_profile_csv(outcomes, texts, out_csv)
            if failures:
                self.logger.warning("部分基因打分失败", {"failed": sorted(failures)})
                if not keep_going:
                    raise failures[min(failures)]
            return {"total": len(entries), "failed": len(failures), "output": out_csv}

        return self._run("代理打分", action)

    # ------------------------------------------------------------ 搜索

    def run_search(self, out_dir: str) -> Dict[str, Any]:
        """进化搜索，输出种群、事件日志、每代统计、报告与 top-k 列表"""
        def action():
            self._echo_config(out_dir)
            cfg = self.config.search_config()
            k = self.config.get_setting("top_k")
            result = evolve(cfg)
            paths = {
                "population": os.path.join(out_dir, "population.csv"),
                "events": os.path.join(out_dir, "events.csv"),
                "history": os.path.join(out_dir, "history.csv"),
                "report": os.path.join(out_dir, "report.txt"),
                "top_k": os.path.join(out_dir, "top_k.txt"),
            }
            write_population(result, paths["population"])
            write_event_log(result, paths["events"])
            write_history(result, paths["history"])
            write_report(result, k, paths["report"])
            write_top_k(result, k, paths["top_k"])
            return {"best": serialize(result.population[0].genome),
                    "best_fitness": result.population[0].fitness, "outputs": paths}

        return self._run("进化搜索", action)

    def sweep_alpha(self, out_dir: str, alphas: Optional[Sequence[float]] = None, k: int = 5) -> Dict[str, Any]:
        """
        在多个多样性权重 α 上重复搜索，汇总每个 α 的前k个架构

        Args:
            out_dir: 输出目录（alpha_sweep.csv 与 alpha_top_k.csv）
            alphas: α 列表，为None时使用 ALPHA_GRID
            k: 每个 α 汇总的个体数
        """
        def action():
            self._echo_config(out_dir)
            entries = alpha_sweep(self.config.search_config(), ALPHA_GRID if alphas is None else alphas, k)
            paths = {
                "summary": os.path.join(out_dir, "alpha_sweep.csv"),
                "top_k": os.path.join(out_dir, "alpha_top_k.csv"),
            }
            write_alpha_sweep(entries, paths["summary"])
            write_alpha_top(entries, paths["top_k"])
            return {"alphas": [e.alpha for e in entries],
                    "mean_diversity": [e.mean_diversity for e in entries], "outputs": paths}

        return self._run("α扫描", action)

    # ------------------------------------------------------------ 相关性

    def sweep_weights(self, benchmark_path: str, out_csv: str, step: float = 0.1) -> Dict[str, Any]:
        def action():
            self._echo_config_beside(out_csv)
            result = weight_sweep(read_benchmark(benchmark_path), step)
            result.to_frame().to_csv(out_csv, index=False)
            write_sweep_dat(result, companion_path(out_csv, "dat"))
            best = result.best
            return {"rows": len(result.rows), "best_w_zen": best.w_zen, "best_w_macs": best.w_macs,
                    "best_tau": best.tau, "best_rho": best.rho, "output": out_csv}

        return self._run("权重扫描", action)

    def correlate(self, benchmark_path: str, out_dir: str) -> Dict[str, Any]:
        def action():
            self._echo_config(out_dir)
            table = read_benchmark(benchmark_path)
            report = proxy_report(table)
            report.to_frame().to_csv(os.path.join(out_dir, "proxy_report.csv"), index=False)
            with open(os.path.join(out_dir, "proxy_report.txt"), "w", encoding="utf-8") as f:
                f.write(report.to_text())
            write_report_dat(report, os.path.join(out_dir, "kendall.dat"), "tau")
            write_report_dat(report, os.path.join(out_dir, "spearman.dat"), "rho")
            composition_report(table).to_csv(os.path.join(out_dir, "composition.csv"), index=False)
            format_lead_report(table).to_csv(os.path.join(out_dir, "format_lead.csv"), index=False)
            return {"entries": len(report.entries),
                    "degenerate": sum(1 for e in report.entries if e.degenerate), "output": out_dir}

        return self._run("相关性分析", action)

    # ------------------------------------------------------------ 辅助

    def sample_genomes(self, count: int, out_path: str, homogeneous: bool = False) -> Dict[str, Any]:
        """随机采样基因列表；homogeneous 时四层同一块类型（轮流取各类型）"""
        def action():
            self._echo_config_beside(out_path)
            rng = Rng(self.config.get_setting("seed"))
            if homogeneous:
                genomes = [sample_homogeneous(rng, BLOCK_ORDER[i % len(BLOCK_ORDER)]) for i in range(count)]
            else:
                genomes = [sample(rng) for _ in range(count)]
            write_genomes(genomes, out_path)
            return {"count": len(genomes), "output": out_path}

        return self._run("基因采样", action)

    def synth_benchmark(self, count: int, out_csv: str, target: str = "weights") -> Dict[str, Any]:
        def action():
            self._echo_config_beside(out_csv)
            rng = Rng(self.config.get_setting("seed"))
            table = synthesize_benchmark(
                count, rng, target,
                w_zen=self.config.get_setting("weight_zen"),
                w_macs=self.config.get_setting("weight_macs"),
                height=self.config.get_setting("height"),
                width=self.config.get_setting("width"),
            )
            write_benchmark(table, out_csv)
            return {"rows": len(table), "target": target, "output": out_csv}

        return self._run("合成基准", action)
