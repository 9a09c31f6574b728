"""
命令行入口

子命令：encode / profile / search / sweep-alpha / sweep-weights / correlate / sample / synth-benchmark
退出码：0 成功，2 用法或配置错误，3 数据错误，4 约束不可满足
"""

import argparse
import json
import sys
from typing import Any, Dict, List, Optional

from .config.run_config import RunConfig, load_run_config
from .core.stats import PLANTED_TARGETS
from .service import NASService
from .utils.exceptions import ConfigurationError, HybridNASException, ERROR_CODES

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_INFEASIBLE = 4

_PATH_KEYS = {"input": "events", "genomes": "genomes", "benchmark": "benchmark"}


def exit_code(response: Dict[str, Any]) -> int:
    """按错误码区间映射退出码"""
    if response.get("success"):
        return EXIT_OK
    code = response.get("error_code") or ERROR_CODES["UNKNOWN_ERROR"]
    if code == ERROR_CODES["INFEASIBLE_CONSTRAINT"]:
        return EXIT_INFEASIBLE
    if 4000 <= code < 5000:
        return EXIT_USAGE
    return EXIT_DATA


def _resolution(text: str):
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected HxW, got {text!r}")
    return h, w


def _alphas(text: str) -> List[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("expected at least one alpha")
    return values


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value 运行配置文件")

    parser = argparse.ArgumentParser(prog="hybridnas", description="事件相机混合骨干网络的零样本架构搜索")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", parents=[common], help="事件流切窗并编码为张量文件")
    p.add_argument("--input", help="缺省时取配置中的 events")
    p.add_argument("--format", required=True, choices=["vtei", "mdes", "shist", "taf"])
    p.add_argument("--bins", type=int)
    p.add_argument("--window-us", type=int)
    p.add_argument("--out", required=True)

    p = sub.add_parser("profile", parents=[common], help="批量计算代理指标")
    p.add_argument("--genomes", help="缺省时取配置中的 genomes")
    p.add_argument("--seed", type=int)
    p.add_argument("--res", type=_resolution, help="HxW，例如 64x64")
    p.add_argument("--jobs", type=int)
    p.add_argument("--keep-going", action="store_true")
    p.add_argument("--out", required=True)

    p = sub.add_parser("search", parents=[common], help="参数约束下的进化搜索")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)

    p = sub.add_parser("sweep-alpha", parents=[common], help="在多个多样性权重 α 上重复搜索")
    p.add_argument("--alphas", type=_alphas, help="逗号分隔，缺省为 0.05 与 0.1..1.0")
    p.add_argument("--top", type=int, default=5, help="每个 α 汇总的个体数")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)

    p = sub.add_parser("sweep-weights", parents=[common], help="Zen/MACs 权重扫描")
    p.add_argument("--benchmark", help="缺省时取配置中的 benchmark")
    p.add_argument("--step", type=float, default=0.1)
    p.add_argument("--out", required=True)

    p = sub.add_parser("correlate", parents=[common], help="按编码分组的代理相关性报告")
    p.add_argument("--benchmark", help="缺省时取配置中的 benchmark")
    p.add_argument("--out", required=True)

    p = sub.add_parser("sample", parents=[common], help="随机采样基因列表")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--homogeneous", action="store_true")
    p.add_argument("--out", required=True)

    p = sub.add_parser("synth-benchmark", parents=[common], help="生成带预设信号的合成基准表")
    p.add_argument("--count", type=int, default=250)
    p.add_argument("--target", choices=PLANTED_TARGETS, default="weights")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    return parser


def _apply_overrides(config: RunConfig, args: argparse.Namespace):
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "jobs", None) is not None:
        overrides["jobs"] = args.jobs
    if getattr(args, "res", None) is not None:
        overrides["height"], overrides["width"] = args.res
    for key, value in overrides.items():
        config.update_setting(key, value)
    if overrides:
        config.validate()

    # 输入路径：命令行优先，其次配置文件
    for attr, key in _PATH_KEYS.items():
        if hasattr(args, attr) and getattr(args, attr) is None:
            value = config.get_setting(key)
            if not value:
                raise ConfigurationError(
                    f"--{attr} is required when the configuration leaves {key!r} empty",
                    ERROR_CODES["INVALID_CONFIG_VALUE"],
                    {"key": key}
                )
            setattr(args, attr, value)


def _dispatch(service: NASService, args: argparse.Namespace) -> Dict[str, Any]:
    if args.command == "encode":
        return service.encode_events(args.input, args.format, args.out, args.bins, args.window_us)
    if args.command == "profile":
        return service.profile_genomes(args.genomes, args.out, args.keep_going)
    if args.command == "search":
        return service.run_search(args.out)
    if args.command == "sweep-alpha":
        return service.sweep_alpha(args.out, args.alphas, args.top)
    if args.command == "sweep-weights":
        return service.sweep_weights(args.benchmark, args.out, args.step)
    if args.command == "correlate":
        return service.correlate(args.benchmark, args.out)
    if args.command == "sample":
        return service.sample_genomes(args.count, args.out, args.homogeneous)
    return service.synth_benchmark(args.count, args.out, args.target)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    try:
        config = load_run_config(args.config)
        _apply_overrides(config, args)
    except HybridNASException as e:
        print(f"hybridnas: configuration error: {e.message}", file=sys.stderr)
        return EXIT_USAGE

    response = _dispatch(NASService(config), args)
    code = exit_code(response)
    stream = sys.stdout if code == EXIT_OK else sys.stderr
    print(json.dumps(response, ensure_ascii=False, default=str), file=stream)
    return code


if __name__ == "__main__":
    sys.exit(main())
