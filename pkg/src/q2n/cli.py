#!/usr/bin/env python
# -*- coding: utf-8 -*-
'''
@File: src/q2n/cli.py
@Time: 2026/10/16
@Author: UniqueDeep
@Description: q2n 命令行入口：生成夹具、单层优化、超参搜索、分解基准、闭式解与梯度下降对比、谱表。
'''

import argparse
import sys
from pathlib import Path

from . import ui
from .calibgen import SpectrumSpec, gen_activations, gen_weights
from .config import Defaults, get_log_level, load_defaults
from .errors import ArgumentError, Q2NError
from .nullspace import SELECTORS
from .pipeline import (
    axis_sweep,
    bench_decomposition,
    compare_bp,
    coordinate_search,
    run_q2n,
    spectrum_table,
    sweep,
)
from .quantizer import QUANTIZERS, QuantConfig
from .report import (
    BENCH_HEADER,
    COMPARE_BP_HEADER,
    LAYER_HEADER,
    SPECTRUM_HEADER,
    csv_text,
    to_json,
    write_text,
)
from .tensorio import LayerBundle, Tensor, load_layer_bundle, load_tensor, save_quant_result, save_tensor

GEN_KINDS = ("exact-rank", "decay", "dominant", "weights")


def _group_arg(raw: str):
    if raw in ("row", "per-row"):
        return "row"
    try:
        value = int(raw)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer or 'row', got {raw!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"group must be positive, got {value}")
    return value


# === 参数解析 ===

def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=0, help="日志更详细（-v INFO，-vv DEBUG）")
    common.add_argument("--config", type=str, help="q2n.json 路径（默认依次查找当前目录与仓库根目录）")
    return common


def _layer_parser() -> argparse.ArgumentParser:
    layer = argparse.ArgumentParser(add_help=False)
    inputs = layer.add_argument_group("inputs")
    inputs.add_argument("--weight", type=str, help="权重 .q2nt 文件（n×m）")
    inputs.add_argument("--acts", type=str, help="校准激活 .q2nt 文件（m×c）")
    inputs.add_argument("--dir", type=str, help="包含 <name>.weight.q2nt 与 <name>.acts.q2nt 的目录")
    inputs.add_argument("--name", type=str, help="层名（默认 layer）")

    opts = layer.add_argument_group("quantization / q2n")
    opts.add_argument("--bits", type=int, help="量化位宽 2..8（默认 2）")
    opts.add_argument("--group", type=_group_arg, help="组大小或 'row'（默认 2-bit 用 128，其余按行）")
    opts.add_argument("--t", type=float, help="前后缀和比值阈值（默认 0.1）")
    opts.add_argument("--lambda", dest="lambda_reg", type=float, help="α 正则系数（默认 0.2）")
    opts.add_argument("--selector", choices=SELECTORS, help="截断规则（默认 psr）")
    opts.add_argument("--quantizer", choices=QUANTIZERS, help="量化器（默认 gptq）")
    opts.add_argument("--exclude-top", type=int, help="比值计算中排除的最大特征值个数（默认 1）")
    opts.add_argument("--damp", type=float, help="GPTQ 阻尼比例（默认 0.01）")
    return layer


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="q2n",
        description="Q2N - 量化误差的零空间投影优化（单层、桌面规模）",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # 生成夹具（权重 + 带主导通道的激活）
  %(prog)s gen --kind weights --n 64 --m 128 --seed 0 -o fx/layer.weight.q2nt
  %(prog)s gen --kind dominant --k 1 --noise 1e-3 --m 128 --c 512 -o fx/layer.acts.q2nt

  # 单层优化，CSV 写到 stdout，量化结果与报告写到 out/
  %(prog)s run --dir fx --name layer -o out

  # 不做 Q2N 的基线
  %(prog)s run --dir fx --name layer --no-q2n

  # 默认网格搜索（9 + 4 行）/ 坐标搜索
  %(prog)s sweep --dir fx --name layer
  %(prog)s sweep --dir fx --name layer --coordinate

  # 特征分解与 SVD 的耗时对比
  %(prog)s bench --sizes 64 128 256 512

Environment:
  Q2N_THREADS    sweep 的最大线程数（默认 1）
  Q2N_LOG_LEVEL  日志级别（默认 WARNING）
  Q2N_CONFIG     配置文件路径
  NO_COLOR       关闭颜色
""",
    )
    common = _common_parser()
    layer = _layer_parser()
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    gen = sub.add_parser("gen", parents=[common], help="生成 .q2nt 合成数据")
    gen.add_argument("--kind", choices=GEN_KINDS, required=True)
    gen.add_argument("--m", type=int, help="输入通道数（weights 时为列数）")
    gen.add_argument("--c", type=int, help="样本数")
    gen.add_argument("--n", type=int, help="输出通道数（仅 weights）")
    gen.add_argument("--r", type=int, help="秩（exact-rank）")
    gen.add_argument("--rate", type=float, help="奇异值衰减率（decay）")
    gen.add_argument("--k", type=int, default=1, help="主导通道数（dominant，默认 1）")
    gen.add_argument("--noise", type=float, default=1e-3, help="噪声幅度（dominant，默认 1e-3）")
    gen.add_argument("--scale", type=float, default=1.0, help="权重标准差（weights，默认 1）")
    gen.add_argument("--seed", type=int, help="随机种子（默认 0）")
    gen.add_argument("--dtype", choices=("f64", "f32"), default="f64")
    gen.add_argument("-o", "--out", type=str, required=True, help="输出文件")

    run = sub.add_parser("run", parents=[common, layer], help="单层 Q2N 优化")
    run.add_argument("--no-q2n", action="store_true", help="只量化，α ≡ 1")
    run.add_argument("-o", "--out", type=str, help="输出目录（量化三元组 + 报告）")

    sw = sub.add_parser("sweep", parents=[common, layer], help="(t, λ) 网格搜索")
    sw.add_argument("--t-grid", type=float, nargs="+", help="t 网格")
    sw.add_argument("--lambda-grid", type=float, nargs="+", help="λ 网格")
    sw.add_argument("--coordinate", action="store_true", help="坐标搜索：先扫 λ，再在最优 λ 下扫 t")
    sw.add_argument("-o", "--out", type=str, help="另存 CSV 文件")

    bench = sub.add_parser("bench", parents=[common], help="sym_eig 与 SVD 的耗时对比")
    bench.add_argument("--sizes", type=int, nargs="+", help="矩阵阶数（默认 64 128 256 512）")
    bench.add_argument("--seed", type=int, help="随机种子（默认 0）")
    bench.add_argument("-o", "--out", type=str, help="另存 CSV 文件")

    cmp_bp = sub.add_parser("compare-bp", parents=[common, layer], help="闭式 α 与梯度下降对比")
    cmp_bp.add_argument("--epochs", type=int, nargs="+", help="epoch 网格（默认 20 50 100）")
    cmp_bp.add_argument("--lrs", type=float, nargs="+", help="学习率网格（默认 5e-4 1e-3 2e-3）")
    cmp_bp.add_argument("-o", "--out", type=str, help="另存 CSV 文件")

    spec = sub.add_parser("spectrum", parents=[common, layer], help="XXᵀ 特征值与比值表")
    spec.add_argument("-o", "--out", type=str, help="另存 CSV 文件")

    return parser


# === 参数整理 ===

def _pick(flag, default):
    return default if flag is None else flag


def _quant_config(args, defaults: Defaults, cols: int) -> QuantConfig:
    bits = _pick(args.bits, defaults.bits)
    if args.group is None:
        group = QuantConfig.resolve_group(bits, cols, defaults.group)
    else:
        group = None if args.group == "row" else args.group
    qcfg = QuantConfig(bits=bits, group_size=group, damp=_pick(args.damp, defaults.damp))
    qcfg.group_for(cols)
    return qcfg


def _layer_settings(args, defaults: Defaults) -> dict:
    settings = {
        "t": _pick(args.t, defaults.t),
        "lambda_reg": _pick(args.lambda_reg, defaults.lambda_reg),
        "selector": _pick(args.selector, defaults.selector),
        "quantizer": _pick(args.quantizer, defaults.quantizer),
        "excluded_top": _pick(args.exclude_top, defaults.exclude_top),
    }
    if not settings["t"] > 0:
        raise ArgumentError(f"--t must be positive, got {settings['t']}")
    if not settings["lambda_reg"] > 0:
        raise ArgumentError(f"--lambda must be positive, got {settings['lambda_reg']}")
    if settings["excluded_top"] < 0:
        raise ArgumentError(f"--exclude-top must be non-negative, got {settings['excluded_top']}")
    if settings["selector"] not in SELECTORS:
        raise ArgumentError(f"selector must be one of {SELECTORS}, got {settings['selector']!r}")
    if settings["quantizer"] not in QUANTIZERS:
        raise ArgumentError(f"quantizer must be one of {QUANTIZERS}, got {settings['quantizer']!r}")
    # 位宽与阻尼不依赖数据，加载前先校验
    QuantConfig(bits=_pick(args.bits, defaults.bits), damp=_pick(args.damp, defaults.damp))
    return settings


def _load_bundle(args, parser: argparse.ArgumentParser) -> LayerBundle:
    name = args.name or "layer"
    if args.dir:
        if args.weight or args.acts:
            parser.error("use either --dir or --weight/--acts, not both")
        return load_layer_bundle(args.dir, name)
    if not (args.weight and args.acts):
        parser.error("a layer needs --weight and --acts (or --dir)")
    return LayerBundle(weight=load_tensor(args.weight), activations=load_tensor(args.acts), name=name)


def _layer_inputs(args, defaults: Defaults, parser: argparse.ArgumentParser) -> tuple[dict, LayerBundle, QuantConfig]:
    """Validated settings, the loaded layer and its quantization config."""
    settings = _layer_settings(args, defaults)
    bundle = _load_bundle(args, parser)
    cols = bundle.weight.cols
    if settings["excluded_top"] >= cols:
        raise ArgumentError(f"--exclude-top must be smaller than the weight column count {cols}, got {settings['excluded_top']}")
    return settings, bundle, _quant_config(args, defaults, cols)


def _emit(text: str, out: str | None = None) -> None:
    """Machine-readable output: stdout, and optionally a file."""
    sys.stdout.write(text)
    sys.stdout.flush()
    if out:
        write_text(out, text)


# === 子命令 ===

def cmd_gen(args, defaults: Defaults, parser: argparse.ArgumentParser) -> int:
    seed = _pick(args.seed, defaults.seed)
    if args.kind == "weights":
        if args.n is None or args.m is None:
            parser.error("gen --kind weights needs --n and --m")
        tensor = gen_weights(args.n, args.m, seed=seed, scale=args.scale)
    else:
        if args.m is None or args.c is None:
            parser.error(f"gen --kind {args.kind} needs --m and --c")
        if args.kind == "exact-rank":
            if args.r is None:
                parser.error("gen --kind exact-rank needs --r")
            spec = SpectrumSpec.exact_rank(args.m, args.c, args.r, seed=seed)
        elif args.kind == "decay":
            if args.rate is None:
                parser.error("gen --kind decay needs --rate")
            spec = SpectrumSpec.decay(args.m, args.c, args.rate, seed=seed)
        else:
            spec = SpectrumSpec.dominant_plus_noise(args.m, args.c, k=args.k, noise_scale=args.noise, seed=seed)
        tensor = gen_activations(spec)

    if args.dtype != tensor.dtype:
        tensor = Tensor(tensor.data, dtype=args.dtype)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_tensor(tensor, out)
    ui.show_written([out])
    return 0


def cmd_run(args, defaults: Defaults, parser: argparse.ArgumentParser) -> int:
    settings, bundle, qcfg = _layer_inputs(args, defaults, parser)

    q, report = run_q2n(bundle, qcfg, apply=not args.no_q2n, **settings)
    text = csv_text([report.to_row()], LAYER_HEADER)
    _emit(text)

    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        written = list(save_quant_result(q, out, bundle.name).values())
        written.append(write_text(out / f"{bundle.name}.report.json", to_json(report.to_record())))
        written.append(write_text(out / f"{bundle.name}.report.csv", text))
        ui.show_written(written)
    return 0


def cmd_sweep(args, defaults: Defaults, parser: argparse.ArgumentParser) -> int:
    settings, bundle, qcfg = _layer_inputs(args, defaults, parser)
    t, lambda_reg = settings.pop("t"), settings.pop("lambda_reg")

    if args.coordinate:
        best, reports = coordinate_search(
            bundle, qcfg,
            t_grid=args.t_grid or defaults.t_grid,
            lambda_grid=args.lambda_grid or defaults.lambda_grid,
            t0=t,
            **settings,
        )
        ui.console.print(f"[green]best: t={best.t:g} λ={best.lambda_reg:g} err={best.err_q2n:.6g}[/green]")
    elif args.t_grid or args.lambda_grid:
        reports = sweep(
            bundle, qcfg,
            t_grid=args.t_grid or (t,),
            lambda_grid=args.lambda_grid or (lambda_reg,),
            **settings,
        )
    else:
        # 默认两段：固定 t 扫 λ，再固定 λ 扫 t，合并排序
        reports = axis_sweep(
            bundle, qcfg,
            t=t, lambda_reg=lambda_reg,
            t_grid=defaults.t_grid,
            lambda_grid=defaults.lambda_grid,
            **settings,
        )

    _emit(csv_text([r.to_row() for r in reports], LAYER_HEADER), args.out)
    ui.show(ui.reports_table(reports, title=f"sweep: {bundle.name}"))
    return 0


def cmd_bench(args, defaults: Defaults, parser: argparse.ArgumentParser) -> int:
    rows = bench_decomposition(args.sizes or defaults.bench_sizes, seed=_pick(args.seed, defaults.seed))
    _emit(csv_text([vars(r) for r in rows], BENCH_HEADER), args.out)
    ui.show(ui.bench_table(rows))
    return 0


def cmd_compare_bp(args, defaults: Defaults, parser: argparse.ArgumentParser) -> int:
    settings, bundle, qcfg = _layer_inputs(args, defaults, parser)
    rows = compare_bp(
        bundle, qcfg,
        epochs=args.epochs or defaults.bp_epochs,
        lrs=args.lrs or defaults.bp_lrs,
        **settings,
    )
    _emit(csv_text([vars(r) for r in rows], COMPARE_BP_HEADER), args.out)
    ui.show(ui.compare_bp_table(rows))
    return 0


def cmd_spectrum(args, defaults: Defaults, parser: argparse.ArgumentParser) -> int:
    settings, bundle, _ = _layer_inputs(args, defaults, parser)
    rows = spectrum_table(bundle, t=settings["t"], excluded_top=settings["excluded_top"])
    _emit(csv_text([vars(r) for r in rows], SPECTRUM_HEADER), args.out)
    return 0


COMMANDS = {
    "gen": cmd_gen,
    "run": cmd_run,
    "sweep": cmd_sweep,
    "bench": cmd_bench,
    "compare-bp": cmd_compare_bp,
    "spectrum": cmd_spectrum,
}


def main(argv=None) -> int:
    """CLI 主入口"""
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.verbose >= 2:
        level = "DEBUG"
    elif args.verbose == 1:
        level = "INFO"
    else:
        level = get_log_level()
    ui.setup_logging(level)

    try:
        defaults = load_defaults(args.config)
        return COMMANDS[args.command](args, defaults, parser)
    except Q2NError as e:
        ui.print_error(str(e))
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
