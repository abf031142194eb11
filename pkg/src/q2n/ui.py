#!/usr/bin/env python
# -*- coding: utf-8 -*-
'''
@File: src/q2n/ui.py
@Time: 2026/10/16
@Author: UniqueDeep
@Description: UI rendering components using Rich (stderr only; stdout is reserved for reports).
'''

import logging
import os
import sys
from typing import Sequence

from rich.console import Console
from rich.logging import RichHandler
from rich.markup import escape
from rich.panel import Panel
from rich.table import Table

# Rich Console 配置：支持 Windows 和 NO_COLOR 环境变量；输出到 stderr
console = Console(
    stderr=True,
    legacy_windows=(sys.platform == 'win32'),
    no_color=os.getenv('NO_COLOR') is not None,
)


def setup_logging(level: str | int = "WARNING") -> logging.Logger:
    """Attach a RichHandler on the stderr console to the `q2n` logger (idempotent)."""
    logger = logging.getLogger("q2n")
    try:
        logger.setLevel(level)
    except ValueError:
        logger.setLevel(logging.WARNING)
    if not any(isinstance(h, RichHandler) for h in logger.handlers):
        handler = RichHandler(console=console, show_path=False, rich_tracebacks=False)
        handler.setFormatter(logging.Formatter("%(message)s"))
        logger.addHandler(handler)
    logger.propagate = False
    return logger


def print_error(message: str) -> None:
    console.print(f"[red]Error: {escape(message)}[/red]", soft_wrap=True)


def _fmt(value: float) -> str:
    return f"{value:.4g}"


def reports_table(reports: Sequence, title: str = "Q2N") -> Table:
    """LayerReport rows: selection, errors and α statistics."""
    table = Table(title=title, show_header=True, header_style="bold cyan")
    for column in ("layer", "selector", "t", "λ", "k", "err base", "err q2n", "drop", "α range", "opt-out"):
        table.add_column(column, justify="right" if column not in ("layer", "selector") else "left")
    for r in reports:
        drop_style = "green" if r.err_relative_drop > 0 else "yellow"
        table.add_row(
            r.layer_name,
            r.selector,
            _fmt(r.t),
            _fmt(r.lambda_reg),
            str(r.k),
            _fmt(r.err_baseline),
            _fmt(r.err_q2n),
            f"[{drop_style}]{r.err_relative_drop:+.2%}[/{drop_style}]",
            f"{_fmt(r.alpha_min)} .. {_fmt(r.alpha_max)}",
            str(r.channels_opted_out),
        )
    return table


def bench_table(rows: Sequence) -> Table:
    table = Table(title="Eigen vs SVD", show_header=True, header_style="bold cyan")
    for column in ("m", "eig (ms)", "svd (ms)", "speedup", "max |λ − σ|"):
        table.add_column(column, justify="right")
    for r in rows:
        table.add_row(str(r.m), f"{r.ms_eig:.2f}", f"{r.ms_svd:.2f}", f"{r.speedup:.1f}x", f"{r.max_value_diff:.2e}")
    return table


def compare_bp_table(rows: Sequence) -> Table:
    table = Table(title="Closed form vs gradient descent", show_header=True, header_style="bold cyan")
    for column in ("epochs", "lr", "objective (bp)", "objective (closed)", "gap", "diverged"):
        table.add_column(column, justify="right")
    for r in rows:
        table.add_row(
            str(r.epochs),
            f"{r.lr:g}",
            _fmt(r.objective_bp),
            _fmt(r.objective_closed),
            f"{r.gap:.3e}",
            "[red]yes[/red]" if r.diverged else "no",
        )
    return table


def show(renderable) -> None:
    console.print(renderable)


def show_written(paths: Sequence) -> None:
    """Panel listing files written by a command."""
    body = "\n".join(f"[dim]•[/dim] {p}" for p in paths)
    console.print(Panel(body, title="[bold green]Written[/bold green]", border_style="green"))
