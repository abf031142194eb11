#!/usr/bin/env python
# -*- coding: utf-8 -*-
'''
@File: src/q2n/report/writers.py
@Time: 2026/10/16
@Author: UniqueDeep
@Description: 报告输出：固定表头的 CSV 与 JSON 旁路文件。
'''

"""
报告写出

CSV 的数值用 repr 的最短往返表示，相同输入总是得到相同字节；
JSON 旁路文件把耗时放在单独的 "timings" 键下，方便比较时整体剔除。
"""

import csv
import io
import json
import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence, TextIO

from ..errors import TensorIOError

# === 固定表头 ===
LAYER_HEADER = (
    "layer", "quantizer", "bits", "group", "t", "lambda", "k", "trace_delta",
    "err_baseline", "err_q2n", "rel_drop", "alpha_min", "alpha_max", "alpha_mean",
    "opt_out", "ms_eig", "ms_alpha", "ms_total",
)
BENCH_HEADER = ("m", "ms_eig", "ms_svd", "speedup", "max_value_diff")
COMPARE_BP_HEADER = ("epochs", "lr", "objective_bp", "objective_closed", "objective_identity", "gap", "diverged")
SPECTRUM_HEADER = ("index", "eigenvalue", "psr_ratio", "null_basis")

TIMINGS_KEY = "timings"


def format_cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    if value is None:
        return ""
    return str(value)


def write_csv(rows: Iterable[Mapping], header: Sequence[str], stream: TextIO, with_header: bool = True) -> None:
    """Rows are mappings keyed by the header names; extra keys are ignored."""
    writer = csv.writer(stream, lineterminator="\n")
    if with_header:
        writer.writerow(header)
    for row in rows:
        writer.writerow([format_cell(row[key]) for key in header])


def csv_text(rows: Iterable[Mapping], header: Sequence[str]) -> str:
    buf = io.StringIO()
    write_csv(rows, header, buf)
    return buf.getvalue()


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return format_cell(value)
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    return value


def to_json(record: Mapping) -> str:
    return json.dumps(_json_safe(dict(record)), indent=2, ensure_ascii=False) + "\n"


def strip_timings(record: Mapping) -> dict:
    """The record without its timing block, for determinism comparisons."""
    return {k: v for k, v in record.items() if k != TIMINGS_KEY}


def write_text(path, text: str) -> Path:
    path = Path(path)
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as e:
        raise TensorIOError(path, f"write failed: {e.strerror or e}")
    return path
