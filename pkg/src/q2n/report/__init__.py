#!/usr/bin/env python
# -*- coding: utf-8 -*-
'''
@File: src/q2n/report/__init__.py
@Time: 2026/10/16
@Author: UniqueDeep
@Description: 报告子模块初始化，导出计时器与 CSV/JSON 写出工具。
'''

"""
Report 子模块 - 实验记录

提供:
- StageTimer: 分阶段计时
- write_csv / csv_text / to_json / strip_timings / write_text: 输出工具
- 常量: LAYER_HEADER, BENCH_HEADER, COMPARE_BP_HEADER, SPECTRUM_HEADER, TIMINGS_KEY
"""

from .timing import StageTimer
from .writers import (
    BENCH_HEADER,
    COMPARE_BP_HEADER,
    LAYER_HEADER,
    SPECTRUM_HEADER,
    TIMINGS_KEY,
    csv_text,
    format_cell,
    strip_timings,
    to_json,
    write_csv,
    write_text,
)

__all__ = [
    # Timing
    "StageTimer",
    # Writers
    "LAYER_HEADER",
    "BENCH_HEADER",
    "COMPARE_BP_HEADER",
    "SPECTRUM_HEADER",
    "TIMINGS_KEY",
    "csv_text",
    "format_cell",
    "strip_timings",
    "to_json",
    "write_csv",
    "write_text",
]
