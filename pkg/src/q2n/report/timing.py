#!/usr/bin/env python
# -*- coding: utf-8 -*-
'''
@File: src/q2n/report/timing.py
@Time: 2026/10/16
@Author: UniqueDeep
@Description: StageTimer，按阶段记录单调时钟耗时（毫秒）。
'''

import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Dict

logger = logging.getLogger(__name__)


@dataclass
class StageTimer:
    """阶段计时器

    使用示例：
        timer = StageTimer()
        with timer.stage("eig"):
            basis = sym_eig(S)
        timer.ms("eig")
    """

    stages: Dict[str, float] = field(default_factory=dict)

    @contextmanager
    def stage(self, name: str):
        start = time.perf_counter()
        try:
            yield self
        finally:
            elapsed = (time.perf_counter() - start) * 1000.0
            self.stages[name] = self.stages.get(name, 0.0) + elapsed
            logger.debug("stage %s: %.3f ms", name, elapsed)

    def add(self, name: str, ms: float) -> None:
        """Credit time measured elsewhere (shared stages in a sweep)."""
        self.stages[name] = self.stages.get(name, 0.0) + float(ms)

    def ms(self, name: str) -> float:
        return self.stages.get(name, 0.0)

    def total_ms(self) -> float:
        return sum(self.stages.values())

    def as_dict(self) -> Dict[str, float]:
        """{"ms_<stage>": ..., "ms_total": ...} in insertion order."""
        out = {f"ms_{name}": value for name, value in self.stages.items()}
        out["ms_total"] = self.total_ms()
        return out
