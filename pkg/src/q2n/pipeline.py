#!/usr/bin/env python
# -*- coding: utf-8 -*-
'''
@File: src/q2n/pipeline.py
@Time: 2026/10/16
@Author: UniqueDeep
@Description: End-to-end layer optimization, error metrics, hyperparameter search and the decomposition benchmark.
'''

"""
单层流程（顺序固定）:

    W_q = Q(W)                     quantize (rtn | gptq, GPTQ 复用同一个 XXᵀ)
    U, λ = Eigen(XXᵀ)              sym_eig
    k = select(λ)                  psr | torch | nscl
    Δ = U[:, k:] U[:, k:]ᵀ         build_projection
    H = W − (W − W_q)Δ
    α = solve_alpha(W, W_q, Δ)
    return α ⊙ W_q                 apply_alpha，连同 LayerReport

sweep / coordinate_search 共享一次量化与特征分解，只对 (t, λ) 网格重复后四步。
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from .calibgen import gen_psd
from .config import BP_EPOCHS, BP_LRS, get_thread_cap
from .errors import ArgumentError, DimensionError, NumericalError
from .linalg import EigenBasis, as_matrix, gram, svd_oracle, sym_eig
from .nullspace import (
    DEFAULT_EXCLUDED_TOP,
    DEFAULT_LAMBDA,
    DEFAULT_T,
    AlphaVector,
    apply_alpha,
    bp_oracle,
    build_projection,
    prefix_suffix_ratio,
    q2n_objective,
    select,
    select_rank_index,
    solve_alpha,
)
from .quantizer import QuantConfig, QuantResult, quantize
from .report import TIMINGS_KEY, StageTimer
from .tensorio import LayerBundle

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LayerReport:
    """
    单层实验记录

    err_baseline = ‖WX − W_qX‖_F，err_q2n = ‖WX − (α⊙W_q)X‖_F，
    err_relative_drop = (baseline − q2n) / baseline（baseline 为 0 时记 0）。
    """

    layer_name: str
    quantizer: str
    selector: str
    bits: int
    group: int | None
    t: float
    lambda_reg: float
    m: int
    k: int
    trace_delta: float
    err_baseline: float
    err_q2n: float
    err_relative_drop: float
    alpha_min: float
    alpha_max: float
    alpha_mean: float
    channels_opted_out: int
    applied: bool = True
    timings: Dict[str, float] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for name in ("err_baseline", "err_q2n"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value >= 0):
                raise NumericalError(f"{name} must be finite and non-negative, got {value!r}")
        if abs(self.trace_delta - (self.m - self.k)) > 0.5:
            raise NumericalError(f"trace(delta) = {self.trace_delta:.3f} but m - k = {self.m - self.k}")

    def to_row(self) -> dict:
        """One row under the fixed layer CSV header."""
        return {
            "layer": self.layer_name,
            "quantizer": self.quantizer,
            "bits": self.bits,
            "group": "row" if self.group is None else self.group,
            "t": self.t,
            "lambda": self.lambda_reg,
            "k": self.k,
            "trace_delta": self.trace_delta,
            "err_baseline": self.err_baseline,
            "err_q2n": self.err_q2n,
            "rel_drop": self.err_relative_drop,
            "alpha_min": self.alpha_min,
            "alpha_max": self.alpha_max,
            "alpha_mean": self.alpha_mean,
            "opt_out": self.channels_opted_out,
            "ms_eig": self.timings.get("ms_eig", 0.0),
            "ms_alpha": self.timings.get("ms_alpha", 0.0),
            "ms_total": self.timings.get("ms_total", 0.0),
        }

    def to_record(self) -> dict:
        """JSON sidecar content; timings live under their own key."""
        record = asdict(self)
        record[TIMINGS_KEY] = record.pop("timings")
        return record


@dataclass(frozen=True)
class BenchRow:
    m: int
    ms_eig: float
    ms_svd: float
    speedup: float
    max_value_diff: float


@dataclass(frozen=True)
class BPRow:
    epochs: int
    lr: float
    objective_bp: float
    objective_closed: float
    objective_identity: float
    gap: float
    diverged: bool


@dataclass(frozen=True)
class SpectrumRow:
    index: int
    eigenvalue: float
    psr_ratio: float
    null_basis: bool


@dataclass(frozen=True)
class _Prepared:
    """Quantization and decomposition shared by every grid point of one layer."""

    bundle: LayerBundle
    qcfg: QuantConfig
    quantizer: str
    q: QuantResult
    basis: EigenBasis
    err_baseline: float
    timings: Dict[str, float]


def layer_error(W, W_prime, X) -> float:
    """‖WX − W'X‖_F in float64."""
    W, W_prime, X = as_matrix(W), as_matrix(W_prime), as_matrix(X)
    if W.shape != W_prime.shape:
        raise DimensionError("layer_error: W vs W'", W.shape, W_prime.shape)
    if W.shape[1] != X.shape[0]:
        raise DimensionError("layer_error: W vs X", W.shape, X.shape)
    return float(np.linalg.norm((W - W_prime) @ X, "fro"))


def relative_drop(baseline: float, optimized: float) -> float:
    return (baseline - optimized) / baseline if baseline > 0 else 0.0


def _prepare(bundle: LayerBundle, qcfg: QuantConfig, quantizer: str) -> _Prepared:
    W, X = bundle.weight.data, bundle.activations.data
    timer = StageTimer()
    with timer.stage("quantize"):
        q = quantize(W, X, qcfg, quantizer)
    with timer.stage("eig"):
        basis = sym_eig(gram(X))
    return _Prepared(
        bundle=bundle,
        qcfg=qcfg,
        quantizer=quantizer,
        q=q,
        basis=basis,
        err_baseline=layer_error(W, q.w_q, X),
        timings=dict(timer.stages),
    )


def _optimize(
    prep: _Prepared,
    t: float,
    lambda_reg: float,
    selector: str,
    excluded_top: int,
    apply: bool = True,
) -> tuple[QuantResult, LayerReport]:
    W, X = prep.bundle.weight.data, prep.bundle.activations.data
    timer = StageTimer()
    for name, ms in prep.timings.items():
        timer.add(name, ms)

    with timer.stage("select"):
        selection = select(prep.basis.values, selector, t=t, excluded_top=excluded_top)
        projection = build_projection(prep.basis, selection)
    with timer.stage("alpha"):
        if apply:
            alpha = solve_alpha(W, prep.q.w_q, projection.delta, lambda_reg)
            q_opt = apply_alpha(prep.q, alpha)
        else:
            alpha = AlphaVector(values=np.ones(prep.q.rows), lambda_reg=float(lambda_reg))
            q_opt = prep.q

    err_q2n = layer_error(W, q_opt.w_q, X) if apply else prep.err_baseline
    report = LayerReport(
        layer_name=prep.bundle.name,
        quantizer=prep.quantizer,
        selector=selector,
        bits=prep.qcfg.bits,
        group=prep.qcfg.group_size,
        t=float(t),
        lambda_reg=float(lambda_reg),
        m=prep.basis.m,
        k=projection.k,
        trace_delta=projection.delta.trace,
        err_baseline=prep.err_baseline,
        err_q2n=err_q2n,
        err_relative_drop=relative_drop(prep.err_baseline, err_q2n),
        alpha_min=float(alpha.values.min()),
        alpha_max=float(alpha.values.max()),
        alpha_mean=float(alpha.values.mean()),
        channels_opted_out=len(alpha.opted_out),
        applied=apply,
        timings=timer.as_dict(),
    )
    logger.debug("layer %s: k=%d err %.6g -> %.6g", report.layer_name, report.k, report.err_baseline, report.err_q2n)
    return q_opt, report


def run_q2n(
    bundle: LayerBundle,
    qcfg: QuantConfig,
    t: float = DEFAULT_T,
    lambda_reg: float = DEFAULT_LAMBDA,
    selector: str = "psr",
    quantizer: str = "gptq",
    excluded_top: int = DEFAULT_EXCLUDED_TOP,
    apply: bool = True,
) -> tuple[QuantResult, LayerReport]:
    """
    Optimize one layer and report the before/after output error.

    apply=False keeps α ≡ 1 (the plain quantizer baseline) while still
    recording the selected k and Δ.
    """
    prep = _prepare(bundle, qcfg, quantizer)
    return _optimize(prep, t, lambda_reg, selector, excluded_top, apply=apply)


def _check_grid(name: str, grid: Sequence[float]) -> tuple:
    grid = tuple(float(v) for v in grid)
    if not grid:
        raise ArgumentError(f"{name} must not be empty")
    return grid


def _run_grid(
    prep: _Prepared,
    points: List[tuple[float, float]],
    selector: str,
    excluded_top: int,
    workers: int,
) -> List[LayerReport]:
    def task(point):
        return _optimize(prep, point[0], point[1], selector, excluded_top)[1]

    if workers <= 1 or len(points) == 1:
        reports = [task(p) for p in points]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            # map 保持提交顺序
            reports = list(pool.map(task, points))
    return sorted(reports, key=lambda r: r.err_q2n)


def sweep(
    bundle: LayerBundle,
    qcfg: QuantConfig,
    t_grid: Sequence[float],
    lambda_grid: Sequence[float],
    selector: str = "psr",
    quantizer: str = "gptq",
    excluded_top: int = DEFAULT_EXCLUDED_TOP,
    workers: int | None = None,
) -> List[LayerReport]:
    """Exhaustive (t, λ) grid, rows sorted by err_q2n ascending (stable over grid order)."""
    t_grid = _check_grid("t_grid", t_grid)
    lambda_grid = _check_grid("lambda_grid", lambda_grid)
    workers = get_thread_cap() if workers is None else int(workers)

    prep = _prepare(bundle, qcfg, quantizer)
    points = [(t, lam) for t in t_grid for lam in lambda_grid]
    logger.info("sweep %s: %d grid point(s), %d worker(s)", bundle.name, len(points), workers)
    return _run_grid(prep, points, selector, excluded_top, workers)


def axis_sweep(
    bundle: LayerBundle,
    qcfg: QuantConfig,
    t: float,
    lambda_reg: float,
    t_grid: Sequence[float],
    lambda_grid: Sequence[float],
    selector: str = "psr",
    quantizer: str = "gptq",
    excluded_top: int = DEFAULT_EXCLUDED_TOP,
    workers: int | None = None,
) -> List[LayerReport]:
    """
    λ over lambda_grid at fixed t, then t over t_grid at fixed λ, on one quantization.

    Rows of both scans come back merged and sorted by err_q2n; the point
    (t, λ) lies on both axes and is reported by each scan.
    """
    t_grid = _check_grid("t_grid", t_grid)
    lambda_grid = _check_grid("lambda_grid", lambda_grid)
    workers = get_thread_cap() if workers is None else int(workers)

    prep = _prepare(bundle, qcfg, quantizer)
    points = [(float(t), lam) for lam in lambda_grid] + [(tt, float(lambda_reg)) for tt in t_grid]
    logger.info("axis sweep %s: %d point(s), %d worker(s)", bundle.name, len(points), workers)
    return _run_grid(prep, points, selector, excluded_top, workers)


def coordinate_search(
    bundle: LayerBundle,
    qcfg: QuantConfig,
    t_grid: Sequence[float],
    lambda_grid: Sequence[float],
    t0: float = DEFAULT_T,
    selector: str = "psr",
    quantizer: str = "gptq",
    excluded_top: int = DEFAULT_EXCLUDED_TOP,
    workers: int | None = None,
) -> tuple[LayerReport, List[LayerReport]]:
    """
    Two-pass coordinate search: scan λ at t = t0, then scan t at the best λ.

    Returns the best report and every visited (t, λ) point once, sorted by err_q2n.
    """
    t_grid = _check_grid("t_grid", t_grid)
    lambda_grid = _check_grid("lambda_grid", lambda_grid)
    workers = get_thread_cap() if workers is None else int(workers)

    prep = _prepare(bundle, qcfg, quantizer)
    first = _run_grid(prep, [(float(t0), lam) for lam in lambda_grid], selector, excluded_top, workers)
    best_lambda = first[0].lambda_reg
    second = _run_grid(prep, [(t, best_lambda) for t in t_grid], selector, excluded_top, workers)

    visited: Dict[tuple, LayerReport] = {}
    for report in first + second:
        visited.setdefault((report.t, report.lambda_reg), report)
    reports = sorted(visited.values(), key=lambda r: r.err_q2n)
    return reports[0], reports


def bench_decomposition(sizes: Sequence[int], seed: int = 0) -> List[BenchRow]:
    """Time sym_eig against svd_oracle on seeded PSD matrices, one size after another."""
    rows = []
    for m in sizes:
        if isinstance(m, bool) or not isinstance(m, (int, np.integer)) or m < 2:
            raise ArgumentError(f"bench sizes must be integers >= 2, got {m!r}")
        S = gen_psd(int(m), seed)
        timer = StageTimer()
        with timer.stage("eig"):
            eig = sym_eig(S)
        with timer.stage("svd"):
            ref = svd_oracle(S)
        ms_eig, ms_svd = timer.ms("eig"), timer.ms("svd")
        rows.append(BenchRow(
            m=int(m),
            ms_eig=ms_eig,
            ms_svd=ms_svd,
            speedup=ms_svd / ms_eig if ms_eig > 0 else float("inf"),
            max_value_diff=float(np.max(np.abs(eig.values - ref.values))),
        ))
        logger.info("bench m=%d: eig %.2f ms, svd %.2f ms", m, ms_eig, ms_svd)
    return rows


def compare_bp(
    bundle: LayerBundle,
    qcfg: QuantConfig,
    t: float = DEFAULT_T,
    lambda_reg: float = DEFAULT_LAMBDA,
    selector: str = "psr",
    quantizer: str = "gptq",
    excluded_top: int = DEFAULT_EXCLUDED_TOP,
    epochs: Sequence[int] = BP_EPOCHS,
    lrs: Sequence[float] = BP_LRS,
) -> List[BPRow]:
    """Closed-form α against gradient descent on the same objective, one row per (epochs, lr)."""
    if not epochs or not lrs:
        raise ArgumentError("epochs and lrs must not be empty")
    prep = _prepare(bundle, qcfg, quantizer)
    W, Wq = bundle.weight.data, prep.q.w_q
    projection = build_projection(prep.basis, select(prep.basis.values, selector, t=t, excluded_top=excluded_top))
    delta = projection.delta

    closed = q2n_objective(W, Wq, delta, solve_alpha(W, Wq, delta, lambda_reg), lambda_reg)
    identity = q2n_objective(W, Wq, delta, np.ones(prep.q.rows), lambda_reg)

    rows = []
    for n_epochs in epochs:
        for lr in lrs:
            alpha = bp_oracle(W, Wq, delta, lambda_reg, epochs=int(n_epochs), lr=float(lr))
            with np.errstate(over="ignore", invalid="ignore"):
                objective = q2n_objective(W, Wq, delta, alpha, lambda_reg)
            if not np.isfinite(objective):
                objective = float("inf")
            rows.append(BPRow(
                epochs=int(n_epochs),
                lr=float(lr),
                objective_bp=objective,
                objective_closed=closed,
                objective_identity=identity,
                gap=objective - closed,
                diverged=alpha.diverged,
            ))
    return rows


def spectrum_table(bundle: LayerBundle, t: float = DEFAULT_T, excluded_top: int = DEFAULT_EXCLUDED_TOP) -> List[SpectrumRow]:
    """
    Eigenvalues of XXᵀ with the ratio obtained by cutting at each index and
    whether the index falls in the selected null-space basis.
    """
    basis = sym_eig(gram(bundle.activations))
    selection = select_rank_index(basis.values, t=t, excluded_top=excluded_top)
    v = basis.values
    return [
        SpectrumRow(
            index=i,
            eigenvalue=float(v[i]),
            psr_ratio=prefix_suffix_ratio(v, i, excluded_top) if i > excluded_top else float("inf"),
            null_basis=i >= selection.k,
        )
        for i in range(basis.m)
    ]
