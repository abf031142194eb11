#!/usr/bin/env python
# -*- coding: utf-8 -*-
'''
@File: src/q2n/nullspace.py
@Time: 2026/10/16
@Author: UniqueDeep
@Description: 零空间截断选择（前后缀和比值及两种对照规则）、投影 Δ 的构建、闭式 α 求解与梯度下降对照。
'''

"""
Null-space optimization

1. select_rank_index:  前缀/后缀特征值和之比 R ≤ t，选出截断位置 k
2. build_projection:   Δ = U[:, k:] U[:, k:]ᵀ
3. solve_alpha:        H = W − (W − Wq)Δ
                       αᵢ = (⟨Wqᶦ, Hᶦ⟩ + λ) / (⟨Wqᶦ, Wqᶦ⟩ + λ)
4. apply_alpha:        scales[i, :] *= αᵢ（codes 与 zeros 不变）

α 是按输出通道（W 的行）定义的，直接并入每行的量化 scale，推理时不需要存 Δ。
"""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import AlphaSignError, ArgumentError, DimensionError, NumericalError
from .linalg import PROJECTOR_TOL, EigenBasis, Projector, as_matrix, check_projector, projector_from_basis
from .quantizer import QuantResult

logger = logging.getLogger(__name__)

SELECTORS = ("psr", "torch", "nscl")

DEFAULT_T = 0.1
DEFAULT_LAMBDA = 0.2
DEFAULT_EXCLUDED_TOP = 1
DEFAULT_NSCL_FACTOR = 50.0

DIVERGENCE_PATIENCE = 10


@dataclass(frozen=True)
class RatioSelection:
    """
    截断选择结果

    k 是完整下标空间中的位置：U₁ = U[:, k:] 取后 m − k 个特征向量。
    ratio_at_k 始终按前后缀和比值计算（去掉前 excluded_top 个值）；
    threshold_t 对 psr 为 t，对另外两种规则为实际使用的绝对截断值。
    """

    k: int
    ratio_at_k: float
    excluded_top: int
    threshold_t: float
    method: str = "psr"


@dataclass(frozen=True)
class AlphaVector:
    """Per-output-channel scaling factors."""

    values: np.ndarray
    lambda_reg: float
    opted_out: tuple = ()
    diverged: bool = False

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class NullSpaceProjection:
    selection: RatioSelection
    delta: Projector

    @property
    def k(self) -> int:
        return self.selection.k


def _as_values(values) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ArgumentError("eigenvalue sequence is empty")
    if np.any(v < 0):
        raise ArgumentError("eigenvalues must be non-negative")
    if np.any(np.diff(v) > 0):
        raise ArgumentError("eigenvalues must be sorted in descending order")
    return v


def prefix_suffix_ratio(values, k: int, excluded_top: int = DEFAULT_EXCLUDED_TOP) -> float:
    """Σ_{i≥k} λᵢ / Σ_{excluded_top≤i<k} λᵢ over 0-based indices; inf when the prefix is empty or zero."""
    v = np.asarray(values, dtype=np.float64)
    prefix = float(v[excluded_top:k].sum())
    suffix = float(v[k:].sum())
    if prefix <= 0.0:
        return float("inf")
    return suffix / prefix


def select_rank_index(
    values,
    t: float = DEFAULT_T,
    excluded_top: int = DEFAULT_EXCLUDED_TOP,
) -> RatioSelection:
    """
    Smallest k ≥ excluded_top + 1 whose trailing/leading sum ratio is ≤ t,
    with the first `excluded_top` values left out of both sums.

    An all-zero prefix never qualifies, so a zero spectrum yields k = m (Δ = 0).
    """
    v = _as_values(values)
    m = v.shape[0]
    if not t > 0:
        raise ArgumentError(f"t must be positive, got {t!r}")
    if isinstance(excluded_top, bool) or not isinstance(excluded_top, (int, np.integer)) or not 0 <= excluded_top < m:
        raise ArgumentError(f"excluded_top must be an integer in [0, {m}), got {excluded_top!r}")

    # 前缀和 prefix[k] = Σ v[excluded_top:k]，后缀和 suffix[k] = Σ v[k:]
    tail = v[excluded_top:]
    prefix = np.concatenate(([0.0], np.cumsum(tail)))
    suffix = np.concatenate((np.cumsum(tail[::-1])[::-1], [0.0]))
    for j in range(1, tail.shape[0] + 1):
        if prefix[j] <= 0.0:
            continue
        ratio = suffix[j] / prefix[j]
        if ratio <= t:
            return RatioSelection(k=excluded_top + j, ratio_at_k=float(ratio), excluded_top=int(excluded_top), threshold_t=float(t))

    return RatioSelection(k=m, ratio_at_k=float("inf") if prefix[-1] <= 0 else 0.0,
                          excluded_top=int(excluded_top), threshold_t=float(t))


def _alternative(v: np.ndarray, k: int, cutoff: float, method: str, excluded_top: int) -> RatioSelection:
    m = v.shape[0]
    ex = min(excluded_top, max(k - 1, 0), m - 1)
    return RatioSelection(
        k=int(k),
        ratio_at_k=prefix_suffix_ratio(v, k, ex) if k < m else 0.0,
        excluded_top=ex,
        threshold_t=float(cutoff),
        method=method,
    )


def select_rank_torch_style(values, rel_cutoff: float | None = None, excluded_top: int = DEFAULT_EXCLUDED_TOP) -> RatioSelection:
    """k = #{λᵢ > rel_cutoff·λ_max}, default rel_cutoff = m·eps (standard numerical-rank rule)."""
    v = _as_values(values)
    m = v.shape[0]
    if rel_cutoff is None:
        rel_cutoff = m * np.finfo(np.float64).eps
    cutoff = rel_cutoff * v[0]
    if v[0] <= 0.0:
        # 全零谱：与 psr 一致，取空基
        return _alternative(v, m, cutoff, "torch", excluded_top)
    k = int(np.count_nonzero(v > cutoff))
    return _alternative(v, k, cutoff, "torch", excluded_top)


def select_rank_nscl_style(values, factor: float = DEFAULT_NSCL_FACTOR, excluded_top: int = DEFAULT_EXCLUDED_TOP) -> RatioSelection:
    """k = #{λᵢ > factor·λ_min}, clamped to k ≥ 1; λ_min = 0 falls back to the torch-style rule."""
    v = _as_values(values)
    m = v.shape[0]
    if v[-1] <= 0.0:
        fallback = select_rank_torch_style(v, excluded_top=excluded_top)
        k = max(fallback.k, 1)
        return _alternative(v, k, fallback.threshold_t, "nscl", excluded_top)
    cutoff = factor * v[-1]
    k = max(int(np.count_nonzero(v > cutoff)), 1)
    return _alternative(v, k, cutoff, "nscl", excluded_top)


def select(values, method: str = "psr", t: float = DEFAULT_T, excluded_top: int = DEFAULT_EXCLUDED_TOP) -> RatioSelection:
    """Dispatch on the selector name."""
    if method == "psr":
        return select_rank_index(values, t=t, excluded_top=excluded_top)
    if method == "torch":
        return select_rank_torch_style(values, excluded_top=excluded_top)
    if method == "nscl":
        return select_rank_nscl_style(values, excluded_top=excluded_top)
    raise ArgumentError(f"unknown selector {method!r}, expected one of {SELECTORS}")


def build_projection(basis: EigenBasis, selection: RatioSelection) -> NullSpaceProjection:
    """Δ from the trailing eigenvectors U[:, k:]."""
    if selection.k > basis.m:
        raise ArgumentError(f"selection k={selection.k} exceeds basis size {basis.m}")
    delta = projector_from_basis(basis.vectors, selection.k)
    expected = basis.m - selection.k
    if abs(delta.trace - expected) > 0.5:
        raise NumericalError(f"projector trace {delta.trace:.3f} differs from m - k = {expected}")
    residuals = check_projector(delta)
    worst = max(residuals)
    if worst > PROJECTOR_TOL:
        raise NumericalError("null-space projector is not symmetric idempotent", worst)
    if selection.k == basis.m:
        logger.info("null-space basis is empty (k = m = %d), delta = 0", basis.m)
    return NullSpaceProjection(selection=selection, delta=delta)


def _check_pair(W: np.ndarray, Wq: np.ndarray, delta: Projector) -> None:
    if W.shape != Wq.shape:
        raise DimensionError("W vs Wq", W.shape, Wq.shape)
    if delta.matrix.shape != (W.shape[1], W.shape[1]):
        raise DimensionError("W vs delta", W.shape, delta.matrix.shape)


def _as_delta(delta) -> Projector:
    return delta if isinstance(delta, Projector) else Projector(matrix=as_matrix(delta))


def projected_target(W, Wq, delta) -> np.ndarray:
    """H = W − (W − Wq)·Δ"""
    W, Wq, delta = as_matrix(W), as_matrix(Wq), _as_delta(delta)
    _check_pair(W, Wq, delta)
    return W - (W - Wq) @ delta.matrix


def q2n_objective(W, Wq, delta, alpha, lambda_reg: float) -> float:
    """‖(W − Wq)Δ − (W − α⊙Wq)‖²_F + λ‖α − 1‖²"""
    W, Wq, delta = as_matrix(W), as_matrix(Wq), _as_delta(delta)
    a = alpha.values if isinstance(alpha, AlphaVector) else np.asarray(alpha, dtype=np.float64)
    residual = (W - Wq) @ delta.matrix - (W - a[:, None] * Wq)
    return float(np.sum(residual * residual) + lambda_reg * np.sum((a - 1.0) ** 2))


def _check_lambda(lambda_reg: float) -> None:
    if not lambda_reg > 0:
        raise ArgumentError(f"lambda_reg must be positive, got {lambda_reg!r}")


def solve_alpha(W, Wq, delta, lambda_reg: float = DEFAULT_LAMBDA) -> AlphaVector:
    """
    Closed-form minimizer of the regularized objective, one channel per row.

    Channels whose optimum is ≤ 0 keep αᵢ = 1 (scales stay positive) and are
    listed in `opted_out`.
    """
    _check_lambda(lambda_reg)
    W, Wq = as_matrix(W), as_matrix(Wq)
    H = projected_target(W, Wq, delta)
    if not np.all(np.isfinite(H)):
        raise NumericalError("projected target H contains non-finite values")

    num = np.einsum("ij,ij->i", Wq, H) + lambda_reg
    den = np.einsum("ij,ij->i", Wq, Wq) + lambda_reg
    alpha = num / den

    bad = np.flatnonzero(alpha <= 0)
    if bad.size:
        logger.warning("alpha <= 0 on %d channel(s) %s, keeping alpha = 1", bad.size, bad[:8].tolist())
        alpha[bad] = 1.0
    return AlphaVector(values=alpha, lambda_reg=float(lambda_reg), opted_out=tuple(int(i) for i in bad))


def bp_oracle(W, Wq, delta, lambda_reg: float = DEFAULT_LAMBDA, epochs: int = 100, lr: float = 1e-3) -> AlphaVector:
    """
    Full-batch gradient descent on the same objective, starting from α = 1.

    Divergence (objective rising for 10 consecutive steps) is flagged on the
    result and logged; the last iterate is still returned.
    """
    _check_lambda(lambda_reg)
    if isinstance(epochs, bool) or not isinstance(epochs, (int, np.integer)) or epochs < 1:
        raise ArgumentError(f"epochs must be a positive integer, got {epochs!r}")
    if not lr > 0:
        raise ArgumentError(f"lr must be positive, got {lr!r}")

    W, Wq = as_matrix(W), as_matrix(Wq)
    H = projected_target(W, Wq, delta)
    gram_q = np.einsum("ij,ij->i", Wq, Wq)
    cross = np.einsum("ij,ij->i", Wq, H)

    alpha = np.ones(W.shape[0])
    # 目标按通道分解：Σ α²⟨Wq,Wq⟩ − 2α⟨Wq,H⟩ + ‖H‖² + λ(α − 1)²
    h_sq = float(np.sum(H * H))

    def objective(a: np.ndarray) -> float:
        return float(np.sum(a * a * gram_q - 2.0 * a * cross) + h_sq + lambda_reg * np.sum((a - 1.0) ** 2))

    previous = objective(alpha)
    rising = 0
    diverged = False
    for _ in range(int(epochs)):
        grad = 2.0 * (alpha * gram_q - cross) + 2.0 * lambda_reg * (alpha - 1.0)
        alpha = alpha - lr * grad
        current = objective(alpha)
        rising = rising + 1 if current > previous else 0
        previous = current
        if rising >= DIVERGENCE_PATIENCE and not diverged:
            diverged = True
            logger.warning("bp_oracle: objective increased for %d consecutive steps (lr=%g)", rising, lr)
        if not np.isfinite(current):
            diverged = True
            break

    return AlphaVector(values=alpha, lambda_reg=float(lambda_reg), diverged=diverged)


def apply_alpha(q: QuantResult, alpha: AlphaVector) -> QuantResult:
    """Fold α into the per-row scales; codes and zero-points are left untouched."""
    a = alpha.values if isinstance(alpha, AlphaVector) else np.asarray(alpha, dtype=np.float64)
    if a.shape != (q.rows,):
        raise DimensionError("alpha length vs quantized rows", a.shape, (q.rows,))
    bad = np.flatnonzero(~(a > 0) | ~np.isfinite(a))
    if bad.size:
        raise AlphaSignError(bad.tolist())
    return q.with_scales(q.scales * a[:, None])
