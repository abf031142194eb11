#!/usr/bin/env python
# -*- coding: utf-8 -*-
'''
@File: src/q2n/quantizer.py
@Time: 2026/10/16
@Author: UniqueDeep
@Description: Weight-only fake quantization: round-to-nearest and a GPTQ-style compensated variant.
'''

"""
Asymmetric min-max quantization, per row or per column group:

    s = (max - min) / (2^b - 1)
    z = clamp(round(-min / s), 0, 2^b - 1)
    code = clamp(round(w / s) + z, 0, 2^b - 1)
    w_q = s * (code - z)

round() is round-half-to-even (numpy's default). A constant group c is stored
with s = |c| (s = 1 when c == 0) so that it reconstructs exactly.
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ArgumentError, DimensionError, NumericalError
from .linalg import as_matrix, gram

logger = logging.getLogger(__name__)

QUANTIZERS = ("rtn", "gptq")


@dataclass(frozen=True)
class QuantConfig:
    """
    量化配置

    bits: 2..8
    group_size: 每组列数；None 表示整行一组（per-row）
    damp: GPTQ 阻尼比例，H += damp·mean(diag(H))·I
    """

    bits: int = 2
    group_size: int | None = None
    scheme: str = "asymmetric"
    damp: float = 0.01

    def __post_init__(self):
        if isinstance(self.bits, bool) or not isinstance(self.bits, int) or not 2 <= self.bits <= 8:
            raise ArgumentError(f"bits must be an integer in [2, 8], got {self.bits!r}")
        if self.group_size is not None and (
            not isinstance(self.group_size, int) or self.group_size < 1
        ):
            raise ArgumentError(f"group_size must be a positive integer or None, got {self.group_size!r}")
        if self.scheme != "asymmetric":
            raise ArgumentError(f"only the asymmetric scheme is supported, got {self.scheme!r}")
        if not 0.0 < self.damp <= 1.0:
            raise ArgumentError(f"damp must lie in (0, 1], got {self.damp!r}")

    @property
    def maxq(self) -> int:
        return 2 ** self.bits - 1

    def group_for(self, cols: int) -> int:
        """Effective group width for a weight with `cols` columns."""
        if self.group_size is None:
            return cols
        if cols % self.group_size != 0:
            raise ArgumentError(f"group_size {self.group_size} does not divide {cols} columns")
        return self.group_size

    @staticmethod
    def resolve_group(bits: int, cols: int, requested: int | None = 128) -> int | None:
        """2-bit uses `requested` when it divides cols, otherwise per-row; wider codes stay per-row."""
        if bits == 2 and requested is not None and cols % requested == 0:
            return requested
        return None


@dataclass(frozen=True)
class QuantResult:
    """
    量化结果

    w_q:    (n, m) fake-quantized weights, w_q = scales·(codes − zeros) per group
    codes:  (n, m) integers in [0, 2^b − 1]
    scales: (n, G) strictly positive
    zeros:  (n, G)
    """

    w_q: np.ndarray
    codes: np.ndarray
    scales: np.ndarray
    zeros: np.ndarray
    bits: int
    group_size: int

    @classmethod
    def from_parts(cls, codes, scales, zeros, bits: int, group_size: int) -> "QuantResult":
        raw = np.asarray(codes)
        if raw.dtype.kind == "f" and not np.array_equal(raw, np.round(raw)):
            raise ArgumentError("codes must be integral")
        codes = raw.astype(np.int64)
        scales = np.asarray(scales, dtype=np.float64)
        zeros = np.asarray(zeros, dtype=np.float64)
        maxq = 2 ** bits - 1
        if codes.min() < 0 or codes.max() > maxq:
            raise ArgumentError(f"codes must lie in [0, {maxq}]")
        if not (np.all(np.isfinite(scales)) and np.all(scales > 0)):
            raise NumericalError("quantization scales must be positive and finite")
        w_q = reconstruct(codes, scales, zeros, group_size)
        for arr in (w_q, codes, scales, zeros):
            arr.setflags(write=False)
        return cls(w_q=w_q, codes=codes, scales=scales, zeros=zeros, bits=bits, group_size=group_size)

    @property
    def rows(self) -> int:
        return self.codes.shape[0]

    @property
    def cols(self) -> int:
        return self.codes.shape[1]

    def with_scales(self, scales) -> "QuantResult":
        return QuantResult.from_parts(self.codes, scales, self.zeros, self.bits, self.group_size)


def reconstruct(codes, scales, zeros, group_size: int) -> np.ndarray:
    """w_q = scales[i, g(j)] · (codes[i, j] − zeros[i, g(j)])"""
    s = np.repeat(scales, group_size, axis=1)
    z = np.repeat(zeros, group_size, axis=1)
    return s * (codes.astype(np.float64) - z)


def minmax_params(W: np.ndarray, maxq: int) -> tuple[np.ndarray, np.ndarray]:
    """Scale and zero-point over the last axis of W."""
    lo = W.min(axis=-1)
    hi = W.max(axis=-1)
    flat = hi == lo
    with np.errstate(invalid="ignore", divide="ignore"):
        s = (hi - lo) / maxq
    # 常数组：s = |c|（c == 0 时取 1），保证精确重建
    s = np.where(flat, np.where(lo == 0, 1.0, np.abs(lo)), s)
    z = np.clip(np.round(-lo / s), 0, maxq)
    return s, z


def quantize_codes(W: np.ndarray, s, z, maxq: int) -> np.ndarray:
    return np.clip(np.round(W / s) + z, 0, maxq)


def rtn_quantize(W, cfg: QuantConfig) -> QuantResult:
    """Round-to-nearest quantization."""
    W = as_matrix(W)
    n, m = W.shape
    gs = cfg.group_for(m)
    groups = W.reshape(n, m // gs, gs)

    s, z = minmax_params(groups, cfg.maxq)
    codes = quantize_codes(groups, s[..., None], z[..., None], cfg.maxq).reshape(n, m)
    return QuantResult.from_parts(codes, s, z, bits=cfg.bits, group_size=gs)


def gptq_quantize(W, X, cfg: QuantConfig, damp: float | None = None) -> QuantResult:
    """
    GPTQ-style quantization: column by column, each column's rounding error is
    spread over the remaining columns through the upper Cholesky factor of
    (XXᵀ + damp·mean(diag(XXᵀ))·I)⁻¹. No lazy batching, no act-order.
    """
    W = np.array(as_matrix(W), dtype=np.float64, copy=True)
    X = as_matrix(X)
    n, m = W.shape
    if X.shape[0] != m:
        raise DimensionError("gptq_quantize: weight.cols must equal activations.rows", W.shape, X.shape)
    damp = cfg.damp if damp is None else damp
    if not 0.0 < damp <= 1.0:
        raise ArgumentError(f"damp must lie in (0, 1], got {damp!r}")
    gs = cfg.group_for(m)
    maxq = cfg.maxq

    H = gram(X)
    dead = np.diag(H) == 0
    if dead.any():
        logger.info("gptq: %d dead input column(s) zeroed", int(dead.sum()))
        H[dead, dead] = 1.0
        W[:, dead] = 0.0

    H[np.diag_indices(m)] += damp * float(np.mean(np.diag(H)))
    try:
        L = scipy.linalg.cholesky(H, lower=True)
        Hinv = scipy.linalg.cho_solve((L, True), np.eye(m))
        U = scipy.linalg.cholesky(Hinv, lower=False)
    except np.linalg.LinAlgError as e:
        raise NumericalError(f"damped Hessian is not positive definite: {e}")

    codes = np.zeros((n, m), dtype=np.int64)
    scales = np.zeros((n, m // gs))
    zeros = np.zeros((n, m // gs))
    for j in range(m):
        g = j // gs
        if j % gs == 0:
            # 组参数取自当前（已补偿的）权重
            scales[:, g], zeros[:, g] = minmax_params(W[:, j:j + gs], maxq)
        s, z = scales[:, g], zeros[:, g]

        w = W[:, j]
        c = quantize_codes(w, s, z, maxq)
        codes[:, j] = c
        err = (w - s * (c - z)) / U[j, j]
        W[:, j + 1:] -= np.outer(err, U[j, j + 1:])

    return QuantResult.from_parts(codes, scales, zeros, bits=cfg.bits, group_size=gs)


def quantize(W, X, cfg: QuantConfig, method: str = "gptq") -> QuantResult:
    """Dispatch on the quantizer name."""
    if method == "rtn":
        return rtn_quantize(W, cfg)
    if method == "gptq":
        return gptq_quantize(W, X, cfg)
    raise ArgumentError(f"unknown quantizer {method!r}, expected one of {QUANTIZERS}")


def dequantize(q: QuantResult) -> np.ndarray:
    """The stored reconstruction s·(codes − z)."""
    return q.w_q
