#!/usr/bin/env python
# -*- coding: utf-8 -*-
'''
@File: src/q2n/calibgen.py
@Time: 2026/10/16
@Author: UniqueDeep
@Description: 可复现的合成数据：受控谱形的校准激活、i.i.d. 权重与对称半正定矩阵。
'''

"""
合成数据生成器

随机源是计数器型的 Philox4x64（numpy.random.Philox），密钥为 (seed, stream)：
    uniform   = (raw >> 11) · 2⁻⁵³          每个 64 位输出取高 53 位
    gaussian  = Box–Muller(1 − u₁, u₂)       成对生成，cos 分量在前
不同用途使用不同 stream，因此各部分互不干扰，生成结果与调用平台无关。

激活谱形:
- exact_rank(r):              X = U_r · diag(σ) · V_rᵀ，数值秩恰为 r
- decay(rate):                σᵢ = √c · rateⁱ，Gram 特征值比为 rate²
- dominant_plus_noise(k, ε):  k 个离群输入通道（幅度 2⁻ʲ）叠加 ε 级高斯噪声，
                              第一个奇异值远大于其余之和
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.linalg

from .errors import ArgumentError
from .tensorio import Tensor

# stream 编号：每种用途一条独立的计数器序列
STREAM_WEIGHTS = 0
STREAM_NOISE = 1
STREAM_LEFT_BASIS = 2
STREAM_RIGHT_BASIS = 3
STREAM_CHANNELS = 4
STREAM_PSD = 5


class SpectrumKind(str, Enum):
    EXACT_RANK = "exact_rank"
    DECAY = "decay"
    DOMINANT_PLUS_NOISE = "dominant_plus_noise"


def _check_count(name: str, value) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
        raise ArgumentError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def _check_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or not 0 <= seed < 2 ** 64:
        raise ArgumentError(f"seed must be an integer in [0, 2^64), got {seed!r}")
    return int(seed)


@dataclass(frozen=True)
class SpectrumSpec:
    """
    激活谱形描述

    m: 输入通道数（X 的行数）
    c: 样本数（X 的列数）
    kind 决定使用哪个参数：exact_rank → r，decay → rate，
    dominant_plus_noise → k 与 noise_scale
    """

    m: int
    c: int
    kind: SpectrumKind
    seed: int = 0
    r: int | None = None
    rate: float | None = None
    k: int | None = None
    noise_scale: float | None = None

    def __post_init__(self):
        _check_count("m", self.m)
        _check_count("c", self.c)
        _check_seed(self.seed)
        object.__setattr__(self, "kind", SpectrumKind(self.kind))

        if self.kind is SpectrumKind.EXACT_RANK:
            if self.r is None or isinstance(self.r, bool) or not 0 <= self.r <= min(self.m, self.c):
                raise ArgumentError(f"exact_rank needs 0 <= r <= min(m, c) = {min(self.m, self.c)}, got r={self.r!r}")
        elif self.kind is SpectrumKind.DECAY:
            if self.rate is None or not 0.0 < self.rate <= 1.0:
                raise ArgumentError(f"decay needs 0 < rate <= 1, got rate={self.rate!r}")
        else:
            if self.k is None or isinstance(self.k, bool) or not 1 <= self.k <= self.m:
                raise ArgumentError(f"dominant_plus_noise needs 1 <= k <= m = {self.m}, got k={self.k!r}")
            if self.noise_scale is None or not self.noise_scale >= 0.0:
                raise ArgumentError(f"dominant_plus_noise needs noise_scale >= 0, got {self.noise_scale!r}")

    @classmethod
    def exact_rank(cls, m: int, c: int, r: int, seed: int = 0) -> "SpectrumSpec":
        return cls(m=m, c=c, kind=SpectrumKind.EXACT_RANK, seed=seed, r=r)

    @classmethod
    def decay(cls, m: int, c: int, rate: float, seed: int = 0) -> "SpectrumSpec":
        return cls(m=m, c=c, kind=SpectrumKind.DECAY, seed=seed, rate=rate)

    @classmethod
    def dominant_plus_noise(cls, m: int, c: int, k: int = 1, noise_scale: float = 1e-3, seed: int = 0) -> "SpectrumSpec":
        return cls(m=m, c=c, kind=SpectrumKind.DOMINANT_PLUS_NOISE, seed=seed, k=k, noise_scale=noise_scale)


class CounterStream:
    """Philox4x64 keyed by (seed, stream); successive draws advance the counter."""

    def __init__(self, seed: int, stream: int = 0):
        self.seed = _check_seed(seed)
        self.stream = int(stream)
        self._bitgen = np.random.Philox(key=np.array([self.seed, self.stream], dtype=np.uint64))

    def raw(self, size: int) -> np.ndarray:
        return self._bitgen.random_raw(size)

    def uniform(self, size: int) -> np.ndarray:
        """Uniform doubles in [0, 1) from the top 53 bits of each draw."""
        return (self.raw(size) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)

    def gaussian(self, size: int) -> np.ndarray:
        """Standard normals by Box–Muller; an odd size drops the last sine value."""
        pairs = (size + 1) // 2
        u1 = 1.0 - self.uniform(pairs)  # (0, 1]
        u2 = self.uniform(pairs)
        radius = np.sqrt(-2.0 * np.log(u1))
        angle = 2.0 * np.pi * u2
        out = np.empty(2 * pairs)
        out[0::2] = radius * np.cos(angle)
        out[1::2] = radius * np.sin(angle)
        return out[:size]

    def permutation(self, n: int) -> np.ndarray:
        return np.argsort(self.uniform(n), kind="stable")


def _orthonormal(stream: CounterStream, rows: int, cols: int) -> np.ndarray:
    """rows×cols matrix with orthonormal columns (cols ≤ rows), QR of a Gaussian block."""
    G = stream.gaussian(rows * cols).reshape(rows, cols)
    Q, R = scipy.linalg.qr(G, mode="economic")
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs


def gen_weights(n: int, m: int, seed: int = 0, scale: float = 1.0) -> Tensor:
    """n×m i.i.d. N(0, scale²) weights."""
    n, m = _check_count("n", n), _check_count("m", m)
    if not np.isfinite(scale):
        raise ArgumentError(f"scale must be finite, got {scale!r}")
    data = float(scale) * CounterStream(seed, STREAM_WEIGHTS).gaussian(n * m).reshape(n, m)
    return Tensor(data + 0.0)  # 0.0 清掉 -0.0


def _exact_rank(spec: SpectrumSpec) -> np.ndarray:
    if spec.r == 0:
        return np.zeros((spec.m, spec.c))
    U = _orthonormal(CounterStream(spec.seed, STREAM_LEFT_BASIS), spec.m, spec.r)
    V = _orthonormal(CounterStream(spec.seed, STREAM_RIGHT_BASIS), spec.c, spec.r)
    # 奇异值在 [0.5, 1]·√c 之间线性递减
    sigma = np.sqrt(spec.c) * (1.0 - 0.5 * np.arange(spec.r) / spec.r)
    return (U * sigma) @ V.T


def _decay(spec: SpectrumSpec) -> np.ndarray:
    p = min(spec.m, spec.c)
    U = _orthonormal(CounterStream(spec.seed, STREAM_LEFT_BASIS), spec.m, p)
    V = _orthonormal(CounterStream(spec.seed, STREAM_RIGHT_BASIS), spec.c, p)
    sigma = np.sqrt(spec.c) * spec.rate ** np.arange(p)
    return (U * sigma) @ V.T


def _dominant_plus_noise(spec: SpectrumSpec) -> np.ndarray:
    X = spec.noise_scale * CounterStream(spec.seed, STREAM_NOISE).gaussian(spec.m * spec.c).reshape(spec.m, spec.c)
    channels = CounterStream(spec.seed, STREAM_CHANNELS).permutation(spec.m)[: spec.k]
    signal = CounterStream(spec.seed, STREAM_RIGHT_BASIS).gaussian(spec.k * spec.c).reshape(spec.k, spec.c)
    for j, channel in enumerate(channels):
        X[channel] += 2.0 ** -j * signal[j]
    return X


_GENERATORS = {
    SpectrumKind.EXACT_RANK: _exact_rank,
    SpectrumKind.DECAY: _decay,
    SpectrumKind.DOMINANT_PLUS_NOISE: _dominant_plus_noise,
}


def gen_activations(spec: SpectrumSpec) -> Tensor:
    """m×c calibration activations whose spectrum follows spec.kind."""
    return Tensor(_GENERATORS[spec.kind](spec))


def gen_psd(m: int, seed: int = 0) -> np.ndarray:
    """Symmetric PSD m×m matrix A·Aᵀ/m with A Gaussian."""
    m = _check_count("m", m)
    A = CounterStream(seed, STREAM_PSD).gaussian(m * m).reshape(m, m)
    S = A @ A.T / m
    return (S + S.T) / 2.0
