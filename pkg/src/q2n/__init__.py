#!/usr/bin/env python
# -*- coding: utf-8 -*-
'''
@File: src/q2n/__init__.py
@Time: 2026/10/16
@Author: UniqueDeep
@Description: q2n 包初始化和导出。
'''

"""
Q2N - 量化误差的零空间投影优化

权重量化后，把误差 (W − W_q) 投影到校准激活 XXᵀ 的（近似）零空间上，
再把投影的效果折算成每个输出通道的缩放 α，直接并入量化 scale：
推理时不需要额外的矩阵，也不改变量化码。

## 核心流程

- **量化**: RTN 或 GPTQ 风格的逐列补偿（复用同一个 XXᵀ）
- **分解**: XXᵀ 的对称特征分解（LAPACK 分治法），SVD 只作参照
- **截断**: 前后缀特征值和之比 ≤ t 选出 k，Δ = U[:, k:]U[:, k:]ᵀ
- **求解**: αᵢ = (⟨W_qᶦ, Hᶦ⟩ + λ) / (⟨W_qᶦ, W_qᶦ⟩ + λ)，H = W − (W − W_q)Δ

## 使用示例

```python
from q2n import LayerBundle, QuantConfig, SpectrumSpec, gen_activations, gen_weights, run_q2n

bundle = LayerBundle(
    weight=gen_weights(64, 128, seed=0),
    activations=gen_activations(SpectrumSpec.dominant_plus_noise(128, 512, k=1, noise_scale=1e-3)),
)
q, report = run_q2n(bundle, QuantConfig(bits=2, group_size=128))
print(report.err_baseline, report.err_q2n, report.err_relative_drop)
```

## CLI 使用

```bash
uv run q2n gen --kind weights --n 64 --m 128 -o fx/layer.weight.q2nt
uv run q2n gen --kind dominant --m 128 --c 512 -o fx/layer.acts.q2nt
uv run q2n run --dir fx --name layer -o out
uv run q2n sweep --dir fx --name layer
uv run q2n bench --sizes 64 128 256 512
```
"""

from .calibgen import CounterStream, SpectrumKind, SpectrumSpec, gen_activations, gen_psd, gen_weights
from .errors import (
    AlphaSignError,
    ArgumentError,
    DimensionError,
    NumericalError,
    Q2NError,
    TensorDataError,
    TensorFormatError,
    TensorIOError,
    TruncationError,
)
from .linalg import EigenBasis, Projector, check_projector, gram, projector_from_basis, svd_oracle, sym_eig
from .nullspace import (
    AlphaVector,
    NullSpaceProjection,
    RatioSelection,
    apply_alpha,
    bp_oracle,
    build_projection,
    projected_target,
    q2n_objective,
    select,
    select_rank_index,
    select_rank_nscl_style,
    select_rank_torch_style,
    solve_alpha,
)
from .pipeline import (
    LayerReport,
    axis_sweep,
    bench_decomposition,
    compare_bp,
    coordinate_search,
    layer_error,
    run_q2n,
    spectrum_table,
    sweep,
)
from .quantizer import QuantConfig, QuantResult, dequantize, gptq_quantize, quantize, rtn_quantize
from .tensorio import (
    LayerBundle,
    Tensor,
    load_layer_bundle,
    load_quant_result,
    load_tensor,
    read_header,
    save_layer_bundle,
    save_quant_result,
    save_tensor,
)

__all__ = [
    # Tensor I/O
    "Tensor",
    "LayerBundle",
    "load_tensor",
    "save_tensor",
    "read_header",
    "load_layer_bundle",
    "save_layer_bundle",
    "load_quant_result",
    "save_quant_result",
    # Linear algebra
    "EigenBasis",
    "Projector",
    "gram",
    "sym_eig",
    "svd_oracle",
    "projector_from_basis",
    "check_projector",
    # Quantizer
    "QuantConfig",
    "QuantResult",
    "rtn_quantize",
    "gptq_quantize",
    "quantize",
    "dequantize",
    # Null space
    "RatioSelection",
    "AlphaVector",
    "NullSpaceProjection",
    "select_rank_index",
    "select_rank_torch_style",
    "select_rank_nscl_style",
    "select",
    "build_projection",
    "projected_target",
    "q2n_objective",
    "solve_alpha",
    "bp_oracle",
    "apply_alpha",
    # Calibration data
    "SpectrumKind",
    "SpectrumSpec",
    "CounterStream",
    "gen_activations",
    "gen_weights",
    "gen_psd",
    # Pipeline
    "LayerReport",
    "layer_error",
    "run_q2n",
    "sweep",
    "axis_sweep",
    "coordinate_search",
    "bench_decomposition",
    "compare_bp",
    "spectrum_table",
    # Errors
    "Q2NError",
    "ArgumentError",
    "TensorIOError",
    "TensorFormatError",
    "TruncationError",
    "TensorDataError",
    "DimensionError",
    "NumericalError",
    "AlphaSignError",
]
