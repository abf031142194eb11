#!/usr/bin/env python
# -*- coding: utf-8 -*-
'''
@File: src/q2n/tensorio.py
@Time: 2026/10/16
@Author: UniqueDeep
@Description: .q2nt 张量容器的读写，以及层数据包（权重 + 校准激活）与量化结果三元组的存取。
'''

"""
.q2nt 容器格式

    8 字节 magic    b"Q2NTENS1"
    一行 JSON 头    {"dtype": "f64", "rows": 3, "cols": 5}\\n
    负载            小端、行主序的标量（f32 为 4 字节，f64 为 8 字节）

f32 Tensor 在构造时即按 f32 取整并以 f64 保存（dtype 标记保留），写出时再按标记收窄，
因此 load(save(t)) 与 t 按位一致。
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError, TensorDataError, TensorFormatError, TensorIOError, TruncationError

MAGIC = b"Q2NTENS1"
EXTENSION = ".q2nt"

# dtype 标记 -> 小端 numpy 类型
DTYPES = {
    "f32": np.dtype("<f4"),
    "f64": np.dtype("<f8"),
}


def _require_finite(path, data: np.ndarray, original: np.ndarray | None = None) -> None:
    """First non-finite element (row-major) -> TensorDataError."""
    finite = np.isfinite(data)
    if finite.all():
        return
    row, col = divmod(int(np.flatnonzero(~finite.ravel())[0]), data.shape[1])
    source = data if original is None else original
    raise TensorDataError(path, row, col, float(source[row, col]))


@dataclass(frozen=True)
class Tensor:
    """
    稠密二维矩阵

    data 总是 float64 的 (rows, cols) 数组；dtype 只记录存储精度。
    """

    data: np.ndarray
    dtype: str = "f64"

    def __post_init__(self):
        if self.dtype not in DTYPES:
            raise TensorFormatError("<memory>", f"unknown dtype {self.dtype!r}")
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2:
            raise DimensionError("tensor must be 2-D", arr.shape, ("rows", "cols"))
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionError("tensor must have rows >= 1 and cols >= 1", arr.shape, (1, 1))
        _require_finite("<memory>", arr)
        if self.dtype == "f32":
            # 按存储精度取整，保证 load(save(t)) == t
            with np.errstate(over="ignore"):
                narrowed = arr.astype(DTYPES["f32"])
            _require_finite("<memory>", narrowed, original=arr)
            arr = narrowed.astype(np.float64)
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def __eq__(self, other) -> bool:
        if not isinstance(other, Tensor):
            return NotImplemented
        return (
            self.dtype == other.dtype
            and self.shape == other.shape
            and self.data.tobytes() == other.data.tobytes()
        )


@dataclass(frozen=True)
class LayerBundle:
    """一层的校准数据：weight (n×m) 与 activations (m×c，每列一个样本)"""

    weight: Tensor
    activations: Tensor
    name: str = "layer"

    def __post_init__(self):
        if self.weight.cols != self.activations.rows:
            raise DimensionError(
                f"layer {self.name!r}: weight.cols must equal activations.rows",
                self.weight.shape,
                self.activations.shape,
            )


def as_tensor(array, dtype: str = "f64") -> Tensor:
    """便捷函数：numpy 数组 -> Tensor"""
    return Tensor(np.asarray(array, dtype=np.float64), dtype=dtype)


def _header_bytes(t: Tensor) -> bytes:
    header = {"dtype": t.dtype, "rows": t.rows, "cols": t.cols}
    return (json.dumps(header) + "\n").encode("utf-8")


def save_tensor(t: Tensor, path) -> None:
    """写出 .q2nt 文件"""
    path = Path(path)
    payload = t.data.astype(DTYPES[t.dtype]).tobytes(order="C")
    try:
        with open(path, "wb") as f:
            f.write(MAGIC)
            f.write(_header_bytes(t))
            f.write(payload)
    except OSError as e:
        raise TensorIOError(path, f"write failed: {e.strerror or e}")


def _parse_header(path: Path, blob: bytes) -> tuple[str, int, int, int]:
    """解析 magic 与头部，返回 (dtype, rows, cols, payload_offset)"""
    if len(blob) < len(MAGIC) or blob[: len(MAGIC)] != MAGIC:
        raise TensorFormatError(path, "bad magic, not a .q2nt file")

    newline = blob.find(b"\n", len(MAGIC))
    if newline < 0:
        raise TensorFormatError(path, "header line is not terminated")
    try:
        header = json.loads(blob[len(MAGIC):newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise TensorFormatError(path, f"malformed header: {e}")

    if not isinstance(header, dict) or set(header) != {"dtype", "rows", "cols"}:
        raise TensorFormatError(path, f"header must have keys dtype/rows/cols, got {header!r}")
    dtype, rows, cols = header["dtype"], header["rows"], header["cols"]
    if dtype not in DTYPES:
        raise TensorFormatError(path, f"unsupported dtype {dtype!r}")
    for key, value in (("rows", rows), ("cols", cols)):
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            raise TensorFormatError(path, f"{key} must be a positive integer, got {value!r}")
    return dtype, rows, cols, newline + 1


def read_header(path) -> tuple[str, int, int]:
    """只读头部：返回 (dtype, rows, cols)，不读取负载"""
    path = Path(path)
    try:
        with open(path, "rb") as f:
            blob = f.read(len(MAGIC))
            # 头部很短，逐块读到换行为止
            while b"\n" not in blob[len(MAGIC):]:
                chunk = f.read(256)
                if not chunk:
                    break
                blob += chunk
    except OSError as e:
        raise TensorIOError(path, f"read failed: {e.strerror or e}")
    dtype, rows, cols, _ = _parse_header(path, blob)
    return dtype, rows, cols


def load_tensor(path) -> Tensor:
    """读取 .q2nt 文件，校验 magic、dtype、形状、负载长度与有限性"""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise TensorIOError(path, f"read failed: {e.strerror or e}")

    dtype, rows, cols, offset = _parse_header(path, blob)
    np_dtype = DTYPES[dtype]
    expected = rows * cols * np_dtype.itemsize
    actual = len(blob) - offset
    if actual != expected:
        raise TruncationError(path, f"payload is {actual} bytes, header implies {expected}")

    data = np.frombuffer(blob, dtype=np_dtype, count=rows * cols, offset=offset)
    data = data.reshape(rows, cols).astype(np.float64)
    _require_finite(path, data)
    return Tensor(data, dtype=dtype)


def bundle_paths(directory, name: str) -> tuple[Path, Path]:
    directory = Path(directory)
    return directory / f"{name}.weight{EXTENSION}", directory / f"{name}.acts{EXTENSION}"


def load_layer_bundle(directory, name: str) -> LayerBundle:
    """读取 <name>.weight.q2nt 与 <name>.acts.q2nt"""
    weight_path, acts_path = bundle_paths(directory, name)
    return LayerBundle(
        weight=load_tensor(weight_path),
        activations=load_tensor(acts_path),
        name=name,
    )


def save_layer_bundle(bundle: LayerBundle, directory) -> tuple[Path, Path]:
    weight_path, acts_path = bundle_paths(directory, bundle.name)
    save_tensor(bundle.weight, weight_path)
    save_tensor(bundle.activations, acts_path)
    return weight_path, acts_path


def quant_paths(directory, name: str) -> dict[str, Path]:
    directory = Path(directory)
    return {
        part: directory / f"{name}.{part}{EXTENSION}"
        for part in ("codes", "scales", "zeros")
    }


def save_quant_result(q, directory, name: str) -> dict[str, Path]:
    """写出量化结果三元组：codes（以 f64 编码的整数）、scales、zeros"""
    paths = quant_paths(directory, name)
    save_tensor(as_tensor(q.codes), paths["codes"])
    save_tensor(as_tensor(q.scales), paths["scales"])
    save_tensor(as_tensor(q.zeros), paths["zeros"])
    return paths


def load_quant_result(directory, name: str, bits: int):
    """读取量化结果三元组；group size 由 codes 与 scales 的列数推出"""
    from .quantizer import QuantResult

    paths = quant_paths(directory, name)
    codes = load_tensor(paths["codes"]).data
    fractional = codes != np.round(codes)
    if fractional.any():
        row, col = (int(i) for i in np.argwhere(fractional)[0])
        raise TensorDataError(paths["codes"], row, col, float(codes[row, col]), reason="non-integral code")
    scales = load_tensor(paths["scales"]).data
    zeros = load_tensor(paths["zeros"]).data
    if codes.shape[0] != scales.shape[0] or codes.shape[1] % scales.shape[1] != 0:
        raise DimensionError(f"quantized layer {name!r}: codes vs scales", codes.shape, scales.shape)
    if scales.shape != zeros.shape:
        raise DimensionError(f"quantized layer {name!r}: scales vs zeros", scales.shape, zeros.shape)
    group_size = codes.shape[1] // scales.shape[1]
    return QuantResult.from_parts(codes, scales, zeros, bits=bits, group_size=group_size)
