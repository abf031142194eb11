#!/usr/bin/env python
# -*- coding: utf-8 -*-
'''
@File: src/q2n/linalg.py
@Time: 2026/10/16
@Author: UniqueDeep
@Description: Dense kernels: Gram matrix, symmetric eigendecomposition, SVD oracle, orthogonal projectors.
'''

"""
Linear-algebra kernels

- gram(X):                X·Xᵀ, symmetrized
- sym_eig(S):             LAPACK divide-and-conquer eigensolver (syevd), |λ| sorted descending
- svd_oracle(S):          Householder + implicit-QR SVD (gesvd), the reference decomposition
- projector_from_basis:   Δ = U₁U₁ᵀ with U₁ = U[:, k:]

Every kernel takes a Tensor or a float64 ndarray and never mutates its input.
Eigenvectors follow one sign convention: the largest-magnitude component of
each column is non-negative (ties resolved by the lowest row index).
"""

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg

from .errors import ArgumentError, DimensionError, NumericalError
from .tensorio import Tensor

logger = logging.getLogger(__name__)

# 容差阶梯：分解残差 -> 投影检查
DECOMPOSITION_TOL = 1e-10
PROJECTOR_TOL = 1e-8
SYMMETRY_TOL = 1e-8


def as_matrix(x) -> np.ndarray:
    """Tensor | array-like -> 2-D float64 ndarray (no copy when already float64)."""
    arr = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError("expected a 2-D matrix", arr.shape, ("rows", "cols"))
    return arr


def frobenius(a: np.ndarray) -> float:
    return float(np.linalg.norm(a, "fro"))


@dataclass(frozen=True)
class EigenBasis:
    """Non-negative values sorted descending; column j of vectors pairs with values[j]."""

    values: np.ndarray
    vectors: np.ndarray

    @property
    def m(self) -> int:
        return self.values.shape[0]

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.values) @ self.vectors.T


@dataclass(frozen=True)
class Projector:
    """Orthogonal projector Δ (m×m)."""

    matrix: np.ndarray

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix))


class ProjectorResiduals(NamedTuple):
    symmetry: float
    idempotence: float


def gram(X) -> np.ndarray:
    """X·Xᵀ, symmetrized as (G + Gᵀ)/2."""
    X = as_matrix(X)
    G = X @ X.T
    return (G + G.T) / 2.0


def _require_square(S: np.ndarray, what: str) -> None:
    if S.shape[0] != S.shape[1]:
        raise DimensionError(f"{what} needs a square matrix", S.shape, (S.shape[0], S.shape[0]))


def _require_symmetric(S: np.ndarray, what: str) -> None:
    scale = max(1.0, float(np.max(np.abs(S))))
    asym = float(np.max(np.abs(S - S.T)))
    if asym > SYMMETRY_TOL * scale:
        raise ArgumentError(f"{what} needs a symmetric matrix (max |S - Sᵀ| = {asym:.3e})")


def fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so that each column's largest-magnitude entry is non-negative."""
    # argmax 返回第一个最大值，即并列时取最小行号
    lead = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[lead, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _degenerate_basis(m: int) -> EigenBasis:
    return EigenBasis(values=np.zeros(m), vectors=np.eye(m))


def reconstruction_residual(S, basis: EigenBasis) -> float:
    """‖V·diag(λ)·Vᵀ − S‖_F / max(1, ‖S‖_F)."""
    S = as_matrix(S)
    return frobenius(basis.reconstruct() - S) / max(1.0, frobenius(S))


def _unreduced_residual(S: np.ndarray) -> float:
    """Off-diagonal mass a diagonalizing solver has yet to remove: ‖S − diag(S)‖_F / max(1, ‖S‖_F)."""
    return frobenius(S - np.diag(np.diag(S))) / max(1.0, frobenius(S))


def sym_eig(S, verify: bool = False) -> EigenBasis:
    """
    Symmetric eigendecomposition via LAPACK divide-and-conquer.

    Values are |λ| sorted descending. With verify=True the reconstruction
    residual is checked against DECOMPOSITION_TOL and a NumericalError is raised above it.
    """
    S = as_matrix(S)
    _require_square(S, "sym_eig")
    _require_symmetric(S, "sym_eig")
    m = S.shape[0]

    if not np.any(S):
        return _degenerate_basis(m)

    try:
        w, V = scipy.linalg.eigh(S, driver="evd")
    except (np.linalg.LinAlgError, ValueError) as e:
        raise NumericalError(
            f"symmetric eigensolver did not converge on a {m}x{m} matrix: {e}", _unreduced_residual(S)
        )

    values = np.abs(w)
    order = np.argsort(-values, kind="stable")
    basis = EigenBasis(values=values[order], vectors=fix_signs(V[:, order]))

    if verify:
        residual = reconstruction_residual(S, basis)
        if residual > DECOMPOSITION_TOL:
            raise NumericalError("eigendecomposition failed to reconstruct its input", residual)
    return basis


def svd_oracle(S) -> EigenBasis:
    """Left singular vectors and singular values of S, packaged as an EigenBasis."""
    S = as_matrix(S)
    _require_square(S, "svd_oracle")
    m = S.shape[0]

    if not np.any(S):
        return _degenerate_basis(m)

    try:
        U, s, _ = scipy.linalg.svd(S, lapack_driver="gesvd")
    except (np.linalg.LinAlgError, ValueError) as e:
        raise NumericalError(f"SVD did not converge on a {m}x{m} matrix: {e}", _unreduced_residual(S))

    return EigenBasis(values=s, vectors=fix_signs(U))


def projector_from_basis(U, k: int) -> Projector:
    """Δ = U₁U₁ᵀ where U₁ = U[:, k:]; k = m gives 0, k = 0 gives I."""
    U = as_matrix(U)
    _require_square(U, "projector_from_basis")
    m = U.shape[0]
    if isinstance(k, bool) or not isinstance(k, (int, np.integer)) or not 0 <= k <= m:
        raise ArgumentError(f"k must be an integer in [0, {m}], got {k!r}")

    U1 = U[:, int(k):]
    P = U1 @ U1.T
    return Projector(matrix=(P + P.T) / 2.0)


def check_projector(P) -> ProjectorResiduals:
    """Symmetry and idempotence residuals, normalised by max(1, ‖Δ‖_F)."""
    M = P.matrix if isinstance(P, Projector) else as_matrix(P)
    norm = max(1.0, frobenius(M))
    return ProjectorResiduals(
        symmetry=frobenius(M - M.T) / norm,
        idempotence=frobenius(M @ M - M) / norm,
    )
