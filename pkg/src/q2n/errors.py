#!/usr/bin/env python
# -*- coding: utf-8 -*-
'''
@File: src/q2n/errors.py
@Time: 2026/10/16
@Author: UniqueDeep
@Description: Exception hierarchy shared by every q2n module and the CLI exit-code mapping.
'''

from typing import Optional


class Q2NError(Exception):
    """Base class for all q2n errors."""

    exit_code = 1


class ArgumentError(Q2NError, ValueError):
    """An argument violates an operation's precondition."""

    exit_code = 2


class TensorIOError(Q2NError, OSError):
    """Reading or writing a tensor file failed."""

    def __init__(self, path, reason: str):
        self.path = str(path)
        super().__init__(f"{self.path}: {reason}")


class TensorFormatError(Q2NError):
    """The file is not a well-formed .q2nt container."""

    def __init__(self, path, reason: str):
        self.path = str(path)
        super().__init__(f"{self.path}: {reason}")


class TruncationError(TensorFormatError):
    """Payload length does not match the header."""


class TensorDataError(Q2NError):
    """An element is NaN or infinite, or otherwise invalid for its file."""

    def __init__(self, path, row: int, col: int, value: float, reason: str = "non-finite element"):
        self.path = str(path)
        self.row = row
        self.col = col
        super().__init__(f"{self.path}: {reason} {value!r} at index ({row}, {col})")


class DimensionError(Q2NError):
    """Two operands have incompatible shapes."""

    exit_code = 3

    def __init__(self, what: str, left: tuple, right: tuple):
        self.left = tuple(left)
        self.right = tuple(right)
        super().__init__(f"{what}: shape {self.left} vs {self.right}")


class NumericalError(Q2NError):
    """A numerical kernel failed (non-convergence, singular system, non-finite result)."""

    exit_code = 4

    def __init__(self, message: str, residual: Optional[float] = None):
        self.residual = residual
        if residual is not None:
            message = f"{message} (residual={residual:.3e})"
        super().__init__(message)


class AlphaSignError(NumericalError):
    """Scaling by alpha would produce a non-positive quantization scale."""

    def __init__(self, channels: list[int]):
        self.channels = list(channels)
        shown = ", ".join(str(c) for c in self.channels[:8])
        if len(self.channels) > 8:
            shown += ", ..."
        super().__init__(f"alpha <= 0 on {len(self.channels)} channel(s): [{shown}]")
