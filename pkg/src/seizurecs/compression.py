"""Learnable in-sensor compression matrix.

One ``M x N`` matrix compresses every EEG channel of an ``N``-sample
window to ``M`` samples. In binary mode the forward pass uses
``(latent > 0)`` and gradients reach the real-valued latent through a
straight-through estimator clipped to ``|latent| <= 1``.
"""

from __future__ import annotations

import math
import struct
import warnings
from fractions import Fraction
from os import PathLike
from pathlib import Path

import numpy as np

from . import functional as F
from .errors import ConfigError, DimensionError, FormatError
from .nn import Module, parameter
from .tensor import Tensor, as_tensor, make_result

PAPER_RATIOS = (Fraction(1, 2), Fraction(1, 4), Fraction(1, 8), Fraction(1, 16))

MATRIX_MAGIC = b"C2SP"
MATRIX_VERSION = 1
_MATRIX_HEADER = struct.Struct("<4sBBII")

FLOAT, BINARY = "float", "binary"
_MODE_CODES = {FLOAT: 0, BINARY: 1}


class ExperimentalRatioWarning(UserWarning):
    """Compression ratio outside the evaluated set {1/2, 1/4, 1/8, 1/16}."""


def parse_ratio(value) -> Fraction:
    """Parse ``"1/8"``-style strings (or Fractions/ints) exactly.

    Decimal strings and floats are rejected: ``0.3`` has no unambiguous
    compressed length.
    """
    if isinstance(value, Fraction):
        r = value
    elif isinstance(value, int):
        r = Fraction(value)
    elif isinstance(value, str):
        text = value.strip()
        if "." in text or "e" in text.lower():
            raise ConfigError(f"ratio {value!r}: give a fraction such as 1/8, not a decimal")
        try:
            r = Fraction(text)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"ratio {value!r} is not a fraction") from exc
    else:
        raise ConfigError(f"ratio {value!r}: give a fraction such as 1/8")
    if not 0 < r < 1:
        raise ConfigError(f"ratio {r} must lie strictly between 0 and 1")
    return r


def check_ratio(r: Fraction) -> Fraction:
    """Validate ``r`` and warn when it is outside the evaluated set."""
    r = parse_ratio(r)
    if r not in PAPER_RATIOS:
        warnings.warn(f"compression ratio {r} is experimental", ExperimentalRatioWarning, stacklevel=2)
    return r


def compressed_length(n: int, ratio) -> int:
    """``M = round(r * N)`` with halves rounded up, computed exactly."""
    r = parse_ratio(ratio)
    m = math.floor(r * n + Fraction(1, 2))
    if not 0 < m < n:
        raise ConfigError(f"ratio {r} on N={n} gives M={m}; need 0 < M < N")
    return m


def binarize_ste(latent: Tensor) -> Tensor:
    """``1`` where ``latent > 0`` else ``0``; the backward pass lets the
    upstream gradient through where ``|latent| <= 1``."""
    data = latent.data
    passthrough = np.abs(data) <= 1.0
    return make_result((data > 0).astype(np.float64), (latent,), "binarize_ste", lambda g: (g * passthrough,))


class CompressionMatrix(Module):
    """Shared per-channel sensing operator ``z^c = W x^c``.

    ``weight`` is the matrix itself in float mode and the latent carrier in
    binary mode.
    """

    def __init__(self, n_in: int, ratio, mode: str = FLOAT, rng: np.random.Generator | None = None, weight=None):
        if mode not in _MODE_CODES:
            raise ConfigError(f"mode must be 'float' or 'binary', got {mode!r}")
        self.ratio = parse_ratio(ratio)
        self.n_in = int(n_in)
        self.n_out = compressed_length(self.n_in, self.ratio)
        self.mode = mode
        if weight is None:
            rng = rng if rng is not None else np.random.default_rng(0)
            weight = rng.normal(0.0, 1.0 / math.sqrt(self.n_in), size=(self.n_out, self.n_in))
        weight = np.asarray(weight, dtype=np.float64)
        if weight.shape != (self.n_out, self.n_in):
            raise DimensionError(f"weight shape {weight.shape} != ({self.n_out}, {self.n_in})")
        self.weight = parameter(weight)

    @property
    def shape(self) -> tuple[int, int]:
        return self.n_out, self.n_in

    def effective(self) -> Tensor:
        """The matrix applied in the forward pass (differentiable)."""
        return binarize_ste(self.weight) if self.mode == BINARY else self.weight

    def effective_matrix(self) -> np.ndarray:
        if self.mode == BINARY:
            return (self.weight.data > 0).astype(np.float64)
        return self.weight.data.copy()

    def compress(self, x) -> Tensor:
        """Compress one window ``N x C`` to ``M x C``."""
        return compress(self, x)

    def forward(self, x) -> Tensor:
        """Compress a channels-first batch ``B x C x N`` to ``B x C x M``."""
        return compress_batch(self, x)


def compress(matrix: CompressionMatrix, x) -> Tensor:
    """``z = W_eff x`` for a single window laid out ``N x C``."""
    x = as_tensor(x)
    if x.ndim != 2 or x.shape[0] != matrix.n_in:
        raise DimensionError(f"compress: matrix {matrix.shape} cannot act on window {x.shape}")
    return F.matmul(matrix.effective(), x)


def compress_batch(matrix: CompressionMatrix, x) -> Tensor:
    """Apply the matrix to each channel of a ``B x C x N`` batch."""
    x = as_tensor(x)
    if x.ndim != 3 or x.shape[2] != matrix.n_in:
        raise DimensionError(f"compress: matrix {matrix.shape} cannot act on batch {x.shape}")
    b, c, n = x.shape
    flat = F.reshape(x, (b * c, n))
    z = F.matmul(flat, F.transpose(matrix.effective()))
    return F.reshape(z, (b, c, matrix.n_out))


# -- matrix file ---------------------------------------------------------------


def export_matrix(matrix: CompressionMatrix, path: str | PathLike) -> None:
    """Write the effective matrix: header, then packed bits (binary, LSB
    first, row-major) or little-endian float64 values (float)."""
    eff = matrix.effective_matrix()
    header = _MATRIX_HEADER.pack(MATRIX_MAGIC, MATRIX_VERSION, _MODE_CODES[matrix.mode], matrix.n_in, matrix.n_out)
    if matrix.mode == BINARY:
        payload = np.packbits(eff.astype(np.uint8).reshape(-1), bitorder="little").tobytes()
    else:
        payload = eff.astype("<f8").tobytes()
    Path(path).write_bytes(header + payload)


def import_matrix(path: str | PathLike) -> CompressionMatrix:
    """Read a matrix file; binary matrices come back with a latent carrier
    of +1/-1 so that the effective matrix is reproduced exactly."""
    raw = Path(path).read_bytes()
    if len(raw) < _MATRIX_HEADER.size:
        raise FormatError("matrix file shorter than its header", offset=len(raw))
    magic, version, mode_code, n, m = _MATRIX_HEADER.unpack_from(raw)
    if magic != MATRIX_MAGIC:
        raise FormatError(f"bad magic {magic!r}", offset=0)
    if version != MATRIX_VERSION:
        raise FormatError(f"unsupported matrix format version {version}", offset=4)
    codes = {v: k for k, v in _MODE_CODES.items()}
    if mode_code not in codes:
        raise FormatError(f"unknown mode code {mode_code}", offset=5)
    if not 0 < m < n:
        raise FormatError(f"invalid dimensions N={n}, M={m}", offset=6)
    mode = codes[mode_code]
    body = raw[_MATRIX_HEADER.size :]
    count = m * n
    expected = (count + 7) // 8 if mode == BINARY else 8 * count
    if len(body) != expected:
        raise FormatError(
            f"payload has {len(body)} bytes, expected {expected}", offset=_MATRIX_HEADER.size + min(len(body), expected)
        )
    if mode == BINARY:
        bits = np.unpackbits(np.frombuffer(body, dtype=np.uint8), bitorder="little")[:count]
        weight = np.where(bits.reshape(m, n) == 1, 1.0, -1.0)
    else:
        weight = np.frombuffer(body, dtype="<f8").reshape(m, n).astype(np.float64)
    mat = CompressionMatrix.__new__(CompressionMatrix)
    mat.ratio = Fraction(m, n)
    mat.n_in, mat.n_out, mat.mode = n, m, mode
    mat.weight = parameter(weight)
    return mat
