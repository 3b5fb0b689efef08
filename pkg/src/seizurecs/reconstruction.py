"""Up-sampling decoder from ``B x C x M`` compressed windows back to
``B x C x N``.

The depth adapts to the compression ratio: ``floor(log2(1/r)) + 1``
up-sampling blocks, all but the last doubling the length and the last
landing exactly on ``N``, followed by a linear 1x1 convolution back to the
input channel count.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import functional as F
from .compression import compressed_length, parse_ratio
from .errors import ConfigError, ContractError, DimensionError
from .nn import Conv1d, ConvBNReLU, Module
from .tensor import Tensor


def n_upblocks(r) -> int:
    """Number of up-sampling blocks for ratio ``r``, in exact arithmetic."""
    try:
        r = Fraction(r) if not isinstance(r, str) else parse_ratio(r)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"ratio {r!r} is not a number") from exc
    if not 0 < r < 1:
        raise ConfigError(f"ratio must lie in (0, 1), got {r}")
    # largest k with 2**k <= 1/r, i.e. 2**k * p <= q
    p, q = r.numerator, r.denominator
    k = 0
    while (p << (k + 1)) <= q:
        k += 1
    return k + 1


@dataclass(frozen=True)
class ReconstructionConfig:
    ratio: Fraction
    n_samples: int
    channels: int
    filters_recon: int = 16
    kernel: int = 3
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "ratio", parse_ratio(self.ratio))
        if self.channels < 1 or self.filters_recon < 1:
            raise ConfigError("channels and filters_recon must be positive")

    @property
    def n_compressed(self) -> int:
        return compressed_length(self.n_samples, self.ratio)

    @property
    def n_blocks(self) -> int:
        return n_upblocks(self.ratio)

    def block_filters(self, b: int) -> int:
        return self.filters_recon * 2 ** (b - 1)

    def target_lengths(self) -> list[int]:
        m, n = self.n_compressed, self.n_samples
        # rounding of M can push M * 2**k past N for non-divisible N
        lengths = [min(m * 2**i, n) for i in range(1, self.n_blocks)]
        return lengths + [n]


class UpBlock(Module):
    """Up-sample, then conv -> BN -> ReLU."""

    def __init__(self, in_channels: int, filters: int, target_len: int, cfg: ReconstructionConfig, rng):
        self.target_len = target_len
        self.unit = ConvBNReLU(
            in_channels, filters, cfg.kernel, 1, cfg.kernel // 2, rng=rng, bn_eps=cfg.bn_eps, bn_momentum=cfg.bn_momentum
        )

    def forward(self, f_in: Tensor) -> Tensor:
        return up_block_forward(self, f_in)


def up_block_forward(block: UpBlock, f_in: Tensor) -> Tensor:
    if f_in.shape[-1] > block.target_len:
        raise ContractError(f"up-sampling block cannot shrink length {f_in.shape[-1]} to {block.target_len}")
    return block.unit(F.upsample_linear(f_in, block.target_len))


class ReconstructionNet(Module):
    def __init__(self, cfg: ReconstructionConfig, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.cfg = cfg
        blocks = []
        width = cfg.channels
        for b, target in enumerate(cfg.target_lengths(), start=1):
            filters = cfg.block_filters(b)
            blocks.append(UpBlock(width, filters, target, cfg, rng))
            width = filters
        self.blocks = blocks
        self.bottleneck = Conv1d(width, cfg.channels, 1, 1, 0, bias=True, rng=rng)

    def forward(self, z: Tensor) -> Tensor:
        cfg = self.cfg
        if z.ndim != 3 or z.shape[1] != cfg.channels or z.shape[2] != cfg.n_compressed:
            raise DimensionError(
                f"reconstruction input must be B x {cfg.channels} x {cfg.n_compressed}, got {z.shape}"
            )
        f = z
        for block in self.blocks:
            f = block(f)
        return self.bottleneck(f)


def reconstruct(net: ReconstructionNet, z: Tensor) -> Tensor:
    return net(z)


def recon_loss(x_hat: Tensor, x) -> Tensor:
    return F.mse(x_hat, x)
