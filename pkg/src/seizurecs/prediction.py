"""Compressed-domain seizure classifier.

Stem (conv + max-pool), four residual blocks of two conv/BN/ReLU stages,
global average pooling, two fully connected layers and a softmax over
{interictal, preictal}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import functional as F
from .errors import ConfigError, DimensionError
from .nn import Conv1d, ConvBNReLU, Linear, Module
from .tensor import Tensor

FILTERS_STEM_GRID = (4, 8, 16, 32)
SIZE_FC_GRID = (25, 50, 100)


@dataclass(frozen=True)
class PredictionConfig:
    in_channels: int
    filters_stem: int = 8
    size_fc: int = 50
    n_blocks: int = 4
    convs_per_block: int = 2
    n_classes: int = 2
    stem_kernel: int = 7
    stem_stride: int = 2
    stem_padding: int = 3
    pool_kernel: int = 3
    pool_stride: int = 2
    pool_padding: int = 1
    block_kernel: int = 3
    leaky_slope: float = 0.01
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1
    # "up": project the skip path to the block width (default);
    # "literal": project the conv path back down to the input width
    residual: str = "up"

    def __post_init__(self):
        if self.residual not in ("up", "literal"):
            raise ConfigError(f"residual must be 'up' or 'literal', got {self.residual!r}")
        for name in ("in_channels", "filters_stem", "size_fc", "n_blocks", "convs_per_block", "n_classes"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")

    def block_width(self, b: int) -> int:
        """Filters per convolution in block ``b`` (1-based)."""
        return 2 * b * self.filters_stem


class ResidualBlock(Module):
    def __init__(self, in_channels: int, width: int, cfg: PredictionConfig, rng: np.random.Generator):
        self.literal = cfg.residual == "literal"
        k, pad = cfg.block_kernel, cfg.block_kernel // 2
        first_stride = 1 if self.literal else 2
        bn = dict(bn_eps=cfg.bn_eps, bn_momentum=cfg.bn_momentum)
        stages = [ConvBNReLU(in_channels, width, k, first_stride, pad, rng=rng, **bn)]
        for _ in range(cfg.convs_per_block - 1):
            stages.append(ConvBNReLU(width, width, k, 1, pad, rng=rng, **bn))
        self.stages = stages
        if self.literal:
            self.bottleneck = Conv1d(width, in_channels, 1, 1, 0, rng=rng)
            self.out_channels = in_channels
        else:
            self.bottleneck = Conv1d(in_channels, width, 1, 2, 0, rng=rng)
            self.out_channels = width

    def forward(self, f_in: Tensor) -> Tensor:
        h = f_in
        for stage in self.stages:
            h = stage(h)
        if self.literal:
            skip, branch = f_in, self.bottleneck(h)
        else:
            skip, branch = self.bottleneck(f_in), h
        if skip.shape != branch.shape:
            raise DimensionError(f"residual addition: {skip.shape} vs {branch.shape}")
        return F.add(branch, skip)


class PredictionNet(Module):
    """``B x C x M`` compressed windows -> ``B x 2`` class probabilities."""

    def __init__(self, cfg: PredictionConfig, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.cfg = cfg
        self.stem = ConvBNReLU(
            cfg.in_channels,
            cfg.filters_stem,
            cfg.stem_kernel,
            cfg.stem_stride,
            cfg.stem_padding,
            rng=rng,
            bn_eps=cfg.bn_eps,
            bn_momentum=cfg.bn_momentum,
        )
        blocks = []
        width = cfg.filters_stem
        for b in range(1, cfg.n_blocks + 1):
            block = ResidualBlock(width, cfg.block_width(b), cfg, rng)
            blocks.append(block)
            width = block.out_channels
        self.blocks = blocks
        self.fc1 = Linear(width, cfg.size_fc, rng=rng)
        self.fc2 = Linear(cfg.size_fc, cfg.n_classes, rng=rng)

    def stem_forward(self, x: Tensor) -> Tensor:
        cfg = self.cfg
        if x.ndim != 3 or x.shape[1] != cfg.in_channels:
            raise DimensionError(f"prediction input must be B x {cfg.in_channels} x M, got {x.shape}")
        if x.shape[2] < cfg.stem_kernel:
            raise DimensionError(f"input length {x.shape[2]} shorter than stem kernel {cfg.stem_kernel}")
        return F.maxpool1d(self.stem(x), cfg.pool_kernel, cfg.pool_stride, cfg.pool_padding)

    def features(self, x: Tensor) -> Tensor:
        f = self.stem_forward(x)
        for block in self.blocks:
            f = block(f)
        return f

    def head(self, f4: Tensor) -> Tensor:
        h = F.leaky_relu(self.fc1(F.global_avg_pool(f4)), self.cfg.leaky_slope)
        return F.softmax(self.fc2(h))

    def forward(self, x: Tensor) -> Tensor:
        return self.head(self.features(x))


def predict_loss(probs: Tensor, onehot) -> Tensor:
    return F.cross_entropy(probs, onehot)


def one_hot(labels, n_classes: int = 2) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, n_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out
