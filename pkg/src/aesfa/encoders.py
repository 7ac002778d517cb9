"""Content and aesthetic-feature encoders.

Both encoders share one MobileNet-like backbone: a 3x3 octave stem followed by
depthwise-separable octave blocks, each downsampling both branches by 2.  The
aesthetic encoder adds a descriptor head that pools each branch to a fixed
3x3 grid and projects it to the descriptor width.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import InvalidArgument
from .freq_ops import OctavePair, OctConv, fan_in_uniform_, leaky, split_alpha


class AestheticDescriptor(OctavePair):
    """Per-frequency style code ``(w_high, w_low)``, each ``batch x D x 3 x 3``."""

    @property
    def w_high(self):
        return self.high

    @property
    def w_low(self):
        return self.low


class DepthwiseOctConv(nn.Module):
    """Per-branch depthwise 3x3 convolution.  No cross-frequency paths: the
    following pointwise octave convolution does the exchange."""

    def __init__(self, channels, stride=2, kernel_size=3):
        super().__init__()
        c_h, c_l = channels
        self.channels = (c_h, c_l)
        self.stride = stride
        self.w_h = nn.Parameter(fan_in_uniform_(torch.empty(c_h, 1, kernel_size, kernel_size))) if c_h else None
        self.w_l = nn.Parameter(fan_in_uniform_(torch.empty(c_l, 1, kernel_size, kernel_size))) if c_l else None
        self.b_h = nn.Parameter(torch.zeros(c_h)) if c_h else None
        self.b_l = nn.Parameter(torch.zeros(c_l)) if c_l else None

    def _branch(self, x, w, b):
        if w is None:
            n, _, h, wd = x.shape
            return x.new_zeros(n, 0, h // self.stride, wd // self.stride)
        return F.conv2d(x, w, b, stride=self.stride, padding=w.shape[-1] // 2, groups=w.shape[0])

    def forward(self, x: OctavePair) -> OctavePair:
        return OctavePair(self._branch(x.high, self.w_h, self.b_h), self._branch(x.low, self.w_l, self.b_l))


class SeparableOctBlock(nn.Module):
    def __init__(self, in_channels, out_channels, stride=2, slope=0.2):
        super().__init__()
        self.depthwise = DepthwiseOctConv(in_channels, stride=stride)
        self.pointwise = OctConv(in_channels, out_channels, kernel_size=1, gain=2.0)
        self.slope = slope

    def forward(self, x: OctavePair) -> OctavePair:
        return leaky(self.pointwise(self.depthwise(x)), self.slope)


class OctEncoder(nn.Module):
    """Stem plus ``len(widths) - 1`` stride-2 separable blocks.

    ``widths`` are total channel counts per stage, split between branches by
    ``alpha``.  The high branch of the final stage sits at 1/2**(len-1) of the
    input resolution.
    """

    def __init__(self, widths: Sequence[int] = (64, 128, 256, 256), alpha: float = 0.5, slope: float = 0.2):
        super().__init__()
        self.alpha = alpha
        self.widths = tuple(widths)
        self.slope = slope
        splits = [split_alpha(c, alpha) for c in self.widths]
        self.stem = OctConv((3, 0), splits[0], kernel_size=3, gain=2.0)
        self.blocks = nn.ModuleList(
            SeparableOctBlock(splits[i], splits[i + 1], stride=2, slope=slope) for i in range(len(splits) - 1)
        )

    @property
    def downsample(self) -> int:
        # x2 from the octave low branch on top of the block strides
        return 2 ** len(self.blocks) * 2

    @property
    def out_channels(self) -> tuple[int, int]:
        return split_alpha(self.widths[-1], self.alpha)

    def check_image(self, image: torch.Tensor) -> None:
        if image.dim() != 4 or image.shape[1] != 3:
            raise InvalidArgument(f"expected a batch x 3 x H x W image, got shape {tuple(image.shape)}")
        h, w = image.shape[-2:]
        m = self.downsample
        if h % m or w % m:
            raise InvalidArgument(f"image dims {h}x{w} must be divisible by {m}; pad or resize first")

    def features(self, image: torch.Tensor) -> list[OctavePair]:
        self.check_image(image)
        n, _, h, w = image.shape
        x = OctavePair(image, image.new_zeros(n, 0, h // 2, w // 2))
        x = leaky(self.stem(x), self.slope)
        feats = [x]
        for block in self.blocks:
            x = block(x)
            feats.append(x)
        return feats

    def forward(self, image: torch.Tensor) -> OctavePair:
        return self.features(image)[-1]


class ContentEncoder(OctEncoder):
    pass


class AestheticEncoder(OctEncoder):
    """Backbone plus a descriptor head: adaptive average pooling of each branch
    to ``grid x grid`` and a per-branch 1x1 projection to ``descriptor_channels``."""

    def __init__(self, widths=(64, 128, 256, 256), alpha=0.5, descriptor_channels=256, grid=3, slope=0.2):
        super().__init__(widths, alpha, slope)
        self.descriptor_channels = descriptor_channels
        self.grid = grid
        c_h, c_l = self.out_channels
        self.proj_h = nn.Conv2d(c_h, descriptor_channels, 1) if c_h else None
        self.proj_l = nn.Conv2d(c_l, descriptor_channels, 1) if c_l else None
        for proj in (self.proj_h, self.proj_l):
            if proj is not None:
                fan_in_uniform_(proj.weight)
                nn.init.zeros_(proj.bias)

    @property
    def min_size(self) -> int:
        return self.downsample * self.grid

    def check_image(self, image: torch.Tensor) -> None:
        super().check_image(image)
        h, w = image.shape[-2:]
        if min(h, w) < self.min_size:
            raise InvalidArgument(f"style image {h}x{w} is smaller than the minimum {self.min_size}x{self.min_size}")

    def _head(self, x, proj):
        n = x.shape[0]
        if proj is None:
            return x.new_zeros(n, self.descriptor_channels, self.grid, self.grid)
        return proj(F.adaptive_avg_pool2d(x, self.grid))

    def describe(self, image: torch.Tensor) -> AestheticDescriptor:
        hi, lo = self.forward(image)
        return AestheticDescriptor(self._head(hi, self.proj_h), self._head(lo, self.proj_l))


def encode_content(image: torch.Tensor, encoder: ContentEncoder) -> OctavePair:
    return encoder(image)


def encode_style(image: torch.Tensor, encoder: AestheticEncoder) -> AestheticDescriptor:
    return encoder.describe(image)


def encoder_features(image: torch.Tensor, encoder: OctEncoder) -> list[OctavePair]:
    return encoder.features(image)
