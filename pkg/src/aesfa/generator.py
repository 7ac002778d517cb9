"""Generator: three AdaOct layers, a frequency merge and a clamp."""
from __future__ import annotations

from typing import Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import InvalidArgument
from .freq_ops import (OctavePair, OctConv, OctConvParams, check_pair, fan_in_uniform_, leaky, octconv,
                       split_alpha, upsample2, upsample_pair)
from .kernel_prediction import AestheticKernelSet


def grouped_conv(x: torch.Tensor, weight: torch.Tensor, groups: int, bias: torch.Tensor | None = None) -> torch.Tensor:
    """Per-sample grouped convolution with 'same' zero padding.

    ``weight`` is ``batch x C_out x C_in/groups x k x k``; each sample of ``x``
    is convolved with its own kernel.  Folding the batch into the channel axis
    turns this into a single grouped convolution with ``batch * groups`` groups.
    """
    n, c, h, w = x.shape
    k = weight.shape[-1]
    out = F.conv2d(
        x.reshape(1, n * c, h, w),
        weight.reshape(n * weight.shape[1], *weight.shape[2:]),
        bias.reshape(-1) if bias is not None else None,
        padding=k // 2,
        groups=n * groups,
    )
    return out.reshape(n, weight.shape[1], h, w)


def _check_kernels(x: torch.Tensor, ks: AestheticKernelSet, name: str) -> None:
    c = x.shape[1]
    if ks.channels != c:
        raise InvalidArgument(f"{name} kernel set has {ks.channels} channels, features have {c}")
    if ks.spatial.shape[0] != x.shape[0]:
        raise InvalidArgument(f"{name} kernel batch {ks.spatial.shape[0]} != feature batch {x.shape[0]}")
    if c and ks.spatial.shape[2] * ks.groups != c:
        raise InvalidArgument(f"{name} kernels inconsistent with n_g={ks.groups} for {c} channels")


def adaptive_stage(x: torch.Tensor, ks: AestheticKernelSet) -> torch.Tensor:
    """Predicted depthwise-separable stage on one branch: grouped 3x3 spatial
    convolution, then grouped 1x1 pointwise convolution plus bias."""
    if x.shape[1] == 0:
        return x
    y = grouped_conv(x, ks.spatial, ks.groups)
    return grouped_conv(y, ks.pointwise, ks.groups, ks.bias)


def adaoct_apply(x: OctavePair, k_high: AestheticKernelSet, k_low: AestheticKernelSet,
                 mix: OctConvParams) -> OctavePair:
    check_pair(x)
    if k_high.groups != k_low.groups:
        raise InvalidArgument(f"group mismatch between branches: {k_high.groups} vs {k_low.groups}")
    _check_kernels(x.high, k_high, "high")
    _check_kernels(x.low, k_low, "low")
    styled = OctavePair(adaptive_stage(x.high, k_high), adaptive_stage(x.low, k_low))
    return octconv(styled, mix)


def merge_frequencies(rgb_high: torch.Tensor, rgb_low: torch.Tensor) -> torch.Tensor:
    """``clamp(rgb_high + upsample2(rgb_low), 0, 1)``."""
    H, W = rgb_high.shape[-2:]
    if rgb_low.shape[-2:] != (H // 2, W // 2) or H % 2 or W % 2:
        raise InvalidArgument(
            f"low image must be exactly half the high resolution: {tuple(rgb_high.shape[-2:])} vs {tuple(rgb_low.shape[-2:])}"
        )
    return torch.clamp(rgb_high + upsample2(rgb_low), 0.0, 1.0)


class Generator(nn.Module):
    """``widths`` are total channel counts: the input width followed by each
    layer's output width, e.g. 256 -> 128 -> 64 -> 32."""

    def __init__(self, widths: Sequence[int] = (256, 128, 64, 32), alpha: float = 0.5, slope: float = 0.2):
        super().__init__()
        self.widths = tuple(widths)
        self.alpha = alpha
        self.slope = slope
        splits = [split_alpha(c, alpha) for c in self.widths]
        self.branch_channels = splits[:-1]
        self.mixes = nn.ModuleList(OctConv(splits[i], splits[i + 1], kernel_size=3, gain=2.0) for i in range(len(splits) - 1))
        c_h, c_l = splits[-1]
        self.to_rgb_high = nn.Conv2d(c_h, 3, 3, padding=1) if c_h else None
        self.to_rgb_low = nn.Conv2d(c_l, 3, 3, padding=1) if c_l else None
        for conv in (self.to_rgb_high, self.to_rgb_low):
            if conv is not None:
                fan_in_uniform_(conv.weight)
                nn.init.zeros_(conv.bias)
        # start from mid-grey so the output clamp is not saturated at init
        base = self.to_rgb_high if self.to_rgb_high is not None else self.to_rgb_low
        nn.init.constant_(base.bias, 0.5)

    @property
    def num_layers(self) -> int:
        return len(self.mixes)

    def _rgb(self, x, conv, like):
        if conv is None:
            n, _, h, w = like.shape
            return like.new_zeros(n, 3, h, w)
        return conv(x)

    def forward(self, content: OctavePair, kernels: Sequence[AestheticKernelSet]) -> torch.Tensor:
        if len(kernels) != 2 * self.num_layers:
            raise InvalidArgument(f"expected {2 * self.num_layers} kernel sets, got {len(kernels)}")
        n = content.high.shape[0]
        for ks in kernels:
            if ks.spatial.shape[0] != n:
                raise InvalidArgument(f"kernel batch {ks.spatial.shape[0]} != content batch {n}")
        x = content
        for i, mix in enumerate(self.mixes):
            x = adaoct_apply(x, kernels[2 * i], kernels[2 * i + 1], mix.params())
            x = upsample_pair(leaky(x, self.slope))
        rgb_h = self._rgb(x.high, self.to_rgb_high, x.high)
        rgb_l = self._rgb(x.low, self.to_rgb_low, x.low)
        return merge_frequencies(rgb_h, rgb_l)


def generate(content: OctavePair, kernels: Sequence[AestheticKernelSet], generator: Generator) -> torch.Tensor:
    return generator(content, kernels)
