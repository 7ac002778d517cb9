"""Kernel-prediction networks.

One predictor per (generator layer, frequency).  Each maps a ``D x 3 x 3``
descriptor to a grouped depthwise-separable kernel set:

* spatial kernels ``C x C/n_g x 3 x 3`` from a padded 3x3 convolution over the
  descriptor grid with ``C * C/n_g`` output channels; the 3x3 grid becomes the
  kernel taps;
* pointwise kernels ``C x C/n_g x 1 x 1`` and per-channel biases ``C`` from an
  affine map of the globally pooled descriptor.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import torch
import torch.nn as nn

from .errors import InvalidArgument
from .freq_ops import fan_in_uniform_

FREQS = ("high", "low")


@dataclass
class AestheticKernelSet:
    spatial: torch.Tensor    # batch x C x C/n_g x 3 x 3
    pointwise: torch.Tensor  # batch x C x C/n_g x 1 x 1
    bias: torch.Tensor       # batch x C
    groups: int

    @property
    def channels(self) -> int:
        return self.spatial.shape[1]


class KernelPredictor(nn.Module):
    def __init__(self, channels: int, groups: int, descriptor_channels: int = 256, kernel_size: int = 3):
        super().__init__()
        if channels and channels % groups:
            raise InvalidArgument(f"n_g={groups} must divide the layer width {channels}")
        self.channels = channels
        self.groups = groups
        self.kernel_size = kernel_size
        per_group = channels // groups if channels else 0
        self.per_group = per_group
        if channels == 0:
            # empty branch (alpha of 0 or 1): nothing to predict
            self.spatial = self.pointwise = self.bias = None
            return
        self.spatial = nn.Conv2d(descriptor_channels, channels * per_group, kernel_size, padding=kernel_size // 2)
        self.pointwise = nn.Linear(descriptor_channels, channels * per_group)
        self.bias = nn.Linear(descriptor_channels, channels)
        # Predicted kernels feed a convolution with fan-in per_group*k*k; scale
        # the head so predicted kernels start near fan-in-normalised magnitude.
        sp_gain = 2.0 / max(per_group * kernel_size * kernel_size, 1)
        pw_gain = 1.0 / max(per_group, 1)
        for mod, gain in ((self.spatial, sp_gain), (self.pointwise, pw_gain), (self.bias, 0.1)):
            fan_in_uniform_(mod.weight, gain)
            nn.init.zeros_(mod.bias)

    def forward(self, w: torch.Tensor) -> AestheticKernelSet:
        n = w.shape[0]
        c, g, k = self.channels, self.per_group, self.kernel_size
        if c == 0:
            return AestheticKernelSet(w.new_zeros(n, 0, 0, k, k), w.new_zeros(n, 0, 0, 1, 1), w.new_zeros(n, 0), self.groups)
        spatial = self.spatial(w)
        if spatial.shape[-2:] != (k, k):
            raise InvalidArgument(f"descriptor grid must be {k}x{k}, got {tuple(w.shape[-2:])}")
        spatial = spatial.reshape(n, c, g, k, k)
        pooled = w.mean(dim=(2, 3))
        pointwise = self.pointwise(pooled).reshape(n, c, g, 1, 1)
        bias = self.bias(pooled)
        return AestheticKernelSet(spatial, pointwise, bias, self.groups)


class KernelPredictors(nn.Module):
    """Independent predictors for every (layer, frequency).

    ``branch_channels`` lists the per-branch ``(high, low)`` width of each
    generator layer's input.
    """

    def __init__(self, branch_channels: Sequence[tuple[int, int]], groups: int = 8, descriptor_channels: int = 256):
        super().__init__()
        self.groups = groups
        self.layers = nn.ModuleList(
            nn.ModuleDict({
                "high": KernelPredictor(c_h, groups, descriptor_channels),
                "low": KernelPredictor(c_l, groups, descriptor_channels),
            })
            for c_h, c_l in branch_channels
        )

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    def predict(self, w, layer: int, freq: str) -> AestheticKernelSet:
        """``layer`` is 1-based; ``freq`` is ``"high"`` or ``"low"``."""
        if not 1 <= layer <= self.num_layers:
            raise InvalidArgument(f"layer must be in 1..{self.num_layers}, got {layer}")
        if freq not in FREQS:
            raise InvalidArgument(f"freq must be 'high' or 'low', got {freq!r}")
        code = w.high if freq == "high" else w.low
        return self.layers[layer - 1][freq](code)

    def forward(self, w) -> list[AestheticKernelSet]:
        return [self.predict(w, n, f) for n in range(1, self.num_layers + 1) for f in FREQS]


def predict_kernels(w, layer: int, freq: str, predictors: KernelPredictors) -> AestheticKernelSet:
    return predictors.predict(w, layer, freq)


def predict_all(w, predictors: KernelPredictors) -> list[AestheticKernelSet]:
    return predictors(w)


def blend_kernels(high_from: list[AestheticKernelSet], low_from: list[AestheticKernelSet]) -> list[AestheticKernelSet]:
    """Take every high-frequency kernel set from ``high_from`` and every
    low-frequency one from ``low_from``."""
    return [hk if i % 2 == 0 else lk for i, (hk, lk) in enumerate(zip(high_from, low_from))]
