"""Octave-domain operators.

A feature map is split along channels into a full-resolution high-frequency
branch and a half-resolution low-frequency branch.  Octave factor is fixed at 2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import InvalidArgument


class OctavePair(NamedTuple):
    high: torch.Tensor
    low: torch.Tensor


def split_alpha(total_channels: int, alpha: float) -> tuple[int, int]:
    """Return ``(c_high, c_low)`` with ``c_low = floor(alpha * total_channels)``."""
    if total_channels < 1:
        raise InvalidArgument(f"total_channels must be >= 1, got {total_channels}")
    if not 0.0 <= alpha <= 1.0:
        raise InvalidArgument(f"alpha must lie in [0, 1], got {alpha}")
    c_low = math.floor(alpha * total_channels)
    return total_channels - c_low, c_low


def pool2(x: torch.Tensor) -> torch.Tensor:
    """2x2 average pooling with stride 2."""
    h, w = x.shape[-2:]
    if h % 2 or w % 2:
        raise InvalidArgument(f"pool2 needs even spatial dims, got {h}x{w}")
    return F.avg_pool2d(x, 2)


def upsample2(x: torch.Tensor) -> torch.Tensor:
    """Nearest-neighbour x2 upsampling."""
    return x.repeat_interleave(2, dim=-2).repeat_interleave(2, dim=-1)


def check_pair(x: OctavePair) -> None:
    hi, lo = x
    if hi.dim() != 4 or lo.dim() != 4:
        raise InvalidArgument("octave branches must be 4-D (batch, channels, height, width)")
    if hi.shape[0] != lo.shape[0]:
        raise InvalidArgument(f"branch batch sizes differ: {hi.shape[0]} vs {lo.shape[0]}")
    H, W = hi.shape[-2:]
    if H % 2 or W % 2:
        raise InvalidArgument(f"high branch must have even spatial dims, got {H}x{W}")
    if tuple(lo.shape[-2:]) != (H // 2, W // 2):
        raise InvalidArgument(
            f"low branch must be half the high resolution: high {H}x{W}, low {tuple(lo.shape[-2:])}"
        )


def empty_like_branch(ref: torch.Tensor, channels: int = 0, scale: float = 1.0) -> torch.Tensor:
    b, _, h, w = ref.shape
    return ref.new_zeros(b, channels, int(h * scale), int(w * scale))


@dataclass
class OctConvParams:
    """Weights of the four octave paths.  A path is ``None`` when its source or
    target branch has no channels."""

    w_hh: Optional[torch.Tensor]
    w_hl: Optional[torch.Tensor]
    w_lh: Optional[torch.Tensor]
    w_ll: Optional[torch.Tensor]
    b_hh: Optional[torch.Tensor] = None
    b_hl: Optional[torch.Tensor] = None
    b_lh: Optional[torch.Tensor] = None
    b_ll: Optional[torch.Tensor] = None
    stride: int = 1
    padding: Optional[int] = None

    def _pad(self) -> int:
        if self.padding is not None:
            return self.padding
        w = next(t for t in (self.w_hh, self.w_hl, self.w_lh, self.w_ll) if t is not None)
        return w.shape[-1] // 2

    @property
    def in_channels(self) -> tuple[int, int]:
        hi = next((t.shape[1] for t in (self.w_hh, self.w_hl) if t is not None), 0)
        lo = next((t.shape[1] for t in (self.w_ll, self.w_lh) if t is not None), 0)
        return hi, lo

    @property
    def out_channels(self) -> tuple[int, int]:
        hi = next((t.shape[0] for t in (self.w_hh, self.w_lh) if t is not None), 0)
        lo = next((t.shape[0] for t in (self.w_ll, self.w_hl) if t is not None), 0)
        return hi, lo


def octconv(x: OctavePair, p: OctConvParams) -> OctavePair:
    """Octave convolution forward pass.

    ``Y_H = f(X_H; W_hh) + f(up(X_L); W_lh)`` and
    ``Y_L = f(X_L; W_ll) + f(pool(X_H); W_hl)``.  Upsampling happens before the
    convolution so no transposed/interleaved resampling is involved.
    """
    check_pair(x)
    x_h, x_l = x
    in_h, in_l = p.in_channels
    if (x_h.shape[1], x_l.shape[1]) != (in_h, in_l):
        raise InvalidArgument(
            f"channel mismatch: input ({x_h.shape[1]}, {x_l.shape[1]}), params expect ({in_h}, {in_l})"
        )
    s, pad = p.stride, p._pad()

    def f(t, w, b):
        return F.conv2d(t, w, b, stride=s, padding=pad)

    out_h, out_l = p.out_channels
    y_h = y_l = None
    if p.w_hh is not None:
        y_h = f(x_h, p.w_hh, p.b_hh)
    if p.w_lh is not None:
        t = f(upsample2(x_l), p.w_lh, p.b_lh)
        y_h = t if y_h is None else y_h + t
    if p.w_ll is not None:
        y_l = f(x_l, p.w_ll, p.b_ll)
    if p.w_hl is not None:
        t = f(pool2(x_h), p.w_hl, p.b_hl)
        y_l = t if y_l is None else y_l + t

    if y_h is None:
        y_h = empty_like_branch(x_h, out_h, 1.0 / s)
    if y_l is None:
        y_l = empty_like_branch(x_l, out_l, 1.0 / s)
    return OctavePair(y_h, y_l)


def fan_in_uniform_(w: torch.Tensor, gain: float = 1.0) -> torch.Tensor:
    """Uniform init with variance ``gain / fan_in``."""
    fan_in = w[0].numel()
    bound = math.sqrt(3.0 * gain / max(fan_in, 1))
    with torch.no_grad():
        return w.uniform_(-bound, bound)


class OctConv(nn.Module):
    """Parameter holder around :func:`octconv`.

    ``in_channels``/``out_channels`` are ``(high, low)`` tuples.  Each output
    branch carries a single bias (on its same-branch path, or on the cross path
    when the same-branch path is absent).
    """

    def __init__(self, in_channels, out_channels, kernel_size=3, stride=1, bias=True, gain=1.0):
        super().__init__()
        in_h, in_l = in_channels
        out_h, out_l = out_channels
        self.in_channels = (in_h, in_l)
        self.out_channels = (out_h, out_l)
        self.stride = stride
        self.kernel_size = kernel_size

        def make(ci, co):
            if ci == 0 or co == 0:
                return None
            return nn.Parameter(fan_in_uniform_(torch.empty(co, ci, kernel_size, kernel_size), gain / 2 if (in_h and in_l) else gain))

        self.w_hh = make(in_h, out_h)
        self.w_hl = make(in_h, out_l)
        self.w_lh = make(in_l, out_h)
        self.w_ll = make(in_l, out_l)
        self.b_h = nn.Parameter(torch.zeros(out_h)) if bias and out_h else None
        self.b_l = nn.Parameter(torch.zeros(out_l)) if bias and out_l else None

    def params(self) -> OctConvParams:
        b_hh = self.b_h if self.w_hh is not None else None
        b_lh = self.b_h if self.w_hh is None else None
        b_ll = self.b_l if self.w_ll is not None else None
        b_hl = self.b_l if self.w_ll is None else None
        return OctConvParams(
            self.w_hh, self.w_hl, self.w_lh, self.w_ll,
            b_hh=b_hh, b_hl=b_hl, b_lh=b_lh, b_ll=b_ll,
            stride=self.stride, padding=self.kernel_size // 2,
        )

    def forward(self, x: OctavePair) -> OctavePair:
        return octconv(x, self.params())

    def extra_repr(self):
        return f"in={self.in_channels}, out={self.out_channels}, k={self.kernel_size}, stride={self.stride}"


def leaky(x: OctavePair, slope: float = 0.2) -> OctavePair:
    return OctavePair(F.leaky_relu(x.high, slope), F.leaky_relu(x.low, slope))


def upsample_pair(x: OctavePair) -> OctavePair:
    return OctavePair(upsample2(x.high), upsample2(x.low))
