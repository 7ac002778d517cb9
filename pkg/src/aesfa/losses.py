"""Training losses.

Style distances use exact feature distribution matching (EFDM): the target's
sorted values are written to the input's rank positions, so the matched
feature keeps the input's spatial ordering but takes the target's exact value
distribution.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import InvalidArgument

EPS = 1e-8

# (name, in, out) for the VGG-19 prefix up to conv4_1; "pool" entries are 2x2 max pools
VGG19_PREFIX = (
    ("conv1_1", 0, 0), ("conv1_2", 0, 0), "pool",
    ("conv2_1", 0, 1), ("conv2_2", 1, 1), "pool",
    ("conv3_1", 1, 2), ("conv3_2", 2, 2), ("conv3_3", 2, 2), ("conv3_4", 2, 2), "pool",
    ("conv4_1", 2, 3),
)
STAGES = ("conv1_1", "conv2_1", "conv3_1", "conv4_1")
# torchvision ``vgg19().features`` indices of the convolutions above
TORCHVISION_VGG19_INDEX = {
    "conv1_1": 0, "conv1_2": 2, "conv2_1": 5, "conv2_2": 7, "conv3_1": 10,
    "conv3_2": 12, "conv3_3": 14, "conv3_4": 16, "conv4_1": 19,
}
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


class PerceptualExtractor(nn.Module):
    """Frozen VGG-19 prefix returning post-ReLU activations at conv1_1,
    conv2_1, conv3_1 and conv4_1.

    ``widths`` are the channel counts of the four VGG blocks; the production
    network uses ``(64, 128, 256, 512)``.  Narrower widths with seeded random
    weights give a cheap surrogate with the same topology.
    """

    def __init__(self, widths: Sequence[int] = (64, 128, 256, 512), normalize: bool = True):
        super().__init__()
        self.widths = tuple(widths)
        self.convs = nn.ModuleDict()
        for item in VGG19_PREFIX:
            if item == "pool":
                continue
            name, i, o = item
            cin = 3 if name == "conv1_1" else self.widths[i]
            self.convs[name] = nn.Conv2d(cin, self.widths[o], 3, padding=1)
        self.register_buffer("mean", torch.tensor(IMAGENET_MEAN).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor(IMAGENET_STD).view(1, 3, 1, 1))
        self.normalize = normalize
        self.requires_grad_(False)

    @classmethod
    def surrogate(cls, seed: int = 0, widths=(8, 16, 32, 64), dtype=torch.float32) -> "PerceptualExtractor":
        g = torch.Generator().manual_seed(seed)
        ext = cls(widths)
        with torch.no_grad():
            for conv in ext.convs.values():
                bound = (6.0 / conv.weight[0].numel()) ** 0.5
                conv.weight.copy_(torch.rand(conv.weight.shape, generator=g) * 2 * bound - bound)
                conv.bias.zero_()
        return ext.to(dtype)

    def forward(self, image: torch.Tensor) -> list[torch.Tensor]:
        x = (image - self.mean) / self.std if self.normalize else image
        feats = []
        for item in VGG19_PREFIX:
            if item == "pool":
                x = F.max_pool2d(x, 2)
                continue
            x = F.relu(self.convs[item[0]](x))
            if item[0] in STAGES:
                feats.append(x)
        return feats

    def named_weights(self) -> dict[str, torch.Tensor]:
        return {k: v for k, v in self.state_dict().items() if k.startswith("convs.")}


def convert_torchvision_vgg19(state_dict: dict) -> dict[str, torch.Tensor]:
    """Map a torchvision ``vgg19`` state dict onto :class:`PerceptualExtractor`
    parameter names (only the convolutions up to conv4_1 are kept)."""
    out = {}
    for name, idx in TORCHVISION_VGG19_INDEX.items():
        for kind in ("weight", "bias"):
            key = f"features.{idx}.{kind}"
            if key not in state_dict:
                raise KeyError(f"missing {key} in VGG-19 state dict")
            out[f"convs.{name}.{kind}"] = state_dict[key].detach().float().clone()
    return out


# ---------------------------------------------------------------- EFDM

def efdm(x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """Match the value distribution of ``x`` to ``y`` along the last axis.

    The i-th smallest element of ``x`` receives the i-th smallest element of
    ``y``; ties in ``x`` are ranked by position.  Differentiable in ``y``
    (through the sort); piecewise constant in ``x``.
    """
    if x.shape != y.shape:
        raise InvalidArgument(f"efdm needs equal shapes, got {tuple(x.shape)} and {tuple(y.shape)}")
    ys, _ = torch.sort(y, dim=-1, stable=True)
    order = torch.argsort(x, dim=-1, stable=True)
    return torch.zeros_like(ys).scatter(-1, order, ys)


def efdm_features(fx: torch.Tensor, fy: torch.Tensor) -> torch.Tensor:
    """Per-channel EFDM over flattened spatial positions of ``B x C x H x W`` maps."""
    if fx.shape != fy.shape:
        raise InvalidArgument(f"feature shapes differ: {tuple(fx.shape)} vs {tuple(fy.shape)}")
    n, c = fx.shape[:2]
    return efdm(fx.reshape(n, c, -1), fy.reshape(n, c, -1)).reshape(fx.shape)


def per_sample_norm(t: torch.Tensor) -> torch.Tensor:
    return torch.linalg.vector_norm(t.reshape(t.shape[0], -1), dim=1)


def efdm_distance(fx: torch.Tensor, fy: torch.Tensor) -> torch.Tensor:
    """Per-sample ``||fx - EFDM(fx, fy)||_2``."""
    return per_sample_norm(fx - efdm_features(fx, fy))


def _sorted_flat(f: torch.Tensor) -> torch.Tensor:
    n, c = f.shape[:2]
    return torch.sort(f.reshape(n, c, -1), dim=-1, stable=True)[0].reshape(n, -1)


def pairwise_efdm_distance(fx: torch.Tensor, fy: torch.Tensor) -> torch.Tensor:
    """``D[i, j] = ||fx_i - EFDM(fx_i, fy_j)||_2`` for all pairs.

    Permuting both operands by the rank order of ``fx_i`` leaves the norm
    unchanged, so this is the distance between per-channel sorted values.
    """
    if fx.shape[1:] != fy.shape[1:]:
        raise InvalidArgument(f"feature shapes differ: {tuple(fx.shape)} vs {tuple(fy.shape)}")
    xs, ys = _sorted_flat(fx), _sorted_flat(fy)
    rows = [torch.linalg.vector_norm(xs[i : i + 1] - ys, dim=1) for i in range(xs.shape[0])]
    return torch.stack(rows)


# ---------------------------------------------------------------- perceptual losses

def _check_images(a: torch.Tensor, b: torch.Tensor) -> None:
    if a.shape != b.shape:
        raise InvalidArgument(f"image shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")


def content_loss(out: torch.Tensor, content: torch.Tensor, ext: PerceptualExtractor, *,
                 out_feats=None, content_feats=None) -> torch.Tensor:
    """Batch mean of ``||f_3(out) - f_3(content)||_2``."""
    _check_images(out, content)
    fo = out_feats if out_feats is not None else ext(out)
    fc = content_feats if content_feats is not None else ext(content)
    return per_sample_norm(fo[2] - fc[2]).mean()


def style_loss(out: torch.Tensor, style: torch.Tensor, ext: PerceptualExtractor, *,
               out_feats=None, style_feats=None, reduce: bool = True) -> torch.Tensor:
    """Sum over the four stages of ``||f_n(out) - EFDM(f_n(out), f_n(style))||_2``.

    Averaged over the batch unless ``reduce`` is false, in which case the
    per-sample values are returned.
    """
    _check_images(out, style)
    fo = out_feats if out_feats is not None else ext(out)
    fs = style_feats if style_feats is not None else ext(style)
    per_sample = sum(efdm_distance(a, b) for a, b in zip(fo, fs))
    return per_sample.mean() if reduce else per_sample


# ---------------------------------------------------------------- contrastive loss

@dataclass
class ContrastiveConfig:
    k: int = 1
    selection_extractor: PerceptualExtractor | None = None


def style_distance_matrix(outputs: torch.Tensor, styles: torch.Tensor, ext: PerceptualExtractor, *,
                          out_feats=None, style_feats=None) -> torch.Tensor:
    """``D[i, j]`` = style loss between output ``i`` and style ``j``."""
    fo = out_feats if out_feats is not None else ext(outputs)
    fs = style_feats if style_feats is not None else ext(styles)
    return sum(pairwise_efdm_distance(a, b) for a, b in zip(fo, fs))


def rank_negatives(dist: torch.Tensor, k: int) -> torch.Tensor:
    """For each row ``i``, the ``k`` column indices ``j != i`` of smallest
    distance, ascending, ties to the lower index."""
    n = dist.shape[0]
    if n < 2:
        raise InvalidArgument("contrastive loss requires negatives: batch size must be >= 2")
    if not 1 <= k <= n - 1:
        raise InvalidArgument(f"k must lie in 1..{n - 1} for batch {n}, got {k}")
    d = dist.detach().clone()
    d.fill_diagonal_(float("inf"))
    order = torch.argsort(d, dim=1, stable=True)
    return order[:, :k]


@torch.no_grad()
def select_negatives(outputs: torch.Tensor, styles: torch.Tensor, cfg: ContrastiveConfig, *,
                     out_feats=None, style_feats=None) -> torch.Tensor:
    """Indices ``batch x k`` of the nearest pseudo-negative styles per output."""
    if outputs.shape[0] < 2:
        raise InvalidArgument("contrastive loss requires negatives: batch size must be >= 2")
    _check_images(outputs, styles)
    dist = style_distance_matrix(outputs, styles, cfg.selection_extractor,
                                 out_feats=out_feats, style_feats=style_feats)
    return rank_negatives(dist, cfg.k)


def contrastive_from_features(out_feats, style_feats, negatives: torch.Tensor, eps: float = EPS) -> torch.Tensor:
    """Aesthetic contrastive loss given encoder features of outputs and styles
    (lists of octave pairs) and the negative index table."""
    n = negatives.shape[0]
    idx = torch.arange(n)
    total = None
    for fo_pair, fs_pair in zip(out_feats, style_feats):
        for fo, fs in zip(fo_pair, fs_pair):
            if fo.shape[1] == 0:
                continue
            dist = pairwise_efdm_distance(fo, fs)
            pos = dist[idx, idx]
            neg = dist.gather(1, negatives).sum(dim=1)
            term = (pos / (neg + eps)).sum()
            total = term if total is None else total + term
    return total


def aesthetic_contrastive_loss(outputs: torch.Tensor, styles: torch.Tensor, encoder, cfg: ContrastiveConfig, *,
                               negatives: torch.Tensor | None = None) -> torch.Tensor:
    """Sum over encoder layers and both frequency branches of
    ``sum_i d(O_i, S_i) / sum_{j in neg(i)} d(O_i, S_j)`` with ``d`` the EFDM
    distance in the encoder's feature space."""
    if outputs.shape[0] < 2:
        raise InvalidArgument("contrastive loss requires negatives: batch size must be >= 2")
    if negatives is None:
        negatives = select_negatives(outputs, styles, cfg)
    return contrastive_from_features(encoder.features(outputs), encoder.features(styles), negatives)


# ---------------------------------------------------------------- total

@dataclass
class LossWeights:
    lambda_c: float = 1.0
    lambda_s: float = 10.0
    lambda_aes: float = 5.0

    def __post_init__(self):
        for name in ("lambda_c", "lambda_s", "lambda_aes"):
            v = float(getattr(self, name))
            if not v >= 0 or v == float("inf"):
                raise InvalidArgument(f"{name} must be a finite non-negative number, got {v}")


def total_loss(lc, ls, laes, w: LossWeights | None = None):
    w = w or LossWeights()
    return w.lambda_c * lc + w.lambda_s * ls + w.lambda_aes * laes
