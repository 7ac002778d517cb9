"""Full stylization network and its configuration."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F

from .encoders import AestheticDescriptor, AestheticEncoder, ContentEncoder
from .errors import InvalidArgument
from .generator import Generator
from .kernel_prediction import KernelPredictors, blend_kernels


@dataclass
class ModelConfig:
    alpha: float = 0.5
    n_g: int = 8
    encoder_widths: tuple = (64, 128, 256, 256)
    generator_widths: tuple = (256, 128, 64, 32)
    descriptor_channels: int = 256
    slope: float = 0.2

    def __post_init__(self):
        self.encoder_widths = tuple(self.encoder_widths)
        self.generator_widths = tuple(self.generator_widths)
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidArgument(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.encoder_widths[-1] != self.generator_widths[0]:
            raise InvalidArgument("content encoder output width must equal the generator input width")
        if len(self.encoder_widths) != len(self.generator_widths):
            raise InvalidArgument("encoder stride count must match generator upsampling count")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["encoder_widths"] = list(self.encoder_widths)
        d["generator_widths"] = list(self.generator_widths)
        return d

    @classmethod
    def micro(cls, **overrides) -> "ModelConfig":
        """Four-channel configuration used for gradient checks and fast tests."""
        base = dict(alpha=0.5, n_g=2, encoder_widths=(4, 4, 4, 4), generator_widths=(4, 4, 4, 4),
                    descriptor_channels=4)
        base.update(overrides)
        return cls(**base)


class AesFA(nn.Module):
    def __init__(self, config: ModelConfig | None = None):
        super().__init__()
        self.config = cfg = config or ModelConfig()
        self.content_encoder = ContentEncoder(cfg.encoder_widths, cfg.alpha, cfg.slope)
        self.style_encoder = AestheticEncoder(cfg.encoder_widths, cfg.alpha, cfg.descriptor_channels, slope=cfg.slope)
        self.generator = Generator(cfg.generator_widths, cfg.alpha, cfg.slope)
        self.predictors = KernelPredictors(self.generator.branch_channels, cfg.n_g, cfg.descriptor_channels)

    @property
    def multiple(self) -> int:
        return self.content_encoder.downsample

    def describe(self, style: torch.Tensor) -> AestheticDescriptor:
        return self.style_encoder.describe(style)

    def kernels(self, style: torch.Tensor):
        return self.predictors(self.describe(style))

    def forward(self, content: torch.Tensor, style: torch.Tensor) -> torch.Tensor:
        if content.shape[0] != style.shape[0]:
            raise InvalidArgument(f"batch mismatch: content {content.shape[0]}, style {style.shape[0]}")
        return self.generator(self.content_encoder(content), self.kernels(style))

    def blend(self, content: torch.Tensor, style_high: torch.Tensor, style_low: torch.Tensor) -> torch.Tensor:
        """High-frequency style from ``style_high``, low-frequency from ``style_low``."""
        kh = self.kernels(style_high)
        kl = self.kernels(style_low)
        return self.generator(self.content_encoder(content), blend_kernels(kh, kl))


def pad_to_multiple(image: torch.Tensor, multiple: int) -> tuple[torch.Tensor, tuple[int, int]]:
    """Reflect-pad bottom/right so both dims divide ``multiple``.

    Falls back to edge replication when the image is too small to reflect.
    Returns the padded image and the original ``(h, w)``.
    """
    h, w = image.shape[-2:]
    ph, pw = (-h) % multiple, (-w) % multiple
    if ph == 0 and pw == 0:
        return image, (h, w)
    mode = "reflect" if ph < h and pw < w else "replicate"
    return F.pad(image, (0, pw, 0, ph), mode=mode), (h, w)


def fit_style(image: torch.Tensor, model: AesFA) -> torch.Tensor:
    """Make an arbitrary style image acceptable to the aesthetic encoder."""
    h, w = image.shape[-2:]
    need = model.style_encoder.min_size
    if min(h, w) < need:
        scale = need / min(h, w)
        image = F.interpolate(image, size=(max(need, round(h * scale)), max(need, round(w * scale))),
                              mode="bilinear", align_corners=False)
    return pad_to_multiple(image, model.multiple)[0]


@torch.no_grad()
def stylize(model: AesFA, content: torch.Tensor, style: torch.Tensor | None = None, *,
            style_high: torch.Tensor | None = None, style_low: torch.Tensor | None = None) -> torch.Tensor:
    """Inference entry point accepting arbitrary image sizes.

    Either ``style`` or both ``style_high`` and ``style_low`` must be given.
    """
    padded, (h, w) = pad_to_multiple(content, model.multiple)
    if style is not None:
        if style_high is not None or style_low is not None:
            raise InvalidArgument("give either style or style_high/style_low, not both")
        style_high = style_low = style
    elif style_high is None or style_low is None:
        raise InvalidArgument("blending needs both style_high and style_low")
    if style_high is style_low:
        out = model(padded, fit_style(style_high, model))
    else:
        out = model.blend(padded, fit_style(style_high, model), fit_style(style_low, model))
    return out[..., :h, :w]
