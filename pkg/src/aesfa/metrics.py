"""Evaluation: SSIM against the content, EFDM style loss, and inference timing."""
from __future__ import annotations

import json
import statistics
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import torch
import torch.nn.functional as F

from .data import load_image
from .errors import ConfigurationError, InputError, InvalidArgument
from .losses import PerceptualExtractor, style_loss
from .model import AesFA, stylize

LUMA = (0.299, 0.587, 0.114)
WINDOW = 11
SIGMA = 1.5
K1, K2 = 0.01, 0.03


def to_luma(img: torch.Tensor) -> torch.Tensor:
    """``... x 3 x H x W`` RGB to ``... x 1 x H x W`` luma (float64)."""
    img = img.double()
    if img.dim() == 3:
        img = img.unsqueeze(0)
    if img.shape[1] == 1:
        return img
    w = img.new_tensor(LUMA).view(1, 3, 1, 1)
    return (img * w).sum(dim=1, keepdim=True)


def gaussian_window(size: int = WINDOW, sigma: float = SIGMA) -> torch.Tensor:
    coords = torch.arange(size, dtype=torch.float64) - (size - 1) / 2
    g = torch.exp(-(coords**2) / (2 * sigma**2))
    g = g / g.sum()
    return torch.outer(g, g)


def ssim(a: torch.Tensor, b: torch.Tensor, data_range: float = 1.0) -> float:
    """Mean SSIM over all fully-contained 11x11 Gaussian windows of the luma
    channel.  Batched inputs are averaged."""
    if a.shape != b.shape:
        raise InvalidArgument(f"ssim needs equal shapes, got {tuple(a.shape)} and {tuple(b.shape)}")
    x, y = to_luma(a), to_luma(b)
    if min(x.shape[-2:]) < WINDOW:
        raise InvalidArgument(f"images must be at least {WINDOW}x{WINDOW} for SSIM")
    win = gaussian_window().view(1, 1, WINDOW, WINDOW)
    c1, c2 = (K1 * data_range) ** 2, (K2 * data_range) ** 2

    def filt(t):
        return F.conv2d(t, win)

    mu_x, mu_y = filt(x), filt(y)
    sxx = filt(x * x) - mu_x * mu_x
    syy = filt(y * y) - mu_y * mu_y
    sxy = filt(x * y) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (sxx + syy + c2)
    return float((num / den).mean())


# ---------------------------------------------------------------- eval

@dataclass
class EvalRecord:
    content: str
    style: str
    ssim: float | None = None
    style_loss: float | None = None
    error: str | None = None


@dataclass
class EvalReport:
    records: list[EvalRecord] = field(default_factory=list)
    mean_ssim: float | None = None
    mean_style_loss: float | None = None
    timing: dict | None = None

    def aggregate(self) -> "EvalReport":
        ok = [r for r in self.records if r.error is None]
        self.mean_ssim = statistics.fmean(r.ssim for r in ok) if ok else None
        self.mean_style_loss = statistics.fmean(r.style_loss for r in ok) if ok else None
        return self

    def summary(self) -> dict:
        return {
            "pairs": len(self.records),
            "failed": sum(r.error is not None for r in self.records),
            "mean_ssim": self.mean_ssim,
            "mean_style_loss": self.mean_style_loss,
            "timing": self.timing,
        }

    def write(self, path) -> Path:
        """One JSON record per line, then a final ``{"summary": ...}`` line."""
        path = Path(path)
        with open(path, "w") as fh:
            for r in self.records:
                fh.write(json.dumps(asdict(r)) + "\n")
            fh.write(json.dumps({"summary": self.summary()}) + "\n")
        return path

    @classmethod
    def read(cls, path) -> "EvalReport":
        report = cls()
        for line in Path(path).read_text().splitlines():
            row = json.loads(line)
            if "summary" in row:
                s = row["summary"]
                report.mean_ssim, report.mean_style_loss, report.timing = s["mean_ssim"], s["mean_style_loss"], s["timing"]
            else:
                report.records.append(EvalRecord(**row))
        return report


def _match_size(style: torch.Tensor, like: torch.Tensor) -> torch.Tensor:
    if style.shape[-2:] == like.shape[-2:]:
        return style
    return F.interpolate(style, size=like.shape[-2:], mode="bilinear", align_corners=False)


def eval_pairs(model: AesFA, contents: Sequence, styles: Sequence, ext: PerceptualExtractor,
               stylize_fn: Callable | None = None) -> EvalReport:
    """Stylize every (content, style) pair and score it.

    SSIM is taken against the content image; the style loss against the style
    image resized to the output's size.  A pair whose images fail to decode is
    recorded with its error and left out of the means.
    """
    if not contents or not styles:
        raise ConfigurationError("eval needs at least one content and one style image")
    run = stylize_fn or (lambda c, s: stylize(model, c, s))
    cache: dict = {}

    def get(path):
        if path not in cache:
            try:
                cache[path] = load_image(path).unsqueeze(0)
            except InputError as exc:
                cache[path] = exc
        return cache[path]

    report = EvalReport()
    for cp in contents:
        for sp in styles:
            rec = EvalRecord(str(cp), str(sp))
            c, s = get(cp), get(sp)
            bad = next((x for x in (c, s) if isinstance(x, Exception)), None)
            if bad is not None:
                rec.error = str(bad)
            else:
                with torch.no_grad():
                    out = run(c, s)
                    rec.ssim = ssim(out, c)
                    rec.style_loss = float(style_loss(out, _match_size(s, out), ext))
            report.records.append(rec)
    return report.aggregate()


# ---------------------------------------------------------------- timing

def bench_inference(model: AesFA, size: int, reps: int = 10, warmup: int = 2, style_size: int = 256,
                    seed: int = 0) -> dict:
    """Wall-clock forward-pass timing on seeded ``size x size`` content.

    Runs ``warmup`` untimed passes followed by ``reps`` timed passes.
    """
    if reps < 1:
        raise InvalidArgument(f"reps must be >= 1, got {reps}")
    if warmup < 0:
        raise InvalidArgument(f"warmup must be >= 0, got {warmup}")
    if size < 1 or size % model.multiple:
        raise InvalidArgument(f"size must be a positive multiple of {model.multiple}, got {size}")
    g = torch.Generator().manual_seed(seed)
    content = torch.rand(1, 3, size, size, generator=g)
    style = torch.rand(1, 3, style_size, style_size, generator=g)
    model.eval()
    for _ in range(warmup):
        stylize(model, content, style)
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        stylize(model, content, style)
        times.append(time.perf_counter() - t0)
    return {
        "size": size,
        "reps": reps,
        "warmup": warmup,
        "mean": statistics.fmean(times),
        "std": statistics.pstdev(times),
        "min": min(times),
        "times": times,
    }
