"""Image discovery, decoding and training-time augmentation."""
from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

from .errors import ConfigurationError, InputError

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}


def discover_images(root) -> list[Path]:
    """PNG/JPEG files under ``root`` (recursive), sorted by relative path."""
    root = Path(root)
    if not root.is_dir():
        raise ConfigurationError(f"{root}: not a directory")
    files = [p for p in root.rglob("*") if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES]
    return sorted(files, key=lambda p: p.relative_to(root).as_posix())


def open_rgb(path) -> Image.Image:
    try:
        with Image.open(path) as im:
            return im.convert("RGB")
    except FileNotFoundError as exc:
        raise InputError(path, "no such file") from exc
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise InputError(path, f"cannot decode image ({exc})") from exc


def to_tensor(im: Image.Image) -> torch.Tensor:
    arr = np.asarray(im, dtype=np.float32) / 255.0
    return torch.from_numpy(arr.transpose(2, 0, 1).copy())


def load_image(path) -> torch.Tensor:
    """Decode to a ``3 x H x W`` float tensor in [0, 1]."""
    return to_tensor(open_rgb(path))


def save_png(image: torch.Tensor, path) -> None:
    """Write a ``3 x H x W`` (or ``1 x 3 x H x W``) [0, 1] tensor as 8-bit RGB PNG."""
    if image.dim() == 4:
        image = image[0]
    arr = (image.detach().clamp(0, 1).cpu().numpy().transpose(1, 2, 0) * 255.0).round().astype(np.uint8)
    Image.fromarray(arr, "RGB").save(path, format="PNG")


def rescale_shorter(im: Image.Image, target: int = 512) -> Image.Image:
    """Bilinear resize so the shorter side equals ``target``; the longer side
    is scaled by the same factor and truncated."""
    w, h = im.size
    if w <= h:
        size = (target, int(h * target / w))
    else:
        size = (int(w * target / h), target)
    if size == (w, h):
        return im
    return im.resize(size, Image.BILINEAR)


def augment(im: Image.Image, rng: np.random.Generator, load_size: int = 512, crop: int = 256,
            source=None) -> torch.Tensor:
    """Rescale the shorter side to ``load_size`` then take a uniformly random
    ``crop x crop`` window.  Returns ``3 x crop x crop`` in [0, 1]."""
    if min(im.size) < 16:
        raise InputError(source or "<image>", f"image {im.size[0]}x{im.size[1]} is smaller than 16x16")
    im = rescale_shorter(im, load_size)
    w, h = im.size
    top = int(rng.integers(0, h - crop + 1))
    left = int(rng.integers(0, w - crop + 1))
    return to_tensor(im.crop((left, top, left + crop, top + crop)))


class PairStream:
    """Deterministic content/style batch schedule.

    Content and style orders are reshuffled independently every epoch; the
    permutation of epoch ``e`` and the crop of slot ``(t, b)`` depend only on
    the seed and those indices, so any iteration can be regenerated without
    replaying earlier ones.
    """

    def __init__(self, contents: list[Path], styles: list[Path], batch: int, seed: int = 0,
                 load_size: int = 512, crop: int = 256):
        if not contents:
            raise ConfigurationError("content dataset is empty")
        if not styles:
            raise ConfigurationError("style dataset is empty")
        self.contents, self.styles = list(contents), list(styles)
        self.batch, self.seed = batch, seed
        self.load_size, self.crop = load_size, crop
        self._perm_cache: dict[tuple[int, int], np.ndarray] = {}

    def _perm(self, stream: int, epoch: int, n: int) -> np.ndarray:
        key = (stream, epoch)
        if key not in self._perm_cache:
            self._perm_cache[key] = np.random.default_rng([self.seed, epoch, stream]).permutation(n)
        return self._perm_cache[key]

    def paths(self, iteration: int) -> tuple[list[Path], list[Path]]:
        cs, ss = [], []
        for b in range(self.batch):
            g = iteration * self.batch + b
            cs.append(self.contents[self._perm(0, g // len(self.contents), len(self.contents))[g % len(self.contents)]])
            ss.append(self.styles[self._perm(1, g // len(self.styles), len(self.styles))[g % len(self.styles)]])
        return cs, ss

    def batch_at(self, iteration: int) -> tuple[torch.Tensor, torch.Tensor]:
        cs, ss = self.paths(iteration)
        content = [augment(open_rgb(p), np.random.default_rng([self.seed, iteration, b, 0]), self.load_size, self.crop, p)
                   for b, p in enumerate(cs)]
        style = [augment(open_rgb(p), np.random.default_rng([self.seed, iteration, b, 1]), self.load_size, self.crop, p)
                 for b, p in enumerate(ss)]
        return torch.stack(content), torch.stack(style)
