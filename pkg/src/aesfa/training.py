"""Optimisation loop and run configuration."""
from __future__ import annotations

import json
import logging
import math
import shutil
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import torch

from .checkpoint import (apply_model_state, load_checkpoint, load_tensors, restore_optimizer, save_checkpoint,
                         save_tensors)
from .data import PairStream, discover_images
from .errors import CheckpointError, ConfigurationError, InvalidArgument, NonFiniteLoss
from .losses import (ContrastiveConfig, LossWeights, PerceptualExtractor, content_loss, contrastive_from_features,
                     select_negatives, style_loss, total_loss)
from .model import AesFA, ModelConfig

log = logging.getLogger(__name__)

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    content_dir: str | None = None
    style_dir: str | None = None
    out_dir: str = "runs/aesfa"
    iterations: int = 160_000
    batch: int = 8
    lr: float = 1e-4
    alpha: float = 0.5
    n_g: int = 8
    k: int = 1
    loss_weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    checkpoint_every: int = 1000
    load_size: int = 512
    crop_size: int = 256
    extractor: str | None = None

    def __post_init__(self):
        if isinstance(self.loss_weights, dict):
            self.loss_weights = LossWeights(**self.loss_weights)
        self.validate()

    def validate(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidArgument(f"alpha must lie in [0, 1], got {self.alpha}")
        for name in ("iterations", "batch", "n_g", "k", "checkpoint_every", "load_size", "crop_size"):
            if int(getattr(self, name)) < 1:
                raise InvalidArgument(f"{name} must be a positive integer, got {getattr(self, name)}")
        if not (self.lr > 0 and math.isfinite(self.lr)):
            raise InvalidArgument(f"lr must be positive, got {self.lr}")
        if self.seed < 0:
            raise InvalidArgument(f"seed must be non-negative, got {self.seed}")
        if self.loss_weights.lambda_aes > 0 and self.k >= self.batch:
            raise InvalidArgument(f"k ({self.k}) must be smaller than the batch size ({self.batch})")
        if self.crop_size > self.load_size:
            raise InvalidArgument("crop_size cannot exceed load_size")

    def model_config(self, **overrides) -> ModelConfig:
        return ModelConfig(alpha=self.alpha, n_g=self.n_g, **overrides)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LossReport:
    iteration: int
    loss_c: float
    loss_s: float
    loss_aes: float
    loss_total: float
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def make_optimizer(model: torch.nn.Module, lr: float) -> torch.optim.Adam:
    return torch.optim.Adam(model.parameters(), lr=lr, betas=ADAM_BETAS, eps=ADAM_EPS)


def compute_losses(model: AesFA, ext: PerceptualExtractor, content: torch.Tensor, style: torch.Tensor,
                   k: int = 1, weights: LossWeights | None = None) -> dict[str, torch.Tensor]:
    """Forward pass and every loss term.  Terms with zero weight are skipped
    and reported as zero."""
    weights = weights or LossWeights()
    out = model(content, style)
    fo = ext(out)
    with torch.no_grad():
        fc = ext(content)
        fs = ext(style)
    zero = out.new_zeros(())
    lc = content_loss(out, content, ext, out_feats=fo, content_feats=fc) if weights.lambda_c else zero
    ls = style_loss(out, style, ext, out_feats=fo, style_feats=fs) if weights.lambda_s else zero
    if weights.lambda_aes:
        cfg = ContrastiveConfig(k=k, selection_extractor=ext)
        neg = select_negatives(out.detach(), style, cfg, out_feats=[f.detach() for f in fo], style_feats=fs)
        enc = model.style_encoder
        laes = contrastive_from_features(enc.features(out), enc.features(style), neg)
    else:
        laes = zero
    return {"loss_c": lc, "loss_s": ls, "loss_aes": laes, "loss_total": total_loss(lc, ls, laes, weights)}


def train_step(model: AesFA, opt: torch.optim.Optimizer, ext: PerceptualExtractor, content: torch.Tensor,
               style: torch.Tensor, k: int = 1, weights: LossWeights | None = None, iteration: int = 0) -> LossReport:
    """One Adam update of every model parameter; the extractor stays frozen."""
    t0 = time.perf_counter()
    losses = compute_losses(model, ext, content, style, k, weights)
    for name, value in losses.items():
        if not torch.isfinite(value):
            raise NonFiniteLoss(name, float(value.detach()))
    opt.zero_grad(set_to_none=True)
    losses["loss_total"].backward()
    opt.step()
    vals = {k_: float(v.detach()) for k_, v in losses.items()}
    return LossReport(iteration=iteration, wall_time=time.perf_counter() - t0, **vals)


# ---------------------------------------------------------------- extractor files

def save_extractor(ext: PerceptualExtractor, path) -> Path:
    meta = {"kind": "perceptual_extractor", "widths": list(ext.widths), "normalize": ext.normalize}
    return save_tensors(path, {"extractor": ext.named_weights()}, meta)


def load_extractor(path) -> PerceptualExtractor:
    groups, meta = load_tensors(path)
    if meta.get("kind") != "perceptual_extractor" or "extractor" not in groups:
        raise CheckpointError(f"{path}: not a perceptual extractor file")
    ext = PerceptualExtractor(meta["widths"], normalize=meta.get("normalize", True))
    state = ext.state_dict()
    for name, t in groups["extractor"].items():
        if name not in state or state[name].shape != t.shape:
            raise CheckpointError(f"{path}: unexpected extractor tensor {name!r}")
        state[name] = t
    ext.load_state_dict(state)
    return ext.requires_grad_(False)


def resolve_extractor(path, seed: int = 0) -> PerceptualExtractor:
    if path:
        return load_extractor(path)
    log.warning("no perceptual extractor weights given; using the seeded surrogate network")
    return PerceptualExtractor.surrogate(seed)


# ---------------------------------------------------------------- model files

def model_from_checkpoint(path) -> tuple[AesFA, dict]:
    state, _, meta = load_checkpoint(path)
    if "model_config" not in meta:
        raise CheckpointError(f"{path}: checkpoint lacks a model_config")
    model = AesFA(ModelConfig(**meta["model_config"]))
    apply_model_state(model, state, path)
    return model.eval(), meta


def write_model_checkpoint(path, model: AesFA, opt, iteration: int, cfg: TrainConfig | None = None) -> Path:
    meta = {"kind": "aesfa", "iteration": iteration, "model_config": model.config.to_dict()}
    if cfg is not None:
        meta["train_config"] = cfg.to_dict()
    return save_checkpoint(path, model, opt, meta)


def checkpoint_name(step: int) -> str:
    return f"ckpt_{step:07d}.aesfa"


def train_loop(cfg: TrainConfig, resume=None, model_overrides: dict | None = None,
               on_step: Callable[[LossReport], None] | None = None) -> Path:
    """Run ``cfg.iterations`` steps (counting any resumed ones) and return the
    path of the final checkpoint."""
    cfg.validate()
    if not cfg.content_dir or not cfg.style_dir:
        raise ConfigurationError("content_dir and style_dir are required")
    contents, styles = discover_images(cfg.content_dir), discover_images(cfg.style_dir)
    stream = PairStream(contents, styles, cfg.batch, cfg.seed, cfg.load_size, cfg.crop_size)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    torch.manual_seed(cfg.seed)
    model = AesFA(cfg.model_config(**(model_overrides or {})))
    opt = make_optimizer(model, cfg.lr)
    start = 0
    if resume is not None:
        state, opt_state, meta = load_checkpoint(resume)
        if meta.get("model_config") != model.config.to_dict():
            model = AesFA(ModelConfig(**meta["model_config"]))
            opt = make_optimizer(model, cfg.lr)
        apply_model_state(model, state, resume)
        restore_optimizer(model, opt, opt_state)
        start = int(meta.get("iteration", 0))
        log.info("resumed from %s at iteration %d", resume, start)
    ext = resolve_extractor(cfg.extractor, cfg.seed)
    model.train()

    log_path = out_dir / "train_log.jsonl"
    last = None
    with open(log_path, "a") as log_fh:
        for it in range(start, cfg.iterations):
            content, style = stream.batch_at(it)
            report = train_step(model, opt, ext, content, style, cfg.k, cfg.loss_weights, iteration=it + 1)
            log_fh.write(json.dumps(report.to_dict()) + "\n")
            log_fh.flush()
            if on_step is not None:
                on_step(report)
            step = it + 1
            if step % cfg.checkpoint_every == 0:
                last = write_model_checkpoint(out_dir / checkpoint_name(step), model, opt, step, cfg)
    final = out_dir / "final.aesfa"
    if last is not None and last.name == checkpoint_name(cfg.iterations):
        shutil.copyfile(last, final)
    else:
        write_model_checkpoint(final, model, opt, max(start, cfg.iterations), cfg)
    return final
