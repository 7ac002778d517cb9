"""Command-line entry point: ``aesfa {train,stylize,eval,bench,init,convert-vgg}``.

Exit codes: 0 success, 1 usage error, 2 runtime or data error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import torch

from .data import discover_images, load_image, save_png
from .errors import CheckpointError, ConfigurationError, InputError, InvalidArgument, NonFiniteLoss
from .losses import LossWeights, PerceptualExtractor, convert_torchvision_vgg19
from .metrics import bench_inference, eval_pairs
from .model import AesFA, ModelConfig, stylize
from .training import (TrainConfig, model_from_checkpoint, resolve_extractor, save_extractor, train_loop,
                       write_model_checkpoint)

log = logging.getLogger("aesfa")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
PRESETS = {"default": {}, "micro": ModelConfig.micro().to_dict()}


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _formatter(prog):
    return argparse.ArgumentDefaultsHelpFormatter(prog, width=100, max_help_position=32)


def _plain_formatter(prog):
    return argparse.HelpFormatter(prog, width=100, max_help_position=32)


def build_parser() -> Parser:
    p = Parser(prog="aesfa", description="Frequency-decomposed neural style transfer.", formatter_class=_formatter)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=Parser)
    sub.required = True

    t = sub.add_parser("train", help="train a model", formatter_class=_plain_formatter,
                       description="Train on content/style image directories. Flags override --config, which "
                                   "overrides the built-in defaults listed below.")
    t.add_argument("--config", help="JSON file with TrainConfig fields")
    t.add_argument("--content-dir", help="directory of content images (PNG/JPEG, recursive)")
    t.add_argument("--style-dir", help="directory of style images (PNG/JPEG, recursive)")
    t.add_argument("--out", dest="out_dir", help="output directory for checkpoints and log (default runs/aesfa)")
    t.add_argument("--iters", dest="iterations", type=int, help="total iterations (default 160000)")
    t.add_argument("--batch", type=int, help="batch size (default 8)")
    t.add_argument("--lr", type=float, help="Adam learning rate (default 1e-4)")
    t.add_argument("--alpha", type=float, help="low-frequency channel fraction in [0, 1] (default 0.5)")
    t.add_argument("--ng", dest="n_g", type=int, help="channel groups of predicted kernels (default 8)")
    t.add_argument("--k-neg", dest="k", type=int, help="nearest negatives per sample (default 1)")
    t.add_argument("--lambda-c", type=float, help="content loss weight (default 1)")
    t.add_argument("--lambda-s", type=float, help="style loss weight (default 10)")
    t.add_argument("--lambda-aes", type=float, help="aesthetic contrastive loss weight (default 5)")
    t.add_argument("--seed", type=int, help="run seed (default 0)")
    t.add_argument("--checkpoint-every", type=int, help="iterations between checkpoints (default 1000)")
    t.add_argument("--load-size", type=int, help="shorter-side rescale before cropping (default 512)")
    t.add_argument("--crop-size", type=int, help="square training crop (default 256)")
    t.add_argument("--extractor", help="perceptual extractor weights file (default: seeded surrogate)")
    t.add_argument("--preset", choices=sorted(PRESETS), default=None, help="architecture preset (default: default)")
    t.add_argument("--resume", help="checkpoint to resume from")

    s = sub.add_parser("stylize", help="stylize one content image", formatter_class=_formatter)
    s.add_argument("--model", required=True, help="model checkpoint")
    s.add_argument("--content", required=True, help="content image")
    s.add_argument("--style", help="style image")
    s.add_argument("--style-high", help="style image for the high-frequency branch (blending)")
    s.add_argument("--style-low", help="style image for the low-frequency branch (blending)")
    s.add_argument("--out", required=True, help="output PNG path")

    e = sub.add_parser("eval", help="SSIM and style loss over content x style pairs", formatter_class=_formatter)
    e.add_argument("--model", required=True, help="model checkpoint")
    e.add_argument("--content", nargs="+", default=[], help="content images")
    e.add_argument("--style", nargs="+", default=[], help="style images")
    e.add_argument("--content-dir", help="directory of content images")
    e.add_argument("--style-dir", help="directory of style images")
    e.add_argument("--extractor", help="perceptual extractor weights file (default: seeded surrogate)")
    e.add_argument("--seed", type=int, default=0, help="surrogate extractor seed")
    e.add_argument("--out", required=True, help="report path (JSON lines plus a summary line)")

    b = sub.add_parser("bench", help="time forward passes", formatter_class=_formatter)
    b.add_argument("--model", required=True, help="model checkpoint")
    b.add_argument("--size", type=int, default=256, help="square content size, multiple of 16")
    b.add_argument("--reps", type=int, default=10, help="timed repetitions")
    b.add_argument("--warmup", type=int, default=2, help="untimed warm-up passes")
    b.add_argument("--out", help="optional JSON output path")

    i = sub.add_parser("init", help="write a freshly initialised model checkpoint", formatter_class=_formatter)
    i.add_argument("--out", required=True, help="checkpoint path")
    i.add_argument("--seed", type=int, default=0, help="initialisation seed")
    i.add_argument("--alpha", type=float, default=0.5, help="low-frequency channel fraction")
    i.add_argument("--ng", dest="n_g", type=int, default=None,
                   help="channel groups of predicted kernels (preset value when omitted)")
    i.add_argument("--preset", choices=sorted(PRESETS), default="default", help="architecture preset")

    c = sub.add_parser("convert-vgg", help="convert torchvision VGG-19 weights to an extractor file",
                       formatter_class=_formatter)
    c.add_argument("--torchvision-weights", required=True, help="torch.save'd vgg19 state dict (.pth)")
    c.add_argument("--out", required=True, help="extractor file to write")
    return p


def render_reference() -> str:
    """Markdown reference of every command and flag."""
    parser = build_parser()
    parts = ["# aesfa command reference", "", "Generated from the argument parser; do not edit by hand.", "",
             "```", parser.format_help().rstrip(), "```", ""]
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for name, sp in sub.choices.items():
        parts += [f"## {name}", "", "```", sp.format_help().rstrip(), "```", ""]
    return "\n".join(parts)


# ---------------------------------------------------------------- commands

TRAIN_FLAGS = ("content_dir", "style_dir", "out_dir", "iterations", "batch", "lr", "alpha", "n_g", "k", "seed",
               "checkpoint_every", "load_size", "crop_size", "extractor")


def train_config_from_args(args) -> tuple[TrainConfig, str]:
    values: dict = {}
    preset = "default"
    if args.config:
        try:
            values = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as exc:
            raise ConfigurationError(f"{args.config}: cannot read config ({exc})") from exc
        preset = values.pop("preset", preset)
    weights = dict(values.pop("loss_weights", {}) or {})
    for name in TRAIN_FLAGS:
        v = getattr(args, name)
        if v is not None:
            values[name] = v
    for name in ("lambda_c", "lambda_s", "lambda_aes"):
        v = getattr(args, name)
        if v is not None:
            weights[name] = v
    if args.preset:
        preset = args.preset
    if preset not in PRESETS:
        raise InvalidArgument(f"unknown preset {preset!r}")
    if "n_g" in PRESETS[preset] and "n_g" not in values:
        values["n_g"] = PRESETS[preset]["n_g"]
    try:
        cfg = TrainConfig(loss_weights=LossWeights(**weights), **values)
    except TypeError as exc:
        raise InvalidArgument(f"bad config: {exc}") from exc
    return cfg, preset


def cmd_train(args) -> int:
    cfg, preset = train_config_from_args(args)
    overrides = {k: v for k, v in PRESETS[preset].items() if k not in ("alpha", "n_g")}

    def progress(r):
        log.info("iter %d  C %.4f  S %.4f  Aes %.4f  total %.4f", r.iteration, r.loss_c, r.loss_s, r.loss_aes,
                 r.loss_total)

    final = train_loop(cfg, resume=args.resume, model_overrides=overrides, on_step=progress)
    print(f"final checkpoint: {final}")
    return EXIT_OK


def _require_file(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise InputError(p, "no such file")
    return p


def cmd_stylize(args) -> int:
    blending = args.style_high is not None or args.style_low is not None
    if blending and args.style is not None:
        raise UsageError("--style cannot be combined with --style-high/--style-low")
    if blending and (args.style_high is None or args.style_low is None):
        raise UsageError("blending needs both --style-high and --style-low")
    if not blending and args.style is None:
        raise UsageError("give --style, or --style-high and --style-low")
    out = Path(args.out)
    if not out.parent.is_dir():
        raise InputError(out.parent, "output directory does not exist")
    model, _ = model_from_checkpoint(_require_file(args.model))
    content = load_image(args.content).unsqueeze(0)
    if blending:
        high = load_image(args.style_high).unsqueeze(0)
        low = load_image(args.style_low).unsqueeze(0)
        result = stylize(model, content, style_high=high, style_low=low)
    else:
        result = stylize(model, content, load_image(args.style).unsqueeze(0))
    save_png(result, out)
    print(f"wrote {out} ({result.shape[-1]}x{result.shape[-2]})")
    return EXIT_OK


def cmd_eval(args) -> int:
    contents = [Path(p) for p in args.content]
    styles = [Path(p) for p in args.style]
    if args.content_dir:
        contents += discover_images(args.content_dir)
    if args.style_dir:
        styles += discover_images(args.style_dir)
    if not contents or not styles:
        raise UsageError("eval needs content images (--content/--content-dir) and style images (--style/--style-dir)")
    model, _ = model_from_checkpoint(_require_file(args.model))
    ext = resolve_extractor(args.extractor, args.seed)
    report = eval_pairs(model, contents, styles, ext)
    report.write(args.out)
    summary = report.summary()
    print(f"pairs {summary['pairs']}  failed {summary['failed']}  "
          f"mean SSIM {summary['mean_ssim']}  mean style loss {summary['mean_style_loss']}")
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.size < 16 or args.size % 16:
        raise UsageError(f"--size must be a positive multiple of 16, got {args.size}")
    if args.reps < 1:
        raise UsageError(f"--reps must be >= 1, got {args.reps}")
    if args.warmup < 0:
        raise UsageError(f"--warmup must be >= 0, got {args.warmup}")
    model, _ = model_from_checkpoint(_require_file(args.model))
    stats = bench_inference(model, args.size, args.reps, args.warmup)
    print(f"size {stats['size']}  reps {stats['reps']}  mean {stats['mean']:.4f}s  "
          f"std {stats['std']:.4f}s  min {stats['min']:.4f}s")
    if args.out:
        Path(args.out).write_text(json.dumps(stats, indent=2))
    return EXIT_OK


def cmd_init(args) -> int:
    cfg = dict(PRESETS[args.preset])
    cfg["alpha"] = args.alpha
    if args.n_g is not None:
        cfg["n_g"] = args.n_g
    config = ModelConfig(**cfg)
    torch.manual_seed(args.seed)
    model = AesFA(config)
    write_model_checkpoint(args.out, model, None, 0)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_convert_vgg(args) -> int:
    src = _require_file(args.torchvision_weights)
    try:
        state = torch.load(src, map_location="cpu", weights_only=True)
    except Exception as exc:  # torch raises a variety of unpickling errors
        raise InputError(src, f"cannot read state dict ({exc})") from exc
    ext = PerceptualExtractor()
    ext.load_state_dict({**ext.state_dict(), **convert_torchvision_vgg19(state)})
    save_extractor(ext, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "stylize": cmd_stylize, "eval": cmd_eval, "bench": cmd_bench,
            "init": cmd_init, "convert-vgg": cmd_convert_vgg}


def main(argv=None) -> int:
    threads = os.environ.get("AESFA_THREADS")
    if threads:
        try:
            torch.set_num_threads(max(1, int(threads)))
        except ValueError:
            print(f"aesfa: ignoring non-integer AESFA_THREADS={threads!r}", file=sys.stderr)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, InvalidArgument) as exc:
        print(f"aesfa {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InputError, ConfigurationError, CheckpointError, NonFiniteLoss, OSError) as exc:
        print(f"aesfa {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
