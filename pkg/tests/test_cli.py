import json
from pathlib import Path

import pytest
from PIL import Image

from aesfa.cli import build_parser, main, render_reference
from conftest import write_image

DOCS = Path(__file__).resolve().parents[1] / "docs" / "cli.md"


@pytest.fixture
def micro_ckpt(tmp_path):
    path = tmp_path / "micro.aesfa"
    assert main(["init", "--preset", "micro", "--out", str(path)]) == 0
    return path


@pytest.fixture
def images(tmp_path):
    return (write_image(tmp_path / "content.png", 40, 56, seed=1), write_image(tmp_path / "style.jpg", 64, 64, seed=2),
            write_image(tmp_path / "style2.png", 48, 80, seed=3))


@pytest.mark.parametrize("cmd", ["train", "stylize", "eval", "bench", "init", "convert-vgg"])
def test_help_exits_zero(cmd, capsys):
    assert main([cmd, "--help"]) == 0
    assert "--" in capsys.readouterr().out


def test_help_lists_every_flag():
    parser = build_parser()
    sub = next(a for a in parser._actions if a.dest == "command")
    for name, sp in sub.choices.items():
        text = sp.format_help()
        for action in sp._actions:
            for opt in action.option_strings:
                assert opt in text, (name, opt)


def test_reference_doc_is_current():
    assert DOCS.read_text() == render_reference()


def test_stylize_writes_png_at_content_size(tmp_path, micro_ckpt, images, capsys):
    content, style, _ = images
    out = tmp_path / "out.png"
    assert main(["stylize", "--model", str(micro_ckpt), "--content", str(content), "--style", str(style),
                 "--out", str(out)]) == 0
    im = Image.open(out)
    assert im.mode == "RGB" and im.size == (56, 40)
    first = out.read_bytes()
    assert main(["stylize", "--model", str(micro_ckpt), "--content", str(content), "--style", str(style),
                 "--out", str(out)]) == 0
    assert out.read_bytes() == first


def test_blending_differs_with_distinct_styles(tmp_path, micro_ckpt, images):
    content, style, style2 = images
    a, b = tmp_path / "a.png", tmp_path / "b.png"
    base = ["stylize", "--model", str(micro_ckpt), "--content", str(content)]
    assert main(base + ["--style-high", str(style), "--style-low", str(style2), "--out", str(a)]) == 0
    assert main(base + ["--style-high", str(style2), "--style-low", str(style), "--out", str(b)]) == 0
    assert a.read_bytes() != b.read_bytes()


def stylize_args(ckpt, content, style, out):
    return ["stylize", "--model", str(ckpt), "--content", str(content), "--style", str(style), "--out", str(out)]


def test_exit_code_matrix(tmp_path, micro_ckpt, images, image_dirs, capsys):
    content, style, _ = images
    out = tmp_path / "o.png"
    cdir, sdir = image_dirs
    empty = tmp_path / "empty"
    empty.mkdir()
    cases = [
        (["frobnicate"], 1),
        ([], 1),
        (["stylize", "--model", str(micro_ckpt)], 1),
        (stylize_args(micro_ckpt, content, style, out) + ["--alpha", "0.3"], 1),
        (stylize_args(micro_ckpt, content, style, out) + ["--style-low", str(style)], 1),
        (["stylize", "--model", str(micro_ckpt), "--content", str(content), "--style-high", str(style),
          "--out", str(out)], 1),
        (stylize_args(micro_ckpt, tmp_path / "missing.png", style, out), 2),
        (stylize_args(tmp_path / "missing.aesfa", content, style, out), 2),
        (stylize_args(micro_ckpt, content, style, tmp_path / "nodir" / "o.png"), 2),
        (stylize_args(content, content, style, out), 2),
        (["train", "--content-dir", str(cdir), "--style-dir", str(sdir), "--alpha", "1.5"], 1),
        (["train", "--content-dir", str(empty), "--style-dir", str(sdir), "--out", str(tmp_path / "r")], 2),
        (["train", "--content-dir", str(tmp_path / "nope"), "--style-dir", str(sdir), "--out", str(tmp_path / "r")], 2),
        (["train", "--config", str(tmp_path / "missing.json")], 2),
        (["bench", "--model", str(micro_ckpt), "--size", "255"], 1),
        (["bench", "--model", str(micro_ckpt), "--reps", "0"], 1),
        (["eval", "--model", str(micro_ckpt), "--out", str(tmp_path / "r.jsonl")], 1),
        (["eval", "--model", str(micro_ckpt), "--content", str(content), "--style-dir", str(tmp_path / "nope"),
          "--out", str(tmp_path / "r.jsonl")], 2),
        (["init", "--out", str(tmp_path / "x.aesfa"), "--alpha", "2"], 1),
        (["convert-vgg", "--torchvision-weights", str(content), "--out", str(tmp_path / "v.bin")], 2),
    ]
    for argv, code in cases:
        assert main(argv) == code, argv
    err = capsys.readouterr().err
    assert "missing.png" in err and "missing.aesfa" in err


def test_train_and_resume(tmp_path, image_dirs, capsys):
    cdir, sdir = image_dirs
    run = tmp_path / "run"
    common = ["train", "--content-dir", str(cdir), "--style-dir", str(sdir), "--out", str(run), "--batch", "2",
              "--preset", "micro", "--load-size", "64", "--crop-size", "48", "--checkpoint-every", "2"]
    assert main(common + ["--iters", "4"]) == 0
    assert (run / "final.aesfa").exists()
    assert main(common + ["--iters", "6", "--resume", str(run / "final.aesfa")]) == 0
    rows = [json.loads(x)["iteration"] for x in (run / "train_log.jsonl").read_text().splitlines()]
    assert rows == [1, 2, 3, 4, 5, 6]


def test_train_config_file_precedence(tmp_path, image_dirs):
    cdir, sdir = image_dirs
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"content_dir": str(cdir), "style_dir": str(sdir), "iterations": 50, "batch": 2,
                               "load_size": 64, "crop_size": 48, "preset": "micro",
                               "loss_weights": {"lambda_aes": 0.0}}))
    run = tmp_path / "run"
    assert main(["train", "--config", str(cfg), "--iters", "1", "--out", str(run)]) == 0
    rows = (run / "train_log.jsonl").read_text().splitlines()
    assert len(rows) == 1 and json.loads(rows[0])["loss_aes"] == 0.0


def test_eval_and_bench(tmp_path, micro_ckpt, images, capsys):
    content, style, style2 = images
    report = tmp_path / "r.jsonl"
    assert main(["eval", "--model", str(micro_ckpt), "--content", str(content), "--style", str(style), str(style2),
                 "--out", str(report)]) == 0
    lines = report.read_text().splitlines()
    assert len(lines) == 3 and "summary" in json.loads(lines[-1])
    stats = tmp_path / "b.json"
    assert main(["bench", "--model", str(micro_ckpt), "--size", "32", "--reps", "3", "--warmup", "0",
                 "--out", str(stats)]) == 0
    printed = capsys.readouterr().out
    assert "mean" in printed and "std" in printed and "min" in printed
    assert json.loads(stats.read_text())["reps"] == 3


def test_threads_env(monkeypatch, capsys):
    monkeypatch.setenv("AESFA_THREADS", "lots")
    assert main(["bench", "--help"]) == 0
    assert "AESFA_THREADS" in capsys.readouterr().err
