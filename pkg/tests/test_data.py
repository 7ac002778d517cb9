import numpy as np
import pytest
import torch
from PIL import Image

from aesfa.data import PairStream, augment, discover_images, load_image, rescale_shorter, save_png
from aesfa.errors import ConfigurationError, InputError


def test_discover_is_recursive_and_sorted(image_dirs):
    _, sdir = image_dirs
    found = [p.relative_to(sdir).as_posix() for p in discover_images(sdir)]
    assert found == ["nested/s1.png", "s0.jpg"]


def test_discover_missing_dir(tmp_path):
    with pytest.raises(ConfigurationError):
        discover_images(tmp_path / "missing")


def test_rescale_shorter_example():
    assert rescale_shorter(Image.new("RGB", (800, 600)), 512).size == (682, 512)


def test_augment_shape_and_determinism():
    im = Image.new("RGB", (100, 80), (10, 20, 30))
    a = augment(im, np.random.default_rng(1), load_size=64, crop=32)
    b = augment(im, np.random.default_rng(1), load_size=64, crop=32)
    assert a.shape == (3, 32, 32) and torch.equal(a, b)


def test_augment_rejects_tiny():
    with pytest.raises(InputError):
        augment(Image.new("RGB", (8, 8)), np.random.default_rng(0), 64, 32, source="tiny.png")


def test_load_and_save_png(tmp_path):
    x = torch.rand(3, 10, 12)
    save_png(x, tmp_path / "o.png")
    y = load_image(tmp_path / "o.png")
    assert y.shape == (3, 10, 12)
    assert (y - x).abs().max() <= 0.5 / 255 + 1e-6


def test_load_image_errors(tmp_path):
    bad = tmp_path / "bad.png"
    bad.write_bytes(b"not an image")
    with pytest.raises(InputError, match="bad.png"):
        load_image(bad)
    with pytest.raises(InputError):
        load_image(tmp_path / "missing.png")


def test_pair_stream_is_stateless(image_dirs):
    cdir, sdir = image_dirs
    s1 = PairStream(discover_images(cdir), discover_images(sdir), batch=2, seed=3, load_size=64, crop=32)
    s2 = PairStream(discover_images(cdir), discover_images(sdir), batch=2, seed=3, load_size=64, crop=32)
    for it in range(3):
        s1.batch_at(it)
    c1, st1 = s1.batch_at(5)
    c2, st2 = s2.batch_at(5)
    assert torch.equal(c1, c2) and torch.equal(st1, st2)
    assert c1.shape == (2, 3, 32, 32)


def test_pair_stream_covers_epoch(image_dirs):
    cdir, sdir = image_dirs
    contents = discover_images(cdir)
    s = PairStream(contents, discover_images(sdir), batch=1, seed=0)
    assert sorted(s.paths(i)[0][0] for i in range(3)) == sorted(contents)


def test_pair_stream_empty():
    with pytest.raises(ConfigurationError):
        PairStream([], ["x"], 1)
