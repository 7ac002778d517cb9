import sys
from pathlib import Path

import numpy as np
import pytest
import torch
from PIL import Image

sys.path.insert(0, str(Path(__file__).parent))

from aesfa.losses import PerceptualExtractor  # noqa: E402
from aesfa.model import AesFA, ModelConfig  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def micro_model():
    torch.manual_seed(0)
    return AesFA(ModelConfig.micro())


@pytest.fixture(scope="session")
def full_model():
    torch.manual_seed(0)
    return AesFA().eval()


@pytest.fixture(scope="session")
def surrogate():
    return PerceptualExtractor.surrogate(0)


def write_image(path, h, w, seed=0):
    rng = np.random.default_rng(seed)
    base = rng.integers(0, 256, size=(max(h // 8, 1), max(w // 8, 1), 3), dtype=np.uint8)
    Image.fromarray(base).resize((w, h), Image.BILINEAR).save(path)
    return path


@pytest.fixture
def image_dirs(tmp_path):
    cdir, sdir = tmp_path / "content", tmp_path / "style"
    cdir.mkdir()
    (sdir / "nested").mkdir(parents=True)
    for i in range(3):
        write_image(cdir / f"c{i}.png", 64, 80, seed=i)
    write_image(sdir / "s0.jpg", 72, 64, seed=10)
    write_image(sdir / "nested" / "s1.png", 64, 64, seed=11)
    return cdir, sdir
