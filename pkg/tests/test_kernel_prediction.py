import pytest
import torch

from aesfa.encoders import AestheticDescriptor
from aesfa.errors import InvalidArgument
from aesfa.kernel_prediction import KernelPredictor, KernelPredictors, blend_kernels, predict_all, predict_kernels


def descriptor(n=1, d=256, seed=0):
    g = torch.Generator().manual_seed(seed)
    return AestheticDescriptor(torch.randn(n, d, 3, 3, generator=g), torch.randn(n, d, 3, 3, generator=g))


def test_default_layer1_shapes():
    preds = KernelPredictors([(128, 128), (64, 64), (32, 32)], groups=8)
    ks = predict_kernels(descriptor(), 1, "high", preds)
    assert ks.spatial.shape == (1, 128, 16, 3, 3)
    assert ks.pointwise.shape == (1, 128, 16, 1, 1)
    assert ks.bias.shape == (1, 128)
    assert ks.groups == 8


def test_predict_all_order_and_shapes():
    preds = KernelPredictors([(8, 4), (4, 4), (4, 2)], groups=2, descriptor_channels=8)
    sets = predict_all(descriptor(2, 8), preds)
    assert [s.channels for s in sets] == [8, 4, 4, 4, 4, 2]
    assert all(s.spatial.shape[0] == 2 for s in sets)


def test_high_and_low_use_their_own_descriptor():
    preds = KernelPredictors([(4, 4)], groups=2, descriptor_channels=8)
    w = descriptor(1, 8)
    base = preds(w)
    w2 = AestheticDescriptor(w.high, w.low + 1.0)
    moved = preds(w2)
    assert torch.equal(base[0].spatial, moved[0].spatial)
    assert not torch.equal(base[1].spatial, moved[1].spatial)


def test_predictor_rejects_non_divisible_groups():
    with pytest.raises(InvalidArgument):
        KernelPredictor(10, 4)


@pytest.mark.parametrize("layer, freq", [(0, "high"), (4, "high"), (1, "mid")])
def test_predict_rejects_bad_selector(layer, freq):
    preds = KernelPredictors([(4, 4), (4, 4), (4, 4)], groups=2, descriptor_channels=8)
    with pytest.raises(InvalidArgument):
        preds.predict(descriptor(1, 8), layer, freq)


def test_empty_branch_gives_empty_kernels():
    ks = KernelPredictor(0, 2, descriptor_channels=8)(torch.randn(1, 8, 3, 3))
    assert ks.channels == 0 and ks.bias.shape == (1, 0)


def test_blend_kernels_takes_branches_from_each_source():
    preds = KernelPredictors([(4, 4), (4, 4)], groups=2, descriptor_channels=8)
    a, b = preds(descriptor(1, 8, seed=1)), preds(descriptor(1, 8, seed=2))
    mixed = blend_kernels(a, b)
    assert mixed[0] is a[0] and mixed[1] is b[1] and mixed[2] is a[2] and mixed[3] is b[3]
