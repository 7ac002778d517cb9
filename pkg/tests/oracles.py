"""Independent reference implementations used as test oracles.

Everything here is plain numpy with explicit loops; none of it calls the
package's operators or torch's convolution/sort/pool kernels.
"""
from __future__ import annotations

import numpy as np


def conv2d(x, w, b=None, stride=1, pad=None):
    """Direct zero-padded cross-correlation.  x: N,C,H,W  w: O,C,k,k."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    n, c, h, wd = x.shape
    o, ci, k, _ = w.shape
    assert ci == c
    pad = k // 2 if pad is None else pad
    xp = np.zeros((n, c, h + 2 * pad, wd + 2 * pad))
    xp[:, :, pad:pad + h, pad:pad + wd] = x
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wd + 2 * pad - k) // stride + 1
    out = np.zeros((n, o, ho, wo))
    for i in range(ho):
        for j in range(wo):
            patch = xp[:, :, i * stride:i * stride + k, j * stride:j * stride + k]
            out[:, :, i, j] = np.einsum("nckl,ockl->no", patch, w)
    if b is not None:
        out += np.asarray(b, dtype=np.float64)[None, :, None, None]
    return out


def block_mean(x):
    x = np.asarray(x, dtype=np.float64)
    n, c, h, w = x.shape
    out = np.zeros((n, c, h // 2, w // 2))
    for i in range(h // 2):
        for j in range(w // 2):
            out[:, :, i, j] = (x[:, :, 2 * i, 2 * j] + x[:, :, 2 * i + 1, 2 * j]
                               + x[:, :, 2 * i, 2 * j + 1] + x[:, :, 2 * i + 1, 2 * j + 1]) / 4.0
    return out


def nearest_up(x):
    x = np.asarray(x, dtype=np.float64)
    n, c, h, w = x.shape
    out = np.zeros((n, c, 2 * h, 2 * w))
    for di in range(2):
        for dj in range(2):
            out[:, :, di::2, dj::2] = x
    return out


def octconv(xh, xl, w_hh, w_hl, w_lh, w_ll, b_h=None, b_l=None, stride=1):
    """Octave convolution written out path by path."""
    yh = conv2d(xh, w_hh, stride=stride) + conv2d(nearest_up(xl), w_lh, stride=stride)
    yl = conv2d(xl, w_ll, stride=stride) + conv2d(block_mean(xh), w_hl, stride=stride)
    if b_h is not None:
        yh += np.asarray(b_h)[None, :, None, None]
    if b_l is not None:
        yl += np.asarray(b_l)[None, :, None, None]
    return yh, yl


def block_diagonal(kernel, groups):
    """Expand a grouped kernel ``C_out x C_in/g x k x k`` to a dense
    ``C_out x C_in x k x k`` kernel that is zero outside the diagonal blocks."""
    kernel = np.asarray(kernel, dtype=np.float64)
    c_out, per, k, _ = kernel.shape
    c_in = per * groups
    out_per = c_out // groups
    dense = np.zeros((c_out, c_in, k, k))
    for o in range(c_out):
        g = o // out_per
        dense[o, g * per:(g + 1) * per] = kernel[o]
    return dense


def grouped_stage(x, spatial, pointwise, bias, groups):
    """Predicted depthwise-separable stage per sample via dense block-diagonal convolutions."""
    outs = []
    for i in range(x.shape[0]):
        y = conv2d(x[i:i + 1], block_diagonal(spatial[i], groups))
        y = conv2d(y, block_diagonal(pointwise[i], groups), bias[i])
        outs.append(y)
    return np.concatenate(outs)


def efdm(x, y):
    """Sort-and-scatter with an explicit stable ranking of ``x``."""
    x = list(map(float, x))
    y_sorted = sorted(map(float, y))
    ranks = sorted(range(len(x)), key=lambda i: (x[i], i))
    out = [0.0] * len(x)
    for r, i in enumerate(ranks):
        out[i] = y_sorted[r]
    return np.array(out)


def efdm_distance(fx, fy):
    """||fx - EFDM(fx, fy)|| for one sample's C x H x W features."""
    fx = np.asarray(fx, dtype=np.float64)
    fy = np.asarray(fy, dtype=np.float64)
    total = 0.0
    for c in range(fx.shape[0]):
        a, b = fx[c].ravel(), fy[c].ravel()
        total += float(np.sum((a - efdm(a, b)) ** 2))
    return float(np.sqrt(total))


def gaussian_window(size=11, sigma=1.5):
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r ** 2) / (2 * sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def ssim(a, b, c1=0.01 ** 2, c2=0.03 ** 2):
    """Windowed SSIM on 2-D luma arrays, one window at a time."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    win = gaussian_window()
    k = win.shape[0]
    vals = []
    for i in range(a.shape[0] - k + 1):
        for j in range(a.shape[1] - k + 1):
            pa, pb = a[i:i + k, j:j + k], b[i:i + k, j:j + k]
            ma, mb = (win * pa).sum(), (win * pb).sum()
            va = (win * (pa - ma) ** 2).sum()
            vb = (win * (pb - mb) ** 2).sum()
            cov = (win * (pa - ma) * (pb - mb)).sum()
            vals.append(((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma ** 2 + mb ** 2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def luma(rgb):
    rgb = np.asarray(rgb, dtype=np.float64)
    return 0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2]


def central_differences(f, params, step=1e-4):
    """Numerical gradients of ``f()`` (a vector of T scalars) w.r.t. every
    element of the given torch parameters, perturbed in place and restored.

    Returns one ``T x numel`` array per parameter.
    """
    import torch

    grads = []
    with torch.no_grad():
        for p in params:
            flat = p.view(-1)
            g = None
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + step
                fp = np.asarray(f(), dtype=np.float64)
                flat[i] = orig - step
                fm = np.asarray(f(), dtype=np.float64)
                flat[i] = orig
                if g is None:
                    g = np.zeros((fp.size, flat.numel()))
                g[:, i] = (fp - fm) / (2 * step)
            grads.append(g)
    return grads
