"""Convolutional appearance encoder and the view-consistent latent loss."""

from dataclasses import asdict, dataclass

import numpy as np

from . import diffcore as dc
from .errors import InputError

MIN_SIZE = 32


@dataclass(frozen=True)
class EncoderConfig:
    channels: tuple = (32, 64, 128, 256, 256)
    kernel: int = 3
    stride: int = 2
    out_dim: int = 48

    def to_dict(self):
        d = asdict(self)
        d["channels"] = list(self.channels)
        return d


def init_encoder(params, cfg, rng, dtype=np.float32, prefix="encoder"):
    c_in = 3
    for i, c_out in enumerate(cfg.channels):
        fan_in = c_in * cfg.kernel * cfg.kernel
        bound = np.sqrt(6.0 / fan_in)
        w = rng.uniform(-bound, bound, size=(c_out, c_in, cfg.kernel, cfg.kernel))
        params.add(f"{prefix}.conv.{i}.w", w.astype(dtype))
        params.add(f"{prefix}.conv.{i}.b", np.zeros(c_out, dtype))
        c_in = c_out
    bound = np.sqrt(6.0 / (c_in + cfg.out_dim))
    params.add(f"{prefix}.fc.w", rng.uniform(-bound, bound, size=(c_in, cfg.out_dim)).astype(dtype))
    params.add(f"{prefix}.fc.b", np.zeros(cfg.out_dim, dtype))
    return params


def _as_nchw(images, dtype):
    if isinstance(images, dc.Tensor):
        x = images
        if x.ndim == 3:
            x = dc.reshape(x, (1,) + x.shape)
        return dc.transpose(x, (0, 3, 1, 2))
    arr = np.asarray(images, dtype=dtype)
    if arr.ndim == 3:
        arr = arr[None]
    return dc.Tensor(np.ascontiguousarray(arr.transpose(0, 3, 1, 2)))


def encode_appearance(p, cfg, images, prefix="encoder"):
    """Map (H,W,3) or (N,H,W,3) images in [0,1] to (N, out_dim) appearance vectors."""
    p = dc.as_tensors(p)
    shape = images.shape
    h, w = shape[-3], shape[-2]
    if h < MIN_SIZE or w < MIN_SIZE:
        raise InputError(f"appearance encoder needs images of at least {MIN_SIZE}x{MIN_SIZE}, got {h}x{w}")
    x = _as_nchw(images, p[f"{prefix}.fc.w"].dtype) - 0.5
    pad = cfg.kernel // 2
    for i in range(len(cfg.channels)):
        x = dc.conv2d(x, p[f"{prefix}.conv.{i}.w"], p[f"{prefix}.conv.{i}.b"], stride=cfg.stride, padding=pad)
        x = dc.relu(x)
    return dc.linear(dc.global_avg_pool(x), p[f"{prefix}.fc.w"], p[f"{prefix}.fc.b"])


def l1_distance(a, b):
    """Sum of absolute differences, as a tensor when either side is one."""
    if isinstance(a, dc.Tensor) or isinstance(b, dc.Tensor):
        return dc.tsum(dc.tabs(dc.sub(a, b)))
    return float(np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)).sum())


def grid_to_image(colors, size):
    """Assemble row-major (size*size, 3) grid colors into a (size, size, 3) image."""
    if isinstance(colors, dc.Tensor):
        return dc.reshape(colors, (size, size, 3))
    return np.asarray(colors).reshape(size, size, 3)


def view_consistent_loss(p, cfg, appearance, grid_image, prefix="encoder"):
    """``sum |E(grid_image) - appearance|`` over the appearance components."""
    p = dc.as_tensors(p)
    reencoded = encode_appearance(p, cfg, grid_image, prefix)
    target = appearance
    if isinstance(target, dc.Tensor) and target.ndim == 1:
        target = dc.reshape(target, (1, target.shape[0]))
    elif not isinstance(target, dc.Tensor):
        target = np.asarray(target).reshape(1, -1)
    return l1_distance(reencoded, target)


def interpolate_appearance(a, b, t):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if t == 0:
        return a.copy()
    if t == 1:
        return b.copy()
    return (1.0 - t) * a + t * b
