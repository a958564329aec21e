"""Image-dependent 2D visibility field and the occlusion loss."""

from dataclasses import asdict, dataclass

import numpy as np

from . import diffcore as dc
from .errors import InputError
from .field import encode, encoded_dim

DEFAULT_LAMBDA_O = 6e-3


@dataclass(frozen=True)
class VisibilityConfig:
    depth: int = 5
    width: int = 256
    embed_dim: int = 128
    pix_freqs: int = 10
    include_raw: bool = True
    embed_std: float = 0.01

    @property
    def pix_dim(self):
        return encoded_dim(2, self.pix_freqs, self.include_raw)

    def to_dict(self):
        return asdict(self)


def init_visibility(params, cfg, n_images, rng, dtype=np.float32, prefix="visibility"):
    fan_in = cfg.pix_dim + cfg.embed_dim
    for i in range(cfg.depth):
        bound = np.sqrt(6.0 / fan_in)
        params.add(f"{prefix}.{i}.w", rng.uniform(-bound, bound, size=(fan_in, cfg.width)).astype(dtype))
        params.add(f"{prefix}.{i}.b", np.zeros(cfg.width, dtype))
        fan_in = cfg.width
    # zero output layer: M starts at exactly 0.5 for every pixel and image
    params.add(f"{prefix}.out.w", np.zeros((fan_in, 1), dtype))
    params.add(f"{prefix}.out.b", np.zeros(1, dtype))
    emb = rng.normal(0.0, cfg.embed_std, size=(n_images, cfg.embed_dim))
    params.add("transient.embeddings", emb.astype(dtype))
    return params


def normalize_pixels(pixels, width, height):
    pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    return pixels / np.array([width, height], dtype=np.float64)


def visibility(p, cfg, pixels_norm, image_ids, prefix="visibility"):
    """Visible probability M in (0,1) for pixels in [0,1]^2 of the given training images."""
    p = dc.as_tensors(p)
    table = p["transient.embeddings"]
    ids = np.asarray(image_ids, dtype=np.int64).reshape(-1)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise InputError(f"image id outside the {table.shape[0]} training embeddings")
    dtype = table.dtype
    gp = encode(np.asarray(pixels_norm, dtype=np.float64), cfg.pix_freqs, cfg.include_raw).astype(dtype)
    if ids.size == 1 and gp.shape[0] > 1:
        ids = np.repeat(ids, gp.shape[0])
    h = dc.concat([dc.Tensor(gp), dc.gather(table, ids)], axis=-1)
    for i in range(cfg.depth):
        h = dc.relu(dc.linear(h, p[f"{prefix}.{i}.w"], p[f"{prefix}.{i}.b"]))
    out = dc.linear(h, p[f"{prefix}.out.w"], p[f"{prefix}.out.b"])
    return dc.sigmoid(dc.reshape(out, (out.shape[0],)))


def occlusion_loss(m, observed, rendered, lambda_o=DEFAULT_LAMBDA_O):
    """Per-ray ``M * ||C - C_hat||^2 + lambda_o * (1 - M)^2``.

    Works on tensors (differentiable in both M and the rendered color) and on
    plain arrays or floats.
    """
    if isinstance(m, dc.Tensor) or isinstance(rendered, dc.Tensor):
        ref = m if isinstance(m, dc.Tensor) else rendered
        m = dc.as_tensor(m, dtype=ref.dtype)
        rendered = dc.as_tensor(rendered, dtype=ref.dtype)
        resid = dc.tsum(dc.square(dc.sub(observed, rendered)), axis=-1)
        return dc.add(dc.mul(m, resid), dc.mul(dc.square(dc.sub(1.0, m)), lambda_o))
    resid = np.sum(np.square(np.asarray(observed, np.float64) - np.asarray(rendered, np.float64)), axis=-1)
    m = np.asarray(m, dtype=np.float64)
    return m * resid + lambda_o * (1.0 - m) ** 2


def optimal_visibility(residual_sq, lambda_o=DEFAULT_LAMBDA_O):
    """Minimizer over M in [0,1] of the occlusion loss for a fixed squared residual."""
    return np.clip(1.0 - np.asarray(residual_sq, dtype=np.float64) / (2.0 * lambda_o), 0.0, 1.0)


def visibility_map(p, cfg, image_id, height, width, chunk=8192, prefix="visibility"):
    """Evaluate M over the full pixel lattice of one training image, shape (H, W)."""
    v, u = np.meshgrid(np.arange(height) + 0.5, np.arange(width) + 0.5, indexing="ij")
    pix = normalize_pixels(np.stack([u.reshape(-1), v.reshape(-1)], axis=-1), width, height)
    out = np.empty(pix.shape[0])
    for start in range(0, pix.shape[0], chunk):
        sl = slice(start, start + chunk)
        out[sl] = visibility(p, cfg, pix[sl], [image_id], prefix).data
    return out.reshape(height, width)


def fit_visibility(residual_sq, cfg=None, lambda_o=DEFAULT_LAMBDA_O, iterations=1000, lr=1e-3, seed=0, dtype=np.float64):
    """Train only the visibility field and embeddings against frozen residuals.

    ``residual_sq`` is an (N, H, W) stack of squared color errors, one map
    per image. Every step uses every pixel. Returns ``(params, losses)``.
    """
    cfg = cfg or VisibilityConfig()
    r2 = np.asarray(residual_sq, dtype=np.float64)
    if r2.ndim == 2:
        r2 = r2[None]
    n, h, w = r2.shape
    params = init_visibility(dc.ParameterSet(), cfg, n, np.random.default_rng(seed), dtype=dtype)
    v, u = np.meshgrid(np.arange(h) + 0.5, np.arange(w) + 0.5, indexing="ij")
    pix = np.tile(normalize_pixels(np.stack([u.reshape(-1), v.reshape(-1)], axis=-1), w, h), (n, 1))
    ids = np.repeat(np.arange(n), h * w)
    target = r2.reshape(-1).astype(dtype)

    def loss(p):
        m = visibility(p, cfg, pix, ids)
        per_pixel = dc.add(dc.mul(m, target), dc.mul(dc.square(dc.sub(1.0, m)), lambda_o))
        return dc.mean(per_pixel)

    losses = []
    for _ in range(iterations):
        value, grads = dc.forward_backward(loss, params)
        dc.adam_step(params, grads, lr)
        losses.append(value)
    return params, losses
