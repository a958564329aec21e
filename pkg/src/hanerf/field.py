"""
Static radiance field: positional encoding, density trunk, appearance-conditioned color head.

The density branch only ever sees encoded positions, so sigma and the
feature vector cannot depend on view direction or appearance.
"""

from dataclasses import asdict, dataclass

import numpy as np

from . import diffcore as dc
from .cameras import SCENE_RADIUS


@dataclass(frozen=True)
class FieldConfig:
    depth: int = 8
    width: int = 256
    skip_layer: int = 5  # trunk layer whose input is [hidden, gamma_x]
    color_width: int = 128
    appearance_dim: int = 48
    pos_freqs: int = 10
    dir_freqs: int = 4
    include_raw: bool = True
    scene_bound: float = SCENE_RADIUS

    @property
    def pos_dim(self):
        return encoded_dim(3, self.pos_freqs, self.include_raw)

    @property
    def dir_dim(self):
        return encoded_dim(3, self.dir_freqs, self.include_raw)

    def to_dict(self):
        return asdict(self)


def encoded_dim(k, n_freqs, include_raw):
    return k * (2 * n_freqs + int(include_raw))


def encode(values, n_freqs, include_raw=True):
    """Sinusoidal lift ``[p, sin(2^0 pi p), cos(2^0 pi p), ..., cos(2^(L-1) pi p)]``.

    ``values`` has shape (N, k); each band contributes a sin block and a cos
    block of width k. Higher bands come from double-angle recurrences in
    float64, which stay within ~1e-13 of the direct evaluation for L <= 16.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[None, :]
    n, k = values.shape
    out = np.empty((n, k * (2 * n_freqs + int(include_raw))))
    col = 0
    if include_raw:
        out[:, :k] = values
        col = k
    if n_freqs:
        s = np.sin(np.pi * values)
        c = np.cos(np.pi * values)
        for j in range(n_freqs):
            if j:
                s, c = 2.0 * s * c, (c - s) * (c + s)
            out[:, col : col + k] = s
            out[:, col + k : col + 2 * k] = c
            col += 2 * k
    return out


def _he_uniform(rng, fan_in, fan_out, dtype):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype)


def _glorot_uniform(rng, fan_in, fan_out, dtype):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype)


def init_field(params, cfg, rng, dtype=np.float32, prefix="field"):
    """Add the field's parameters to a :class:`~hanerf.diffcore.ParameterSet`."""
    fan_in = cfg.pos_dim
    for i in range(cfg.depth):
        if i == cfg.skip_layer and i > 0:
            fan_in += cfg.pos_dim
        params.add(f"{prefix}.trunk.{i}.w", _he_uniform(rng, fan_in, cfg.width, dtype))
        params.add(f"{prefix}.trunk.{i}.b", np.zeros(cfg.width, dtype))
        fan_in = cfg.width
    params.add(f"{prefix}.sigma.w", _glorot_uniform(rng, cfg.width, 1, dtype))
    params.add(f"{prefix}.sigma.b", np.zeros(1, dtype))
    params.add(f"{prefix}.feature.w", _glorot_uniform(rng, cfg.width, cfg.width, dtype))
    params.add(f"{prefix}.feature.b", np.zeros(cfg.width, dtype))
    head_in = cfg.dir_dim + cfg.width + cfg.appearance_dim
    params.add(f"{prefix}.color.hidden.w", _he_uniform(rng, head_in, cfg.color_width, dtype))
    params.add(f"{prefix}.color.hidden.b", np.zeros(cfg.color_width, dtype))
    params.add(f"{prefix}.color.out.w", _glorot_uniform(rng, cfg.color_width, 3, dtype))
    params.add(f"{prefix}.color.out.b", np.zeros(3, dtype))
    return params


def normalize_points(points, cfg):
    return np.asarray(points) / cfg.scene_bound


def density(p, cfg, gamma_x, prefix="field"):
    """Trunk pass on encoded positions (M, pos_dim) -> (sigma (M,), feature (M, width))."""
    p = dc.as_tensors(p)
    gx = dc.as_tensor(gamma_x, dtype=p[f"{prefix}.trunk.0.w"].dtype)
    h = gx
    for i in range(cfg.depth):
        if i == cfg.skip_layer and i > 0:
            h = dc.concat([h, gx], axis=-1)
        h = dc.relu(dc.linear(h, p[f"{prefix}.trunk.{i}.w"], p[f"{prefix}.trunk.{i}.b"]))
    raw_sigma = dc.linear(h, p[f"{prefix}.sigma.w"], p[f"{prefix}.sigma.b"])
    sigma = dc.softplus(dc.reshape(raw_sigma, (raw_sigma.shape[0],)))
    z = dc.linear(h, p[f"{prefix}.feature.w"], p[f"{prefix}.feature.b"])
    return sigma, z


def color(p, cfg, gamma_d, z, appearance, samples_per_ray=1, prefix="field"):
    """Appearance-conditioned RGB in (0,1) for every row of ``z``.

    ``gamma_d`` and ``appearance`` hold one row per ray; ``z`` holds
    ``samples_per_ray`` consecutive rows per ray. The hidden layer acts on
    the concatenation ``[gamma_d, z, appearance]``; the per-ray part of that
    product is computed once per ray and repeated.
    """
    p = dc.as_tensors(p)
    w = p[f"{prefix}.color.hidden.w"]
    nd, nz = cfg.dir_dim, cfg.width
    gd = dc.as_tensor(gamma_d, dtype=w.dtype)
    app = dc.as_tensor(appearance, dtype=w.dtype)
    if app.ndim == 1:
        app = dc.reshape(app, (1, app.shape[0]))
    if app.shape[0] == 1 and gd.shape[0] > 1:
        app = dc.repeat_rows(app, gd.shape[0])
    per_ray = dc.add(dc.matmul(gd, w[:nd]), dc.matmul(app, w[nd + nz :]))
    if samples_per_ray > 1:
        per_ray = dc.repeat_rows(per_ray, samples_per_ray)
    h = dc.relu(dc.linear(z, w[nd : nd + nz], p[f"{prefix}.color.hidden.b"]) + per_ray)
    return dc.sigmoid(dc.linear(h, p[f"{prefix}.color.out.w"], p[f"{prefix}.color.out.b"]))


def query(p, cfg, points, dirs, appearance, prefix="field"):
    """Evaluate the field at (R, K, 3) sample points along R rays.

    Returns ``(sigma (R,K), rgb (R,K,3))`` tensors.
    """
    p = dc.as_tensors(p)
    n_rays, n_samples = points.shape[:2]
    gx = encode(normalize_points(points.reshape(-1, 3), cfg), cfg.pos_freqs, cfg.include_raw)
    gd = encode(dirs, cfg.dir_freqs, cfg.include_raw)
    dtype = p[f"{prefix}.trunk.0.w"].dtype
    sigma, z = density(p, cfg, gx.astype(dtype, copy=False), prefix)
    rgb = color(p, cfg, gd.astype(dtype, copy=False), z, appearance, n_samples, prefix)
    return dc.reshape(sigma, (n_rays, n_samples)), dc.reshape(rgb, (n_rays, n_samples, 3))
