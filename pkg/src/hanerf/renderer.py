"""Stratified ray sampling and quadrature compositing of radiance fields."""

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from . import field as fld
from .cameras import image_rays
from .errors import InputError, TrainingDivergenceError

FAR_DELTA = 1e10


@dataclass
class RaySamples:
    t: np.ndarray  # (R, K)
    deltas: np.ndarray  # (R, K), last column FAR_DELTA


@dataclass
class CompositeResult:
    rgb: np.ndarray
    weights: np.ndarray
    final_transmittance: np.ndarray


def stratified_samples(rays, n_samples, rng=None):
    """One sample per equal-length bin of ``[near, far]``.

    ``rng`` is a numpy Generator, a pre-drawn (R, K) array of in-bin offsets
    in [0, 1), or None, which puts every sample at its bin center.
    """
    if n_samples < 2:
        raise InputError("need at least two samples per ray")
    near = np.asarray(rays.near, dtype=np.float64).reshape(-1, 1)
    far = np.asarray(rays.far, dtype=np.float64).reshape(-1, 1)
    if rng is None:
        u = np.full((near.shape[0], n_samples), 0.5)
    elif isinstance(rng, np.ndarray):
        u = rng.reshape(near.shape[0], n_samples)
    else:
        u = rng.uniform(size=(near.shape[0], n_samples))
    bins = np.arange(n_samples, dtype=np.float64)[None, :]
    t = near + (bins + u) * (far - near) / n_samples
    deltas = np.empty_like(t)
    deltas[:, :-1] = np.diff(t, axis=1)
    deltas[:, -1] = FAR_DELTA
    return RaySamples(t, deltas)


def composite(sigmas, colors, deltas):
    """Composite plain arrays: sigmas (K,) or (R,K), colors (...,K,3), deltas like sigmas."""
    sigmas = np.asarray(sigmas, dtype=np.float64)
    single = sigmas.ndim == 1
    s = np.atleast_2d(sigmas)
    c = np.asarray(colors, dtype=np.float64).reshape(s.shape + (3,))
    d = np.asarray(deltas, dtype=np.float64).reshape(s.shape)
    rgb, weights, t_final = dc.composite(dc.Tensor(s), dc.Tensor(c), d)
    if single:
        return CompositeResult(rgb.data[0], weights[0], t_final[0])
    return CompositeResult(rgb.data, weights, t_final)


def render_rays(p, cfg, rays, appearance, n_samples=64, rng=None, return_weights=False):
    """Differentiable colors for a batch of rays, shape (R, 3).

    ``appearance`` is a (48,) / (1,48) vector shared by all rays or an
    (R,48) per-ray tensor.
    """
    p = dc.as_tensors(p)
    samples = stratified_samples(rays, n_samples, rng)
    points = rays.origins[:, None, :] + samples.t[:, :, None] * rays.dirs[:, None, :]
    sigma, rgb = fld.query(p, cfg, points, rays.dirs, appearance)
    out, weights, t_final = dc.composite(sigma, rgb, samples.deltas.astype(sigma.dtype))
    if not np.all(np.isfinite(out.data)):
        raise TrainingDivergenceError("non-finite rendered color")
    if return_weights:
        return out, weights, t_final
    return out


def render_density(p, cfg, rays, n_samples=64, rng=None):
    """Densities (R, K) along the rays; no appearance input exists on this path."""
    p = dc.as_tensors(p)
    samples = stratified_samples(rays, n_samples, rng)
    points = rays.origins[:, None, :] + samples.t[:, :, None] * rays.dirs[:, None, :]
    gx = fld.encode(fld.normalize_points(points.reshape(-1, 3), cfg), cfg.pos_freqs, cfg.include_raw)
    sigma, _ = fld.density(p, cfg, gx)
    return sigma.data.reshape(points.shape[:2])


def render_image(p, cfg, intr, pose, appearance, n_samples=64, rng=None, chunk=4096):
    """Render an (H, W, 3) image by tiling the pixel grid through :func:`render_rays`."""
    p = dc.as_tensors(p)
    rays = image_rays(intr, pose)
    app = appearance.data if isinstance(appearance, dc.Tensor) else np.asarray(appearance)
    out = np.empty((len(rays), 3), dtype=np.float64)
    for start in range(0, len(rays), chunk):
        sl = slice(start, start + chunk)
        out[sl] = render_rays(p, cfg, rays[sl], app, n_samples, rng).data
    return out.reshape(intr.height, intr.width, 3)
