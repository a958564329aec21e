"""
Joint optimization of the radiance field, appearance encoder, visibility
field and transient embeddings, with ablation modes.

Modes:

``nerf``
    plain photometric squared error, zero appearance vector
``nerf-a``
    encoder-conditioned color plus the view-consistent loss, no visibility
``nerf-t``
    occlusion loss with the visibility field, zero appearance vector
``ha-nerf``
    both
"""

import csv
import logging
import math
import time
from dataclasses import dataclass, fields, replace
from dataclasses import field as dataclass_field
from pathlib import Path

import numpy as np

from . import appearance as app_mod
from . import cameras
from . import diffcore as dc
from . import field as fld
from . import imageio
from . import occlusion as occ
from .checkpoint import Checkpoint, check_compatible, save_checkpoint
from .datagen import load_manifest
from .errors import ConfigError, InputError, TrainingDivergenceError
from .renderer import render_rays

log = logging.getLogger(__name__)

MODES = ("nerf", "nerf-a", "nerf-t", "ha-nerf")
LOG_COLUMNS = ("iteration", "total", "L_o", "L_v", "psnr_probe")


@dataclass
class TrainConfig:
    mode: str = "ha-nerf"
    lambda_v: float = 1e-3
    lambda_o: float = occ.DEFAULT_LAMBDA_O
    n_samples: int = 64
    batch_rays: int = 1024
    grid_size: int = 32
    iterations: int = 20000
    lr: float = 5e-4
    lr_final: float = 5e-5
    seed: int = 0
    dtype: str = "float32"
    max_grad_norm: float = None
    log_every: int = 100
    checkpoint_every: int = 0
    visibility_warmup: int = 1000
    field: fld.FieldConfig = dataclass_field(default_factory=fld.FieldConfig)
    encoder: app_mod.EncoderConfig = dataclass_field(default_factory=app_mod.EncoderConfig)
    visibility: occ.VisibilityConfig = dataclass_field(default_factory=occ.VisibilityConfig)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}, expected one of {MODES}")
        if not (self.lambda_v > 0 and self.lambda_o > 0):
            raise ConfigError("lambda_v and lambda_o must be positive")
        if self.batch_rays <= 0 or self.grid_size < 2 or self.n_samples < 2:
            raise ConfigError("batch size, grid size and sample count must be positive")
        if self.visibility_warmup < 0:
            raise ConfigError("visibility_warmup must be non-negative")
        if self.lr < 0 or self.lr_final < 0:
            raise ConfigError("learning rates must be non-negative")
        if self.field.appearance_dim != self.encoder.out_dim:
            raise ConfigError("field appearance_dim must equal encoder out_dim")

    @property
    def uses_encoder(self):
        return self.mode in ("nerf-a", "ha-nerf")

    @property
    def uses_visibility(self):
        return self.mode in ("nerf-t", "ha-nerf")

    def to_dict(self):
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name not in ("field", "encoder", "visibility")}
        d["field"] = self.field.to_dict()
        d["encoder"] = self.encoder.to_dict()
        d["visibility"] = self.visibility.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        sub = {
            "field": fld.FieldConfig(**d.pop("field", {})),
            "encoder": app_mod.EncoderConfig(
                **{k: (tuple(v) if k == "channels" else v) for k, v in d.pop("encoder", {}).items()}
            ),
            "visibility": occ.VisibilityConfig(**d.pop("visibility", {})),
        }
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        return cls(**d, **sub)

    def with_overrides(self, **kw):
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def trainable_names(config, params, iteration):
    """Names updated at ``iteration``; None means all of them.

    The visibility field and transient embeddings stay frozen for the first
    ``visibility_warmup`` steps. M then sits at its initial 0.5, so the field
    sees a uniformly weighted photometric loss until its residuals are small
    enough for the visibility optimum to be informative.
    """
    if not config.uses_visibility or iteration >= config.visibility_warmup:
        return None
    return {k for k in params.names() if not k.startswith(("visibility.", "transient."))}


def learning_rate(config, iteration):
    """Exponential decay from ``lr`` to ``lr_final`` over ``iterations``."""
    if config.iterations <= 0 or config.lr == 0:
        return config.lr
    frac = min(iteration / config.iterations, 1.0)
    return config.lr * (config.lr_final / config.lr) ** frac


def init_params(config, n_images):
    """Fresh parameters for ``config``; only the modules the mode uses are created."""
    dtype = np.dtype(config.dtype)
    seeds = np.random.SeedSequence(config.seed).spawn(3)
    params = dc.ParameterSet()
    fld.init_field(params, config.field, np.random.default_rng(seeds[0]), dtype)
    if config.uses_encoder:
        app_mod.init_encoder(params, config.encoder, np.random.default_rng(seeds[1]), dtype)
    if config.uses_visibility:
        occ.init_visibility(params, config.visibility, n_images, np.random.default_rng(seeds[2]), dtype)
    return params


def training_rng(config):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(config.seed).spawn(4)[3]))


# ---------------------------------------------------------------------------
# data
# ---------------------------------------------------------------------------


@dataclass
class TrainingData:
    intrinsics: cameras.CameraIntrinsics
    poses: list
    images: np.ndarray  # (N, H, W, 3)
    masks: np.ndarray  # (N, H, W) bool, ground-truth occluders
    origins: np.ndarray  # (N*H*W, 3), flattened image-major, row-major pixels
    dirs: np.ndarray
    near: np.ndarray
    far: np.ndarray
    pixels: np.ndarray  # (N*H*W, 2) pixel coordinates
    image_ids: np.ndarray
    colors: np.ndarray

    @property
    def n_images(self):
        return self.images.shape[0]

    @classmethod
    def from_arrays(cls, intr, poses, images, masks=None):
        images = np.asarray(images, dtype=np.float64)
        n, h, w = images.shape[:3]
        if (h, w) != (intr.height, intr.width):
            raise InputError("image size does not match intrinsics")
        rays = [cameras.image_rays(intr, pose) for pose in poses]
        all_rays = cameras.Rays.concatenate(rays)
        pix = np.tile(cameras.pixel_centers(w, h), (n, 1))
        if masks is None:
            masks = np.zeros((n, h, w), dtype=bool)
        return cls(
            intr,
            list(poses),
            images,
            np.asarray(masks, dtype=bool),
            all_rays.origins,
            all_rays.dirs,
            all_rays.near,
            all_rays.far,
            pix,
            np.repeat(np.arange(n), h * w),
            images.reshape(-1, 3),
        )

    @classmethod
    def from_manifest(cls, manifest):
        if isinstance(manifest, (str, Path)):
            manifest = load_manifest(manifest)
        frames = manifest.split("train")
        if not frames:
            raise InputError("training split is empty")
        images = np.stack([imageio.read_rgb(manifest.path(f.image)) for f in frames])
        masks = np.stack(
            [
                imageio.read_gray(manifest.path(f.mask)) > 0.5
                if f.mask
                else np.zeros(images.shape[1:3], dtype=bool)
                for f in frames
            ]
        )
        return cls.from_arrays(manifest.intrinsics, [f.pose for f in frames], images, masks)


@dataclass
class HallucinationView:
    image_slot: int  # row in Batch.appearance_images
    rays: cameras.Rays
    u: np.ndarray
    size: int


@dataclass
class Batch:
    rays: cameras.Rays
    colors: np.ndarray
    pixels_norm: np.ndarray
    image_ids: np.ndarray
    u: np.ndarray
    appearance_images: np.ndarray = None  # (U, H, W, 3) unique images to encode
    appearance_index: np.ndarray = None  # (B,) row into appearance_images
    hallucination: HallucinationView = None


def sample_batch(data, config, rng):
    """Draw one training batch; consumes ``rng`` in a fixed order."""
    idx = rng.integers(0, data.colors.shape[0], size=config.batch_rays)
    rays = cameras.Rays(data.origins[idx], data.dirs[idx], data.near[idx], data.far[idx])
    u = rng.uniform(size=(config.batch_rays, config.n_samples))
    ids = data.image_ids[idx]
    intr = data.intrinsics
    batch = Batch(
        rays,
        data.colors[idx],
        occ.normalize_pixels(data.pixels[idx], intr.width, intr.height),
        ids,
        u,
    )
    if config.uses_encoder:
        h_image = int(rng.integers(0, data.n_images))
        pose = cameras.random_view(data.poses, rng)
        grid_rays, _ = cameras.generate_grid_rays(intr, pose, config.grid_size, seed=rng)
        h_u = rng.uniform(size=(len(grid_rays), config.n_samples))
        unique, inverse = np.unique(np.append(ids, h_image), return_inverse=True)
        batch.appearance_images = data.images[unique]
        batch.appearance_index = inverse[:-1]
        batch.hallucination = HallucinationView(int(inverse[-1]), grid_rays, h_u, config.grid_size)
    return batch


# ---------------------------------------------------------------------------
# objective
# ---------------------------------------------------------------------------


def total_loss(batch, p, config):
    """Objective for one batch under ``config.mode``.

    Returns ``(scalar tensor, components)`` where components holds floats
    ``total``, ``L_o`` (batch-mean occlusion or photometric term), ``L_v``
    and ``mse`` (mean squared color error per channel).
    """
    dtype = np.dtype(config.dtype)
    fcfg = config.field
    if config.uses_encoder:
        table = app_mod.encode_appearance(p, config.encoder, batch.appearance_images)
        appearance = dc.gather(table, batch.appearance_index)
    else:
        appearance = np.zeros(fcfg.appearance_dim, dtype=dtype)
    rendered = render_rays(p, fcfg, batch.rays, appearance, config.n_samples, batch.u)
    observed = batch.colors.astype(dtype, copy=False)
    if config.uses_visibility:
        m = occ.visibility(p, config.visibility, batch.pixels_norm, batch.image_ids)
        per_ray = occ.occlusion_loss(m, observed, rendered, config.lambda_o)
    else:
        per_ray = dc.tsum(dc.square(dc.sub(observed, rendered)), axis=-1)
    l_o = dc.mean(per_ray)
    total = l_o
    l_v_value = 0.0
    if config.uses_encoder and batch.hallucination is not None:
        hv = batch.hallucination
        target = dc.getitem(table, slice(hv.image_slot, hv.image_slot + 1))
        grid = render_rays(p, fcfg, hv.rays, target, config.n_samples, hv.u)
        image = app_mod.grid_to_image(grid, hv.size)
        l_v = app_mod.view_consistent_loss(p, config.encoder, target, image)
        total = dc.add(total, dc.mul(l_v, config.lambda_v))
        l_v_value = float(l_v.data)
    mse = float(np.mean(np.square(observed - rendered.data)))
    comps = {"total": float(total.data), "L_o": float(l_o.data), "L_v": l_v_value, "mse": mse}
    return total, comps


def combine_losses(l_v_total, l_o_total, lambda_v):
    """``lambda_v * sum L_v + sum L_o`` on already-reduced terms."""
    return lambda_v * l_v_total + l_o_total


def psnr_from_mse(mse):
    return 99.0 if mse <= 0 else min(99.0, -10.0 * math.log10(mse))


# ---------------------------------------------------------------------------
# loop
# ---------------------------------------------------------------------------


def make_checkpoint(config, params, iteration, rng, n_images):
    return Checkpoint(
        config=config.to_dict(),
        params=params.copy(),
        iteration=iteration,
        rng_state=rng.bit_generator.state,
        n_images=n_images,
    )


def restore(ckpt, config=None, n_images=None):
    """Rebuild ``(config, params, rng)`` from a checkpoint, checking compatibility."""
    ck_config = TrainConfig.from_dict(ckpt.config)
    config = config or ck_config
    n_images = ckpt.n_images if n_images is None else n_images
    check_compatible(ckpt, init_params(config, n_images), mode=config.mode)
    params = ckpt.params.copy()
    rng = training_rng(config)
    if ckpt.rng_state is not None:
        rng.bit_generator.state = ckpt.rng_state
    return config, params, rng


def train(data, config, out_dir=None, resume=None, callback=None):
    """Run ``config.iterations`` optimization steps.

    Returns ``(checkpoint, log_rows)``. With ``out_dir`` a CSV log and
    periodic/final checkpoints are written there. ``resume`` continues from a
    :class:`Checkpoint` with its optimizer and RNG state.
    """
    if not isinstance(data, TrainingData):
        data = TrainingData.from_manifest(data)
    if resume is not None:
        config_r, params, rng = restore(resume, config, data.n_images)
        config = config or config_r
        start = resume.iteration
    else:
        params = init_params(config, data.n_images)
        rng = training_rng(config)
        start = 0
    out_dir = Path(out_dir) if out_dir is not None else None
    writer = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        log_path = out_dir / "metrics.csv"
        fh = open(log_path, "a" if resume is not None and log_path.exists() else "w", newline="")
        writer = csv.writer(fh)
        if fh.tell() == 0:
            writer.writerow(LOG_COLUMNS)
    rows = []
    last_good = make_checkpoint(config, params, start, rng, data.n_images)
    t0 = time.perf_counter()
    try:
        for it in range(start, config.iterations):
            batch = sample_batch(data, config, rng)
            try:
                _, grads, comps = dc.forward_backward(
                    lambda p: total_loss(batch, p, config),
                    params,
                    trainable=trainable_names(config, params, it),
                    has_aux=True,
                )
            except TrainingDivergenceError as exc:
                if out_dir is not None:
                    save_checkpoint(last_good, out_dir / "last_good.ckpt")
                raise TrainingDivergenceError(
                    f"training diverged at iteration {it}: {exc}", iteration=it, last_checkpoint=last_good
                ) from exc
            if config.max_grad_norm:
                grads, _ = dc.clip_by_global_norm(grads, config.max_grad_norm)
            dc.adam_step(params, grads, learning_rate(config, it))
            row = (it + 1, comps["total"], comps["L_o"], comps["L_v"], psnr_from_mse(comps["mse"]))
            rows.append(row)
            if writer is not None and ((it + 1) % max(config.log_every, 1) == 0 or it + 1 == config.iterations):
                writer.writerow(row)
            if config.log_every and (it + 1) % config.log_every == 0:
                log.info(
                    "iter %d total %.5f L_o %.5f L_v %.4f psnr %.2f (%.1fs)",
                    *row,
                    time.perf_counter() - t0,
                )
            if config.checkpoint_every and (it + 1) % config.checkpoint_every == 0:
                last_good = make_checkpoint(config, params, it + 1, rng, data.n_images)
                if out_dir is not None:
                    save_checkpoint(last_good, out_dir / "checkpoint.ckpt")
            if callback is not None:
                callback(it + 1, params, comps)
    finally:
        if writer is not None:
            fh.close()
    final = make_checkpoint(config, params, max(start, config.iterations), rng, data.n_images)
    if out_dir is not None:
        save_checkpoint(final, out_dir / "checkpoint.ckpt")
    return final, rows
