"""Rendering held-out views from a trained checkpoint and scoring them."""

from pathlib import Path

import numpy as np

from . import appearance as app_mod
from . import imageio
from . import occlusion as occ
from .checkpoint import load_checkpoint
from .datagen import load_manifest
from .metrics import EvalReport, ImageScore, mask_iou, psnr, ssim
from .renderer import render_image
from .trainer import restore


class Model:
    """A trained parameter set with the config that produced it."""

    def __init__(self, config, params, n_images=0):
        self.config = config
        self.params = params
        self.n_images = n_images

    @classmethod
    def load(cls, path):
        ckpt = load_checkpoint(path)
        config, params, _ = restore(ckpt)
        return cls(config, params, ckpt.n_images)

    @property
    def appearance_dim(self):
        return self.config.field.appearance_dim

    def appearance(self, image=None):
        """Appearance vector for ``image``; modes without an encoder always get zeros."""
        dtype = np.dtype(self.config.dtype)
        if image is None or not self.config.uses_encoder:
            return np.zeros(self.appearance_dim, dtype=dtype)
        return app_mod.encode_appearance(self.params, self.config.encoder, image).data[0]

    def render(self, intrinsics, pose, appearance, n_samples=None):
        n = n_samples or self.config.n_samples
        return render_image(self.params, self.config.field, intrinsics, pose, appearance, n_samples=n)

    def visibility_map(self, image_id, height, width):
        if not self.config.uses_visibility:
            raise ValueError(f"mode {self.config.mode!r} has no visibility field")
        return occ.visibility_map(self.params, self.config.visibility, image_id, height, width)


def evaluate(model, manifest, out_dir=None, n_samples=None):
    """Score every test view of ``manifest``.

    Each test view is rendered twice: conditioned on its perturbed image
    (compared against that image) and on its clean image (compared against
    the clean reference). Encoder-free modes render one zero-appearance
    image for both comparisons. Visibility IoU uses the threshold M < 0.5
    against each training image's occluder mask.
    """
    if not hasattr(manifest, "frames"):
        manifest = load_manifest(manifest)
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    intr = manifest.intrinsics
    report = EvalReport(mode=model.config.mode, config=model.config.to_dict())
    for frame in manifest.split("test"):
        perturbed = imageio.read_rgb(manifest.path(frame.image))
        clean = imageio.read_rgb(manifest.path(frame.clean))
        render = model.render(intr, frame.pose, model.appearance(perturbed), n_samples)
        if model.config.uses_encoder:
            render_clean = model.render(intr, frame.pose, model.appearance(clean), n_samples)
        else:
            render_clean = render
        report.images.append(
            ImageScore(
                name=Path(frame.image).stem,
                psnr=psnr(render, perturbed),
                ssim=ssim(render, perturbed),
                psnr_clean=psnr(render_clean, clean),
                ssim_clean=ssim(render_clean, clean),
            )
        )
        if out_dir is not None:
            imageio.write_rgb(out_dir / f"{Path(frame.image).stem}_render.png", render)
    if model.config.uses_visibility:
        for idx, frame in enumerate(manifest.split("train")):
            if frame.mask is None:
                continue
            truth = imageio.read_gray(manifest.path(frame.mask)) > 0.5
            vis = model.visibility_map(idx, intr.height, intr.width)
            report.visibility_iou[frame.id] = mask_iou(vis < 0.5, truth)
    if out_dir is not None:
        report.write_json(out_dir / "report.json")
        report.write_csv(out_dir / "report.csv")
    return report

