"""Image quality metrics, mask overlap and evaluation reports."""

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

from .errors import InputError

PSNR_CAP = 99.0
LUMA_WEIGHTS = (0.2126, 0.7152, 0.0722)
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InputError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b):
    """Peak signal-to-noise ratio in dB for images in [0, 1]; identical images give 99."""
    a, b = _pair(a, b)
    mse = float(np.mean(np.square(a - b)))
    if mse <= 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, -10.0 * math.log10(mse))


def luminance(image):
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 3 and image.shape[-1] == 3:
        return image @ np.asarray(LUMA_WEIGHTS)
    if image.ndim == 2:
        return image
    raise InputError(f"expected (H, W) or (H, W, 3) image, got shape {image.shape}")


def gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    g /= g.sum()
    return np.outer(g, g)


def ssim(a, b, data_range=1.0):
    """Mean structural similarity of the luminance channels over valid windows."""
    a, b = _pair(a, b)
    x, y = luminance(a), luminance(b)
    if min(x.shape) < SSIM_WINDOW:
        raise InputError(f"images of shape {x.shape[:2]} are smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    w = gaussian_window()

    def filt(img):
        return fftconvolve(img, w, mode="valid")

    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mx, my = filt(x), filt(y)
    sxx = filt(x * x) - mx * mx
    syy = filt(y * y) - my * my
    sxy = filt(x * y) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


def mask_iou(predicted, truth):
    """Intersection over union of two binary masks; two empty masks count as a perfect match."""
    p = np.asarray(predicted, dtype=bool)
    t = np.asarray(truth, dtype=bool)
    if p.shape != t.shape:
        raise InputError(f"mask shapes differ: {p.shape} vs {t.shape}")
    union = int(np.count_nonzero(p | t))
    if union == 0:
        return 1.0
    return np.count_nonzero(p & t) / union


@dataclass
class ImageScore:
    name: str
    psnr: float
    ssim: float
    psnr_clean: float = None
    ssim_clean: float = None


@dataclass
class EvalReport:
    """Per-image scores plus aggregates that are always recomputed from them."""

    mode: str
    images: list = field(default_factory=list)
    visibility_iou: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    notes: list = field(default_factory=lambda: ["LPIPS not computed"])

    def _column(self, key):
        vals = [getattr(s, key) for s in self.images if getattr(s, key) is not None]
        return np.asarray(vals, dtype=np.float64)

    def aggregates(self):
        out = {}
        for key in ("psnr", "ssim", "psnr_clean", "ssim_clean"):
            col = self._column(key)
            if col.size:
                out[f"mean_{key}"] = float(col.mean())
                out[f"median_{key}"] = float(np.median(col))
        if self.visibility_iou:
            ious = np.asarray(list(self.visibility_iou.values()), dtype=np.float64)
            out["mean_visibility_iou"] = float(ious.mean())
            out["median_visibility_iou"] = float(np.median(ious))
        return out

    def to_dict(self):
        return {
            "mode": self.mode,
            "images": [asdict(s) for s in self.images],
            "visibility_iou": {str(k): float(v) for k, v in self.visibility_iou.items()},
            "aggregates": self.aggregates(),
            "config": self.config,
            "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            mode=d["mode"],
            images=[ImageScore(**s) for s in d["images"]],
            visibility_iou=dict(d.get("visibility_iou", {})),
            config=d.get("config", {}),
            notes=list(d.get("notes", [])),
        )

    def write_json(self, path):
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path

    def write_csv(self, path):
        """One row per report, laid out like a perturbation-vs-method table."""
        path = Path(path)
        agg = self.aggregates()
        cols = ["mode", "mean_psnr", "mean_ssim", "mean_psnr_clean", "mean_ssim_clean", "median_visibility_iou"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            w.writerow([self.mode] + [agg.get(c, "") for c in cols[1:]])
        return path
