"""
Synthetic in-the-wild datasets.

Ground truth comes from an analytic sphere tracer that shares no code with
the neural renderer. Training views get a per-image affine color change and
solid occluders; test views are stored clean plus a color-perturbed variant.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels, imageio
from .cameras import CameraIntrinsics, CameraPose, image_rays, look_at
from .errors import GenerationError, InputError

log = logging.getLogger(__name__)

MANIFEST_VERSION = 1
COVERAGE_TOLERANCE = 0.02


@dataclass
class Sphere:
    center: tuple
    radius: float
    albedo: tuple


@dataclass
class SyntheticScene:
    spheres: list
    background: tuple = (1.0, 1.0, 1.0)
    shading: bool = False
    light_dir: tuple = (0.3, 0.4, 0.866)

    def __post_init__(self):
        for s in self.spheres:
            c = np.asarray(s.center, dtype=np.float64)
            if s.radius <= 0:
                raise InputError("sphere radius must be positive")
            if np.any(c - s.radius < -1.0 - 1e-9) or np.any(c + s.radius > 1.0 + 1e-9):
                raise InputError("sphere leaves the [-1, 1]^3 scene cube")

    def arrays(self):
        centers = np.array([s.center for s in self.spheres], dtype=np.float64).reshape(-1, 3)
        radii = np.array([s.radius for s in self.spheres], dtype=np.float64)
        albedo = np.array([s.albedo for s in self.spheres], dtype=np.float64).reshape(-1, 3)
        return centers, radii, albedo

    def to_dict(self):
        return {
            "spheres": [
                {"center": list(map(float, s.center)), "radius": float(s.radius), "albedo": list(map(float, s.albedo))}
                for s in self.spheres
            ],
            "background": list(map(float, self.background)),
            "shading": self.shading,
        }

    @classmethod
    def from_dict(cls, d):
        spheres = [Sphere(tuple(s["center"]), s["radius"], tuple(s["albedo"])) for s in d["spheres"]]
        return cls(spheres, tuple(d["background"]), d.get("shading", False))


def random_scene(seed, n_spheres=7):
    """A handful of saturated spheres spread through the scene cube."""
    rng = np.random.default_rng(seed)
    spheres = []
    for _ in range(n_spheres):
        r = rng.uniform(0.3, 0.55)
        center = rng.uniform(-1.0 + r, 1.0 - r, size=3)
        hue = rng.uniform(0, 1)
        albedo = _hue_to_rgb(hue) * rng.uniform(0.6, 1.0) + rng.uniform(0.0, 0.2)
        spheres.append(Sphere(tuple(center), float(r), tuple(np.clip(albedo, 0.0, 1.0))))
    background = tuple(np.full(3, rng.uniform(0.75, 0.95)))
    return SyntheticScene(spheres, background)


def _hue_to_rgb(h):
    k = (np.array([5.0, 3.0, 1.0]) + h * 6.0) % 6.0
    return 1.0 - np.clip(np.minimum(k, 4.0 - k), 0.0, 1.0)


def render_ground_truth(scene, intr, pose):
    """Closed-form nearest-hit render of ``scene``, shape (H, W, 3)."""
    rays = image_rays(intr, pose)
    centers, radii, albedo = scene.arrays()
    rgb, hit, depth = _kernels.trace_spheres(
        rays.origins, rays.dirs, centers, radii, albedo, np.asarray(scene.background)
    )
    if scene.shading:
        hit_mask = hit >= 0
        pts = rays.origins[hit_mask] + depth[hit_mask, None] * rays.dirs[hit_mask]
        normals = (pts - centers[hit[hit_mask]]) / radii[hit[hit_mask], None]
        light = np.asarray(scene.light_dir, dtype=np.float64)
        light = light / np.linalg.norm(light)
        lambert = np.clip(normals @ light, 0.0, 1.0)
        rgb[hit_mask] *= (0.35 + 0.65 * lambert)[:, None]
    return rgb.reshape(intr.height, intr.width, 3)


# ---------------------------------------------------------------------------
# perturbations
# ---------------------------------------------------------------------------


@dataclass
class PerturbationSpec:
    color: bool = True
    occlusion: bool = True
    gain_range: tuple = (0.6, 1.4)
    bias_range: tuple = (-0.15, 0.15)
    coverage_range: tuple = (0.10, 0.30)
    coverage: float = None  # fixed coverage target, overrides the range
    max_shapes: int = 3

    def to_dict(self):
        return {
            "color": self.color,
            "occlusion": self.occlusion,
            "gain_range": list(self.gain_range),
            "bias_range": list(self.bias_range),
            "coverage_range": list(self.coverage_range),
            "coverage": self.coverage,
            "max_shapes": self.max_shapes,
        }


def apply_color_perturbation(image, gain, bias):
    """``clamp(gain * c + bias, 0, 1)`` per channel."""
    image = np.asarray(image, dtype=np.float64)
    return np.clip(image * np.asarray(gain, dtype=np.float64) + np.asarray(bias, dtype=np.float64), 0.0, 1.0)


def _shape_mask(kind, center, half, scale, height, width):
    v, u = np.mgrid[0:height, 0:width] + 0.5
    a = max(half[0] * scale, 1e-9)
    b = max(half[1] * scale, 1e-9)
    du = (u - center[0]) / a
    dv = (v - center[1]) / b
    if kind == "rect":
        return (np.abs(du) <= 1.0) & (np.abs(dv) <= 1.0)
    return du * du + dv * dv <= 1.0


def _union(shapes, scale, height, width):
    mask = np.zeros((height, width), dtype=bool)
    for kind, center, half, _ in shapes:
        mask |= _shape_mask(kind, center, half, scale, height, width)
    return mask


def composite_occluder(image, coverage, seed, max_shapes=3, attempts=100):
    """Paint 1..max_shapes solid rectangles/ellipses covering ``coverage`` of the pixels.

    Returns ``(image, mask)``; the achieved coverage is within 0.02 of the
    target. A zero target leaves the image untouched.
    """
    image = np.asarray(image, dtype=np.float64)
    height, width = image.shape[:2]
    if coverage <= 0:
        return image.copy(), np.zeros((height, width), dtype=bool)
    if coverage >= 1:
        raise InputError("occluder coverage must be below 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    total = height * width
    for _ in range(attempts):
        n = int(rng.integers(1, max_shapes + 1))
        shapes = []
        for _ in range(n):
            kind = "rect" if rng.uniform() < 0.5 else "ellipse"
            center = (rng.uniform(0, width), rng.uniform(0, height))
            aspect = rng.uniform(0.5, 2.0)
            half = (np.sqrt(aspect), 1.0 / np.sqrt(aspect))
            color = rng.uniform(0.0, 1.0, size=3)
            shapes.append((kind, center, half, color))
        lo, hi = 0.0, 2.0 * max(height, width)
        if _union(shapes, hi, height, width).sum() / total < coverage:
            continue
        mask = None
        for _ in range(40):
            mid = 0.5 * (lo + hi)
            m = _union(shapes, mid, height, width)
            frac = m.sum() / total
            if abs(frac - coverage) <= COVERAGE_TOLERANCE:
                mask = m
                scale = mid
                break
            if frac < coverage:
                lo = mid
            else:
                hi = mid
        if mask is None:
            continue
        out = image.copy()
        for kind, center, half, color in shapes:
            out[_shape_mask(kind, center, half, scale, height, width)] = color
        return out, mask
    raise GenerationError(f"could not place occluders with coverage {coverage:.3f} after {attempts} attempts")


# ---------------------------------------------------------------------------
# dataset generation
# ---------------------------------------------------------------------------


@dataclass
class Frame:
    id: int
    split: str
    pose: CameraPose
    image: str
    clean: str
    mask: str = None
    gain: tuple = (1.0, 1.0, 1.0)
    bias: tuple = (0.0, 0.0, 0.0)
    coverage: float = 0.0

    def to_dict(self):
        return {
            "id": self.id,
            "split": self.split,
            "pose": self.pose.to_list(),
            "image": self.image,
            "clean": self.clean,
            "mask": self.mask,
            "gain": [float(x) for x in self.gain],
            "bias": [float(x) for x in self.bias],
            "coverage": float(self.coverage),
        }


@dataclass
class DatasetManifest:
    intrinsics: CameraIntrinsics
    frames: list
    root: Path = None
    extra: dict = field(default_factory=dict)

    def split(self, name):
        return [f for f in self.frames if f.split == name]

    def to_dict(self):
        d = {"version": MANIFEST_VERSION, "intrinsics": self.intrinsics.to_dict(), "frames": [f.to_dict() for f in self.frames]}
        d.update(self.extra)
        return d

    def path(self, rel):
        return Path(self.root) / rel if rel is not None else None


def orbit_poses(n, rng, radius=3.5, elevation=(15.0, 65.0)):
    poses = []
    for _ in range(n):
        az = rng.uniform(0.0, 2.0 * np.pi)
        el = np.deg2rad(rng.uniform(*elevation))
        eye = radius * np.array([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])
        poses.append(look_at(eye))
    return poses


def default_intrinsics(width, height):
    return CameraIntrinsics.centered(width, height, focal=1.0 * width)


def generate_dataset(scene, n_train, n_test, height, width, spec, seed, out_dir, radius=3.5):
    """Render, perturb and write a dataset; returns the manifest (also written to disk)."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create dataset directory {out_dir}: {exc}") from exc
    if n_train < 20:
        log.warning("only %d training images; at least 20 are recommended", n_train)
    intr = default_intrinsics(width, height)
    root = np.random.SeedSequence(seed)
    pose_seed, train_seed, test_seed = root.spawn(3)
    pose_rng = np.random.default_rng(pose_seed)
    train_poses = orbit_poses(n_train, pose_rng, radius)
    test_poses = orbit_poses(n_test, pose_rng, radius)
    frames = []

    def save(kind, name, arr):
        path = out_dir / name
        try:
            (imageio.write_gray if kind == "gray" else imageio.write_rgb)(path, arr)
        except OSError as exc:
            raise OSError(f"failed to write {path}: {exc}") from exc
        return name

    for i, (pose, ss) in enumerate(zip(train_poses, train_seed.spawn(n_train))):
        rng = np.random.default_rng(ss)
        clean = render_ground_truth(scene, intr, pose)
        gain, bias = _draw_affine(rng, spec)
        img = apply_color_perturbation(clean, gain, bias)
        coverage = 0.0
        if spec.occlusion:
            coverage = spec.coverage if spec.coverage is not None else rng.uniform(*spec.coverage_range)
            img, mask = composite_occluder(img, coverage, rng, spec.max_shapes)
        else:
            mask = np.zeros((height, width), dtype=bool)
        stem = f"train_{i:03d}"
        frames.append(
            Frame(
                i,
                "train",
                pose,
                save("rgb", f"{stem}.png", img),
                save("rgb", f"{stem}_clean.png", clean),
                save("gray", f"{stem}_mask.png", mask),
                tuple(gain),
                tuple(bias),
                coverage,
            )
        )

    for i, (pose, ss) in enumerate(zip(test_poses, test_seed.spawn(n_test))):
        rng = np.random.default_rng(ss)
        clean = render_ground_truth(scene, intr, pose)
        gain, bias = _draw_affine(rng, spec)
        img = apply_color_perturbation(clean, gain, bias)
        stem = f"test_{i:03d}"
        frames.append(
            Frame(
                n_train + i,
                "test",
                pose,
                save("rgb", f"{stem}.png", img),
                save("rgb", f"{stem}_clean.png", clean),
                None,
                tuple(gain),
                tuple(bias),
            )
        )

    manifest = DatasetManifest(
        intr,
        frames,
        out_dir,
        {"scene": scene.to_dict(), "perturbation": spec.to_dict(), "seed": int(seed), "camera_radius": radius},
    )
    path = out_dir / "manifest.json"
    try:
        path.write_text(json.dumps(manifest.to_dict(), indent=2), encoding="utf-8")
    except OSError as exc:
        raise OSError(f"failed to write {path}: {exc}") from exc
    return manifest


def _draw_affine(rng, spec):
    gain = rng.uniform(*spec.gain_range, size=3)
    bias = rng.uniform(*spec.bias_range, size=3)
    if not spec.color:
        return np.ones(3), np.zeros(3)
    return gain, bias


def load_manifest(path):
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    data = json.loads(path.read_text(encoding="utf-8"))
    if data.get("version") != MANIFEST_VERSION:
        raise InputError(f"unsupported manifest version {data.get('version')}")
    intr = CameraIntrinsics.from_dict(data["intrinsics"])
    frames = []
    for f in data["frames"]:
        frames.append(
            Frame(
                int(f["id"]),
                f["split"],
                CameraPose.from_matrix(f["pose"]),
                f["image"],
                f["clean"],
                f.get("mask"),
                tuple(f.get("gain", (1.0, 1.0, 1.0))),
                tuple(f.get("bias", (0.0, 0.0, 0.0))),
                float(f.get("coverage", 0.0)),
            )
        )
    extra = {k: v for k, v in data.items() if k not in ("version", "intrinsics", "frames")}
    manifest = DatasetManifest(intr, frames, path.parent, extra)
    for f in frames:
        for rel in (f.image, f.clean, f.mask):
            if rel is not None and not manifest.path(rel).exists():
                raise InputError(f"manifest references missing file {manifest.path(rel)}")
    ids = {f.split: set() for f in frames}
    for f in frames:
        ids[f.split].add(f.id)
    if "train" in ids and "test" in ids and ids["train"] & ids["test"]:
        raise InputError("train and test splits share frame ids")
    return manifest
