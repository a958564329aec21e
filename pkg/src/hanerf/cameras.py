"""
Pinhole cameras and ray generation.

Conventions: right-handed world, the camera looks down its local -z axis,
image u grows to the right and v grows downward. Poses are camera-to-world.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

from .errors import InputError

# circumradius of the [-1, 1]^3 scene cube
SCENE_RADIUS = float(np.sqrt(3.0))


@dataclass(frozen=True)
class CameraIntrinsics:
    focal: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not self.focal > 0:
            raise InputError(f"focal length must be positive, got {self.focal}")
        if not (0 <= self.cx <= self.width and 0 <= self.cy <= self.height):
            raise InputError("principal point must lie inside the image")

    @classmethod
    def centered(cls, width, height, focal):
        return cls(float(focal), width / 2.0, height / 2.0, int(width), int(height))

    def to_dict(self):
        return {"fx": self.focal, "cx": self.cx, "cy": self.cy, "w": self.width, "h": self.height}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["fx"]), float(d["cx"]), float(d["cy"]), int(d["w"]), int(d["h"]))


@dataclass(frozen=True)
class CameraPose:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    def validate(self, tol=1e-6):
        r = self.rotation
        if not np.allclose(r.T @ r, np.eye(3), atol=tol):
            raise InputError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > tol:
            raise InputError("rotation determinant is not +1")
        return self

    def matrix(self):
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def to_list(self):
        return [float(x) for x in self.matrix().reshape(-1)]

    @classmethod
    def from_matrix(cls, values):
        m = np.asarray(values, dtype=np.float64)
        if m.size != 16:
            raise InputError(f"pose needs 16 values, got {m.size}")
        m = m.reshape(4, 4)
        return cls(m[:3, :3], m[:3, 3]).validate(tol=1e-5)


@dataclass
class Rays:
    """A batch of rays; ``origins``/``dirs`` are (N,3), ``near``/``far`` (N,)."""

    origins: np.ndarray
    dirs: np.ndarray
    near: np.ndarray
    far: np.ndarray

    def __len__(self):
        return self.origins.shape[0]

    def __getitem__(self, index):
        return Rays(self.origins[index], self.dirs[index], self.near[index], self.far[index])

    @staticmethod
    def concatenate(items):
        return Rays(
            np.concatenate([r.origins for r in items]),
            np.concatenate([r.dirs for r in items]),
            np.concatenate([r.near for r in items]),
            np.concatenate([r.far for r in items]),
        )


def look_at(eye, target=(0.0, 0.0, 0.0), up=(0.0, 0.0, 1.0)):
    """Camera-to-world pose at ``eye`` whose -z axis points at ``target``."""
    eye = np.asarray(eye, dtype=np.float64)
    back = eye - np.asarray(target, dtype=np.float64)
    back /= np.linalg.norm(back)
    up = np.asarray(up, dtype=np.float64)
    right = np.cross(up, back)
    if np.linalg.norm(right) < 1e-9:
        # looking straight along the up axis
        right = np.cross(np.array([0.0, 1.0, 0.0]), back)
    right /= np.linalg.norm(right)
    true_up = np.cross(back, right)
    return CameraPose(np.stack([right, true_up, back], axis=1), eye)


def ray_bounds(origins, radius=SCENE_RADIUS):
    """Near/far distances bracketing the scene's bounding sphere for cameras outside it."""
    dist = np.linalg.norm(np.atleast_2d(origins), axis=-1)
    near = np.maximum(dist - radius, 0.05)
    far = np.maximum(dist + radius, near + 1e-3)
    return near, far


def pixel_directions(intr, pose, pixels):
    """Unit world-space directions through (N,2) pixel coordinates."""
    pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    cam = np.stack(
        [
            (pixels[:, 0] - intr.cx) / intr.focal,
            -(pixels[:, 1] - intr.cy) / intr.focal,
            -np.ones(pixels.shape[0]),
        ],
        axis=-1,
    )
    d = cam @ pose.rotation.T
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


def generate_rays(intr, pose, pixels, radius=SCENE_RADIUS):
    """Rays through an (N,2) array of real pixel coordinates."""
    pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    u, v = pixels[:, 0], pixels[:, 1]
    if np.any((u < 0) | (u >= intr.width) | (v < 0) | (v >= intr.height)):
        raise InputError("pixel coordinates outside [0, W) x [0, H)")
    dirs = pixel_directions(intr, pose, pixels)
    origins = np.broadcast_to(pose.translation, dirs.shape).copy()
    near, far = ray_bounds(origins, radius)
    return Rays(origins, dirs, near, far)


def generate_ray(intr, pose, pixel, radius=SCENE_RADIUS):
    """Single ray through pixel ``(u, v)``; see :func:`generate_rays`."""
    return generate_rays(intr, pose, [pixel], radius)[0]


def pixel_centers(width, height):
    """Row-major (H*W, 2) array of pixel-center coordinates."""
    v, u = np.meshgrid(np.arange(height) + 0.5, np.arange(width) + 0.5, indexing="ij")
    return np.stack([u.reshape(-1), v.reshape(-1)], axis=-1)


def image_rays(intr, pose, radius=SCENE_RADIUS):
    return generate_rays(intr, pose, pixel_centers(intr.width, intr.height), radius)


def grid_pixels(intr, size, seed=None):
    """Row-major ``size x size`` lattice of pixels covering the whole image.

    Each sample sits at its cell center, shifted by a uniform offset of at
    most half a cell per axis when ``seed`` is given.
    """
    if size < 2:
        raise InputError("grid size must be at least 2")
    cell_u = intr.width / size
    cell_v = intr.height / size
    jj, ii = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    u = (ii.reshape(-1) + 0.5) * cell_u
    v = (jj.reshape(-1) + 0.5) * cell_v
    if seed is not None:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        jitter = rng.uniform(-0.5, 0.5, size=(size * size, 2))
        u = u + jitter[:, 0] * cell_u
        v = v + jitter[:, 1] * cell_v
    # keep strictly inside [0, W) x [0, H)
    u = np.clip(u, 0.0, np.nextafter(intr.width, 0))
    v = np.clip(v, 0.0, np.nextafter(intr.height, 0))
    return np.stack([u, v], axis=-1)


def generate_grid_rays(intr, pose, size, seed=None, radius=SCENE_RADIUS):
    """``size*size`` rays on a jittered lattice; returns ``(rays, pixels)``."""
    pixels = grid_pixels(intr, size, seed)
    return generate_rays(intr, pose, pixels, radius), pixels


def interpolate_pose(a, b, t):
    """Slerp between rotations (shorter arc) and lerp between translations."""
    t = float(t)
    if t <= 0.0:
        return CameraPose(a.rotation.copy(), a.translation.copy())
    if t >= 1.0:
        return CameraPose(b.rotation.copy(), b.translation.copy())
    rots = Rotation.from_matrix(np.stack([a.rotation, b.rotation]))
    r = Slerp([0.0, 1.0], rots)([t]).as_matrix()[0]
    return CameraPose(r, (1.0 - t) * a.translation + t * b.translation)


def random_view(poses, rng, target=(0.0, 0.0, 0.0), up=(0.0, 0.0, 1.0)):
    """Interpolate two random training poses and re-aim at ``target``."""
    i, j = rng.integers(0, len(poses), size=2)
    t = rng.uniform()
    mid = interpolate_pose(poses[i], poses[j], t)
    eye = mid.translation
    # keep the camera's distance from the target a blend of the two endpoints
    ra = np.linalg.norm(poses[i].translation - target)
    rb = np.linalg.norm(poses[j].translation - target)
    offset = eye - np.asarray(target)
    norm = np.linalg.norm(offset)
    if norm < 1e-6:
        offset = poses[i].translation - np.asarray(target)
        norm = np.linalg.norm(offset)
    eye = np.asarray(target) + offset / norm * ((1.0 - t) * ra + t * rb)
    return look_at(eye, target, up)
