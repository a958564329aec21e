import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from hanerf import cameras
from hanerf.cameras import CameraIntrinsics, CameraPose
from hanerf.errors import InputError

INTR = CameraIntrinsics.centered(64, 48, focal=50.0)
IDENTITY = CameraPose(np.eye(3), np.zeros(3))


def test_principal_point_looks_down_negative_z():
    ray = cameras.generate_ray(INTR, IDENTITY, (INTR.cx, INTR.cy))
    assert np.allclose(ray.dirs, [0.0, 0.0, -1.0])


def test_offset_by_focal_is_45_degrees():
    wide = CameraIntrinsics.centered(256, 256, focal=50.0)
    ray = cameras.generate_ray(wide, IDENTITY, (wide.cx + wide.focal, wide.cy))
    assert np.allclose(ray.dirs, np.array([1.0, 0.0, -1.0]) / np.sqrt(2.0))


def test_origin_is_translation():
    pose = CameraPose(np.eye(3), [1.0, 2.0, 3.0])
    rays = cameras.generate_rays(INTR, pose, [[0.5, 0.5], [10.0, 20.0], [63.9, 47.9]])
    assert np.array_equal(rays.origins, np.tile([1.0, 2.0, 3.0], (3, 1)))


@pytest.mark.parametrize("pixel", [(-0.1, 5.0), (64.0, 5.0), (5.0, 48.0), (5.0, -1.0)])
def test_out_of_bounds_pixel(pixel):
    with pytest.raises(InputError):
        cameras.generate_ray(INTR, IDENTITY, pixel)


def test_intrinsics_validation():
    with pytest.raises(InputError):
        CameraIntrinsics(0.0, 1.0, 1.0, 4, 4)
    with pytest.raises(InputError):
        CameraIntrinsics(1.0, 5.0, 1.0, 4, 4)


def test_pose_validation():
    with pytest.raises(InputError):
        CameraPose(np.diag([1.0, 1.0, -1.0]), np.zeros(3)).validate()
    with pytest.raises(InputError):
        CameraPose(np.eye(3) * 1.01, np.zeros(3)).validate()
    with pytest.raises(InputError):
        CameraPose.from_matrix(np.eye(4).reshape(-1)[:15])


def test_ray_invariants():
    pose = cameras.look_at([3.0, 1.0, 2.0])
    rays = cameras.image_rays(INTR, pose)
    assert np.allclose(np.linalg.norm(rays.dirs, axis=1), 1.0, atol=1e-6)
    assert np.all(rays.near > 0) and np.all(rays.near < rays.far)


@given(st.floats(0.0, 63.999), st.floats(0.0, 47.999), st.integers(0, 2**31 - 1))
def test_pixel_reprojection_round_trip(u, v, seed):
    pose = cameras.look_at(np.random.default_rng(seed).normal(size=3) * 3 + [0, 0, 5])
    ray = cameras.generate_ray(INTR, pose, (u, v))
    cam_dir = pose.rotation.T @ ray.dirs
    p = cam_dir * (INTR.focal / -cam_dir[2])  # hit the image plane at depth f
    assert abs(p[0] + INTR.cx - u) < 1e-4
    assert abs(-p[1] + INTR.cy - v) < 1e-4


def test_grid_without_jitter_is_cell_centers():
    intr = CameraIntrinsics.centered(8, 8, focal=8.0)
    px = cameras.grid_pixels(intr, 2)
    assert np.array_equal(px, [[2.0, 2.0], [6.0, 2.0], [2.0, 6.0], [6.0, 6.0]])


def test_grid_rays_deterministic_and_in_bounds():
    pose = cameras.look_at([0.0, -3.0, 1.0])
    a, pa = cameras.generate_grid_rays(INTR, pose, 8, seed=5)
    b, pb = cameras.generate_grid_rays(INTR, pose, 8, seed=5)
    assert len(a) == 64
    assert np.array_equal(pa, pb) and np.array_equal(a.dirs, b.dirs)
    assert np.all((pa[:, 0] >= 0) & (pa[:, 0] < INTR.width) & (pa[:, 1] >= 0) & (pa[:, 1] < INTR.height))


def test_grid_jitter_within_one_cell():
    pix = cameras.grid_pixels(INTR, 8, seed=3)
    base = cameras.grid_pixels(INTR, 8)
    cell = np.array([INTR.width / 8, INTR.height / 8])
    assert np.all(np.abs(pix - base) <= cell)


def _rot_z(deg):
    return Rotation.from_euler("z", deg, degrees=True).as_matrix()


def test_interpolate_pose_endpoints_and_midpoint():
    a = CameraPose(_rot_z(0), [0.0, 0.0, 0.0])
    b = CameraPose(_rot_z(90), [2.0, 0.0, 4.0])
    assert np.array_equal(cameras.interpolate_pose(a, b, 0.0).matrix(), a.matrix())
    assert np.array_equal(cameras.interpolate_pose(a, b, 1.0).matrix(), b.matrix())
    mid = cameras.interpolate_pose(a, b, 0.5)
    assert np.allclose(mid.rotation, _rot_z(45), atol=1e-12)
    assert np.allclose(mid.translation, [1.0, 0.0, 2.0])


def test_interpolate_pose_takes_shorter_arc():
    a = CameraPose(_rot_z(10), np.zeros(3))
    b = CameraPose(_rot_z(350), np.zeros(3))
    assert np.allclose(cameras.interpolate_pose(a, b, 0.5).rotation, np.eye(3), atol=1e-12)


def test_interpolate_pose_orthonormal_for_many_pairs():
    rng = np.random.default_rng(0)
    ra = Rotation.random(1000, random_state=1).as_matrix()
    rb = Rotation.random(1000, random_state=2).as_matrix()
    for i in range(1000):
        pose = cameras.interpolate_pose(CameraPose(ra[i], rng.normal(size=3)), CameraPose(rb[i], rng.normal(size=3)), rng.uniform())
        pose.validate(tol=1e-6)


def test_random_view_aims_at_target():
    poses = [cameras.look_at([3.0, 0.0, 1.0]), cameras.look_at([0.0, 3.5, 2.0])]
    rng = np.random.default_rng(0)
    for _ in range(20):
        pose = cameras.random_view(poses, rng)
        pose.validate()
        forward = -pose.rotation[:, 2]
        to_target = -pose.translation / np.linalg.norm(pose.translation)
        assert np.allclose(forward, to_target, atol=1e-9)
        assert 3.1 < np.linalg.norm(pose.translation) < 4.1


def test_intrinsics_dict_round_trip():
    assert CameraIntrinsics.from_dict(INTR.to_dict()) == INTR
