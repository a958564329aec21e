import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hanerf import _kernels, cameras
from hanerf import diffcore as dc
from hanerf import field as fld
from hanerf import renderer
from hanerf.cameras import Rays
from hanerf.errors import TrainingDivergenceError

MICRO = fld.FieldConfig(depth=2, width=16, skip_layer=5, color_width=8, pos_freqs=2, dir_freqs=1)


def _rays(n, near=1.0, far=3.0):
    origins = np.tile([0.0, 0.0, 4.0], (n, 1))
    dirs = np.tile([0.0, 0.0, -1.0], (n, 1))
    return Rays(origins, dirs, np.full(n, near), np.full(n, far))


def test_bin_centers():
    s = renderer.stratified_samples(_rays(1, 2.0, 4.0), 4, rng=None)
    assert np.allclose(s.t[0], 2.0 + 2.0 * np.array([1, 3, 5, 7]) / 8)
    assert s.deltas[0, -1] == renderer.FAR_DELTA


@given(st.integers(0, 2**31 - 1), st.integers(2, 64))
def test_samples_sorted_and_inside(seed, k):
    rays = _rays(5, 0.5, 2.5)
    s = renderer.stratified_samples(rays, k, np.random.default_rng(seed))
    assert np.all(np.diff(s.t, axis=1) > 0)
    assert np.all((s.t >= 0.5) & (s.t <= 2.5))
    assert np.all(s.deltas > 0)


def test_samples_deterministic():
    a = renderer.stratified_samples(_rays(3), 8, np.random.default_rng(9))
    b = renderer.stratified_samples(_rays(3), 8, np.random.default_rng(9))
    assert np.array_equal(a.t, b.t)


def test_composite_empty_space():
    res = renderer.composite(np.zeros(5), np.random.default_rng(0).uniform(size=(5, 3)), np.full(5, 0.1))
    assert np.array_equal(res.rgb, np.zeros(3))
    assert res.final_transmittance == 1.0


def test_composite_opaque_surface():
    res = renderer.composite([1e6], [[1.0, 0.0, 0.0]], [1.0])
    assert np.allclose(res.rgb, [1.0, 0.0, 0.0])


def test_composite_two_sample_oracle():
    res = renderer.composite([1.0, 2.0], [[1, 0, 0], [0, 1, 0]], [0.5, 0.5])
    w1 = 1 - np.exp(-0.5)
    w2 = np.exp(-0.5) * (1 - np.exp(-1.0))
    assert np.allclose(res.rgb, [w1, w2, 0.0], atol=1e-12)
    assert np.allclose(res.rgb, [0.3935, 0.3834, 0.0], atol=5e-5)


def test_composite_order_matters():
    sig = np.array([0.2, 5.0])
    col = np.array([[1.0, 0, 0], [0, 1.0, 0]])
    a = renderer.composite(sig, col, [1.0, 1.0]).rgb
    b = renderer.composite(sig[::-1], col[::-1], [1.0, 1.0]).rgb
    assert not np.allclose(a, b)


def test_weights_partition_unity_and_transmittance_monotone():
    rng = np.random.default_rng(0)
    sigma = rng.exponential(2.0, size=(100_000, 8))
    delta = rng.uniform(0.001, 0.5, size=(100_000, 8))
    res = renderer.composite(sigma, rng.uniform(size=(100_000, 8, 3)), delta)
    assert np.max(np.abs(res.weights.sum(axis=1) + res.final_transmittance - 1.0)) < 1e-6
    assert np.all((res.weights >= 0) & (res.weights <= 1))
    trans = np.exp(-np.cumsum(sigma * delta, axis=1))
    assert np.all(np.diff(trans, axis=1) <= 0)


def test_numba_and_numpy_composite_agree():
    rng = np.random.default_rng(1)
    sigma = rng.exponential(2.0, size=(64, 16))
    rgb = rng.uniform(size=(64, 16, 3))
    delta = rng.uniform(0.01, 0.3, size=(64, 16))
    delta[:, -1] = 1e10
    g = rng.normal(size=(64, 3))
    fa = _kernels._composite_forward_nb(sigma, rgb, delta)
    fb = _kernels._composite_forward_np(sigma, rgb, delta)
    for x, y in zip(fa, fb):
        assert np.allclose(x, y, rtol=1e-12, atol=1e-14)
    ba = _kernels._composite_backward_nb(sigma, rgb, delta, fa[1], g)
    bb = _kernels._composite_backward_np(sigma, rgb, delta, fb[1], g)
    for x, y in zip(ba, bb):
        assert np.allclose(x, y, rtol=1e-10, atol=1e-12)


def test_numba_and_numpy_scatter_and_trace_agree():
    rng = np.random.default_rng(2)
    idx = rng.integers(0, 7, size=50)
    vals = rng.normal(size=(50, 4))
    assert np.allclose(_kernels._scatter_add_rows_nb(idx, vals, 7), _kernels._scatter_add_rows_np(idx, vals, 7))
    dirs = rng.normal(size=(200, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    origins = -3.0 * dirs
    args = (origins, dirs, rng.uniform(-0.5, 0.5, (4, 3)), np.full(4, 0.4), rng.uniform(size=(4, 3)), np.ones(3))
    rgb_a, ids_a, depth_a = _kernels._trace_spheres_nb(*args)
    rgb_b, ids_b, depth_b = _kernels._trace_spheres_np(*args)
    assert np.array_equal(ids_a, ids_b) and np.array_equal(rgb_a, rgb_b)
    assert np.allclose(depth_a, depth_b, rtol=1e-12)


def test_composite_gradients_double_precision():
    rng = np.random.default_rng(3)
    delta = rng.uniform(0.05, 0.5, size=(4, 5))
    delta[:, -1] = 1e10
    ps = dc.ParameterSet()
    ps.add("sigma", rng.uniform(0, 3, (4, 5)))
    ps.add("rgb", rng.uniform(0, 1, (4, 5, 3)))
    proj = rng.normal(size=(4, 3))
    report = dc.gradient_check(lambda p: dc.tsum(dc.mul(dc.composite(p["sigma"], p["rgb"], delta)[0], proj)), ps)
    assert report.max_error < 1e-5, report


def _params(seed=0, dtype=np.float64):
    return fld.init_field(dc.ParameterSet(), MICRO, np.random.default_rng(seed), dtype=dtype)


def test_zero_density_field_renders_black():
    p = _params()
    p.values["field.sigma.w"][:] = 0
    p.values["field.sigma.b"][:] = -200.0  # softplus(-200) underflows to 0
    out = renderer.render_rays(p, MICRO, _rays(4), np.zeros(48), n_samples=16)
    assert np.allclose(out.data, 0.0, atol=1e-12)


def test_constant_slab_matches_closed_form():
    # a homogeneous slab of density s and length L must be opaque to 1 - exp(-s L)
    sigma_value, length, k = 0.7, 2.0, 256
    rays = _rays(1, 1.0, 1.0 + length)
    s = renderer.stratified_samples(rays, k, None)
    deltas = s.deltas.copy()
    deltas[:, -1] = (rays.far - s.t[:, -1])[0] + (s.t[0, 0] - rays.near[0])
    res = renderer.composite(np.full(k, sigma_value), np.ones((k, 3)), deltas[0])
    assert abs(res.rgb[0] - (1 - np.exp(-sigma_value * length))) < 1e-3


def test_doubling_samples_converges():
    p = _params(seed=1)
    pose = cameras.look_at([0.0, -3.0, 1.0])
    intr = cameras.CameraIntrinsics.centered(8, 8, focal=8.0)
    a = renderer.render_image(p, MICRO, intr, pose, np.zeros(48), n_samples=128)
    b = renderer.render_image(p, MICRO, intr, pose, np.zeros(48), n_samples=256)
    assert np.max(np.abs(a - b)) < 1e-2


def test_render_image_consistent_with_render_rays():
    p = _params(seed=2)
    pose = cameras.look_at([2.0, -2.0, 1.0])
    intr = cameras.CameraIntrinsics.centered(2, 2, focal=2.0)
    img = renderer.render_image(p, MICRO, intr, pose, np.zeros(48), n_samples=16)
    assert img.shape == (2, 2, 3)
    for (u, v) in [(0.5, 0.5), (1.5, 0.5), (0.5, 1.5), (1.5, 1.5)]:
        ray = cameras.generate_rays(intr, pose, [[u, v]])
        single = renderer.render_rays(p, MICRO, ray, np.zeros(48), n_samples=16).data[0]
        assert np.array_equal(img[int(v), int(u)], single)


def test_render_image_pinned_seed_bit_identical():
    p = _params(seed=3)
    pose = cameras.look_at([2.0, 2.0, 2.0])
    intr = cameras.CameraIntrinsics.centered(6, 5, focal=6.0)
    a = renderer.render_image(p, MICRO, intr, pose, np.zeros(48), 8, np.random.default_rng(4))
    b = renderer.render_image(p, MICRO, intr, pose, np.zeros(48), 8, np.random.default_rng(4))
    assert np.array_equal(a, b)


def test_non_finite_render_raises():
    p = _params()
    p.values["field.color.out.b"][:] = np.nan
    with pytest.raises(TrainingDivergenceError):
        renderer.render_rays(p, MICRO, _rays(2), np.zeros(48), n_samples=4)


def test_density_ignores_appearance():
    p = _params(seed=5)
    rays = _rays(10)
    a = renderer.render_density(p, MICRO, rays, 16)
    assert a.shape == (10, 16)
