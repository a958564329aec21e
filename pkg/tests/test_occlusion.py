import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from hanerf import diffcore as dc
from hanerf import occlusion as occ
from hanerf.errors import InputError

MICRO = occ.VisibilityConfig(depth=2, width=16, embed_dim=8, pix_freqs=3)


def _params(n_images=3, seed=0, dtype=np.float64, cfg=MICRO):
    return occ.init_visibility(dc.ParameterSet(), cfg, n_images, np.random.default_rng(seed), dtype=dtype)


def test_zero_output_layer_gives_half():
    p = _params()
    m = occ.visibility(p, MICRO, np.random.default_rng(0).uniform(size=(50, 2)), np.arange(50) % 3)
    assert np.array_equal(m.data, np.full(50, 0.5))


def test_visibility_in_open_interval():
    p = _params(seed=1)
    rng = np.random.default_rng(1)
    for k in p.names():
        p.values[k] += rng.normal(scale=0.1, size=p[k].shape)
    m = occ.visibility(p, MICRO, rng.uniform(size=(10_000, 2)), rng.integers(0, 3, 10_000)).data
    assert np.all((m > 0) & (m < 1))


def test_unknown_image_id():
    with pytest.raises(InputError):
        occ.visibility(_params(), MICRO, np.zeros((1, 2)), [3])
    with pytest.raises(InputError):
        occ.visibility(_params(), MICRO, np.zeros((1, 2)), [-1])


def test_embedding_shape_and_scale():
    p = _params(n_images=500, cfg=occ.VisibilityConfig())
    emb = p["transient.embeddings"]
    assert emb.shape == (500, 128)
    assert abs(emb.std() - 0.01) < 1e-3 and abs(emb.mean()) < 1e-3


def test_loss_examples():
    assert occ.occlusion_loss(1.0, [0.2, 0.0, 0.0], [0.0, 0.0, 0.0]) == pytest.approx(0.04)
    for resid in ([0.0, 0.0, 0.0], [1.0, 0.3, 0.7]):
        assert occ.occlusion_loss(0.0, resid, [0.0, 0.0, 0.0]) == pytest.approx(6e-3)


@given(st.floats(0.0, 0.05), st.floats(1e-3, 1e-2))
def test_closed_form_optimum_matches_numeric_minimizer(r2, lam):
    res = minimize_scalar(lambda m: m * r2 + lam * (1 - m) ** 2, bounds=(0.0, 1.0), method="bounded", options={"xatol": 1e-10})
    assert occ.optimal_visibility(r2, lam) == pytest.approx(res.x, abs=1e-6)


def test_optimum_example():
    assert occ.optimal_visibility(6e-3) == pytest.approx(0.5)
    assert occ.optimal_visibility(0.012) == 0.0


@given(st.floats(0.0, 1.0), st.floats(0.0, 3.0))
def test_loss_non_negative(m, r2):
    assert occ.occlusion_loss(m, [np.sqrt(r2), 0.0, 0.0], [0.0, 0.0, 0.0]) >= 0


def test_loss_tensor_matches_array():
    rng = np.random.default_rng(2)
    m, obs, ren = rng.uniform(size=5), rng.uniform(size=(5, 3)), rng.uniform(size=(5, 3))
    t = occ.occlusion_loss(dc.Tensor(m), obs, dc.Tensor(ren))
    assert np.allclose(t.data, occ.occlusion_loss(m, obs, ren))


def test_loss_reduces_to_squared_error_at_full_visibility():
    rng = np.random.default_rng(3)
    obs, ren = rng.uniform(size=(5, 3)), rng.uniform(size=(5, 3))
    assert np.allclose(occ.occlusion_loss(np.ones(5), obs, ren), ((obs - ren) ** 2).sum(axis=1))


def test_visibility_and_loss_gradients():
    p = _params(seed=4)
    rng = np.random.default_rng(4)
    for k in ("visibility.out.w", "visibility.out.b"):
        p.values[k] += rng.normal(scale=0.5, size=p[k].shape)
    p.add("rendered", rng.uniform(size=(6, 3)))
    pix, ids, obs = rng.uniform(size=(6, 2)), rng.integers(0, 3, 6), rng.uniform(size=(6, 3))

    def loss(q):
        m = occ.visibility(q, MICRO, pix, ids)
        return dc.tsum(occ.occlusion_loss(m, obs, q["rendered"]))

    report = dc.gradient_check(loss, p)
    assert report.max_error < 1e-4, report


def test_visibility_map_shape_and_constant():
    p = _params()
    vm = occ.visibility_map(p, MICRO, 1, 5, 7)
    assert vm.shape == (5, 7) and np.all(vm == 0.5)


def test_different_images_can_differ_after_training():
    r2 = np.stack([np.full((8, 8), 0.001), np.full((8, 8), 0.03)])
    p, losses = occ.fit_visibility(r2, MICRO, iterations=200, lr=1e-2)
    a = occ.visibility_map(p, MICRO, 0, 8, 8)
    b = occ.visibility_map(p, MICRO, 1, 8, 8)
    assert a.mean() > 0.8 and b.mean() < 0.1
    assert losses[-1] < losses[0]
