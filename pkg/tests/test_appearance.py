import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hanerf import appearance as am
from hanerf import diffcore as dc
from hanerf.errors import InputError

MICRO = am.EncoderConfig(channels=(4, 4, 6, 6, 8))


def _params(cfg=MICRO, seed=0, dtype=np.float64):
    return am.init_encoder(dc.ParameterSet(), cfg, np.random.default_rng(seed), dtype=dtype)


def test_output_has_48_dimensions():
    p = _params(am.EncoderConfig(), dtype=np.float32)
    img = np.random.default_rng(0).uniform(size=(40, 36, 3))
    assert am.encode_appearance(p, am.EncoderConfig(), img).shape == (1, 48)


def test_same_image_same_vector():
    p = _params()
    img = np.random.default_rng(1).uniform(size=(32, 32, 3))
    assert np.array_equal(am.encode_appearance(p, MICRO, img).data, am.encode_appearance(p, MICRO, img).data)


def test_output_size_independent_of_input_size():
    p = _params()
    big = np.random.default_rng(2).uniform(size=(128, 128, 3))
    assert am.encode_appearance(p, MICRO, big[:64, :64]).shape == am.encode_appearance(p, MICRO, big).shape == (1, 48)


@pytest.mark.parametrize("shape", [(31, 64, 3), (64, 16, 3)])
def test_undersized_image_rejected(shape):
    with pytest.raises(InputError):
        am.encode_appearance(_params(), MICRO, np.zeros(shape))


def test_batch_matches_single():
    p = _params()
    imgs = np.random.default_rng(3).uniform(size=(3, 32, 32, 3))
    batch = am.encode_appearance(p, MICRO, imgs).data
    for i in range(3):
        assert np.allclose(batch[i], am.encode_appearance(p, MICRO, imgs[i]).data[0], atol=1e-13)


def test_encoder_gradient_wrt_params_and_image():
    p = _params(seed=4)
    p.add("image", np.random.default_rng(4).uniform(size=(32, 32, 3)))
    target = np.random.default_rng(5).normal(size=48)

    def loss(q):
        return am.view_consistent_loss(q, MICRO, target, q["image"])

    report = dc.gradient_check(loss, p, max_entries=30)
    assert report.max_error < 1e-4, report


def test_view_consistent_loss_values():
    p = _params(seed=6)
    img = np.random.default_rng(6).uniform(size=(32, 32, 3))
    code = am.encode_appearance(p, MICRO, img).data[0]
    assert float(am.view_consistent_loss(p, MICRO, code, img).data) == pytest.approx(0.0, abs=1e-12)
    assert float(am.view_consistent_loss(p, MICRO, code + 0.01, img).data) == pytest.approx(0.48, abs=1e-9)


@given(st.lists(st.floats(-5, 5), min_size=48, max_size=48), st.lists(st.floats(-5, 5), min_size=48, max_size=48))
def test_l1_symmetric(a, b):
    assert am.l1_distance(a, b) == am.l1_distance(b, a)


def test_interpolation():
    a = np.random.default_rng(7).normal(size=48)
    b = np.random.default_rng(8).normal(size=48)
    assert np.array_equal(am.interpolate_appearance(a, b, 0.0), a)
    assert np.array_equal(am.interpolate_appearance(a, b, 1.0), b)
    assert np.array_equal(am.interpolate_appearance(a, -a, 0.5), np.zeros(48))
    q = am.interpolate_appearance(a, b, 0.25)
    assert np.allclose(q, 0.75 * a + 0.25 * b)
    assert np.all((q >= np.minimum(a, b) - 1e-15) & (q <= np.maximum(a, b) + 1e-15))


def test_grid_to_image_row_major():
    colors = np.arange(2 * 2 * 3, dtype=float).reshape(4, 3)
    img = am.grid_to_image(colors, 2)
    assert np.array_equal(img[0, 1], colors[1]) and np.array_equal(img[1, 0], colors[2])
