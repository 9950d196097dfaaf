import numpy as np
import pytest

from mtnetkit.backbone import Backbone, BackboneConfig, Frame, crop_region


@pytest.fixture(scope="module")
def backbone():
    return Backbone(BackboneConfig(seed=3))


def test_feature_shapes(backbone):
    rng = np.random.default_rng(0)
    fz = backbone.extract(rng.uniform(size=(3, 128, 128)), rng.uniform(size=(1, 128, 128)))
    fx = backbone.extract(rng.uniform(size=(3, 256, 256)), rng.uniform(size=(1, 256, 256)))
    assert [f.shape for f in fz] == [(64, 16, 16)] * 2
    assert [f.shape for f in fx] == [(64, 32, 32)] * 2


def test_seed_determines_weights():
    a, b, c = Backbone(BackboneConfig(seed=1)), Backbone(BackboneConfig(seed=1)), Backbone(BackboneConfig(seed=2))
    x = np.random.default_rng(1).uniform(size=(3, 64, 64))
    assert np.array_equal(a.forward(x, "rgb"), b.forward(x, "rgb"))
    assert not np.array_equal(a.forward(x, "rgb"), c.forward(x, "rgb"))


def test_template_and_search_share_weights(backbone):
    # the 128 crop is the top-left quarter of a 256 crop -> identical receptive fields
    x = np.random.default_rng(2).uniform(size=(1, 256, 256))
    big = backbone.forward(x, "thermal")
    small = backbone.forward(x[:, :128, :128], "thermal")
    np.testing.assert_allclose(small[:, :15, :15], big[:, :15, :15], atol=1e-12)


def test_extract_rejects_mismatch(backbone):
    with pytest.raises(ValueError):
        backbone.extract(np.zeros((3, 64, 64)), np.zeros((1, 32, 32)))
    with pytest.raises(ValueError):
        backbone.extract(np.zeros((3, 60, 60)), np.zeros((1, 60, 60)))


def test_config_validation():
    with pytest.raises(ValueError):
        BackboneConfig(template_size=100)
    with pytest.raises(ValueError):
        BackboneConfig(stride=4)


def test_crop_inside_frame_is_exact_copy():
    img = np.random.default_rng(3).uniform(size=(1, 100, 100))
    c = crop_region(img, (40, 40, 10, 10), 2.0, 20)
    assert not c.padded and (c.x0, c.y0, c.side) == (35.0, 35.0, 20.0)
    assert np.array_equal(c.patch, img[:, 35:55, 35:55])


def test_crop_pads_with_channel_mean():
    img = np.random.default_rng(4).uniform(size=(3, 50, 50))
    c = crop_region(img, (0, 0, 10, 10), 4.0, 40)
    assert c.padded
    np.testing.assert_allclose(c.patch[:, 0, 0], img.reshape(3, -1).mean(axis=1))
    with pytest.raises(ValueError):
        crop_region(img, (0, 0, 0, 10), 2.0, 16)


def test_frame_validation():
    with pytest.raises(ValueError):
        Frame(np.zeros((3, 10, 10)), np.zeros((1, 10, 12)))
    assert Frame(np.zeros((3, 10, 12)), np.zeros((1, 10, 12))).size == (12, 10)
