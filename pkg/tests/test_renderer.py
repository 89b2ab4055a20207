import numpy as np
import pytest
from scipy import stats

from nightNeRF import autodiff as ad
from nightNeRF.fields import SceneField
from nightNeRF.mlp import EncodingConfig
from nightNeRF.renderer import (
    RenderSettings, composite, hierarchical_resample, interval_widths,
    RaySample, render_image, render_rays, stratified_samples, volume_render)


def constant_field(color, density):
    def field(params, points, directions):
        lead = ad.value_of(points).shape[:-1]
        return np.broadcast_to(color, lead + (3,)), np.full(lead, density)
    return field


def test_weights_sum_to_opacity(rng):
    sigmas = rng.exponential(2.0, size=(1000, 16))
    deltas = rng.uniform(0.01, 0.3, size=(1000, 16))
    colors = rng.uniform(size=(1000, 16, 3))
    _, weights, transmittances = composite(sigmas, colors, deltas)
    opacity = 1.0 - np.exp(-np.sum(sigmas * deltas, axis=-1))
    np.testing.assert_allclose(weights.sum(axis=-1), opacity, atol=1e-12)
    assert np.all(np.diff(transmittances, axis=-1) <= 0)
    assert np.all(weights >= 0)


def test_zero_density_renders_black(rng):
    rgb, weights, transmittances = composite(
        np.zeros((3, 5)), rng.uniform(size=(3, 5, 3)), np.full((3, 5), 0.2))
    np.testing.assert_array_equal(rgb, 0.0)
    np.testing.assert_array_equal(weights, 0.0)
    np.testing.assert_array_equal(transmittances, 1.0)


def test_volume_render_stops_at_opaque_sample():
    colors = np.array([[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]])
    samples = RaySample(t=np.array([[1.0, 2.0, 3.0]]), deltas=np.ones((1, 3)), colors=colors,
                        sigmas=np.array([[0.0, 1e3, 5.0]]))
    rgb, weights, _ = volume_render(samples)
    np.testing.assert_array_equal(rgb, [[0.0, 1.0, 0.0]])
    np.testing.assert_array_equal(weights, [[0.0, 1.0, 0.0]])
    assert samples.weights is weights
    np.testing.assert_array_equal(samples.transmittances, [[1.0, 1.0, 0.0]])


def test_stratified_midpoints():
    t = stratified_samples(2.0, 6.0, 4)
    np.testing.assert_allclose(t, [[2.5, 3.5, 4.5, 5.5]])


def test_stratified_jitter_stays_in_bins():
    t = stratified_samples(2.0, 6.0, 4, jitter=True, seed=7, n_rays=50)
    lower = np.array([2.0, 3.0, 4.0, 5.0])
    assert np.all((t >= lower) & (t < lower + 1.0))
    np.testing.assert_array_equal(t, stratified_samples(2.0, 6.0, 4, jitter=True, seed=7, n_rays=50))


def test_stratified_rejects_bad_bounds():
    with pytest.raises(ValueError):
        stratified_samples(3.0, 3.0, 4)


def test_last_interval_reaches_far():
    widths = interval_widths(np.array([[1.0, 2.0, 4.0]]), 5.0)
    np.testing.assert_array_equal(widths, [[1.0, 2.0, 1.0]])


def test_resample_concentrates_on_mass():
    weights = np.zeros((2, 8))
    weights[:, 5] = 1.0
    edges = np.linspace(0.0, 8.0, 9)
    t = hierarchical_resample(weights, edges, 16, seed=3)
    assert np.all((t >= 5.0) & (t <= 6.0))
    assert np.all(np.diff(t, axis=-1) >= 0)


def test_resample_is_uniform_under_flat_weights():
    edges = np.linspace(2.0, 6.0, 9)
    t = hierarchical_resample(np.ones((4, 8)), edges, 1000, seed=11)
    # finer than the coarse bins, so the in-bin interpolation is tested too
    counts, _ = np.histogram(t, bins=np.linspace(2.0, 6.0, 21))
    assert stats.chisquare(counts).pvalue > 1e-3


def test_splitting_an_interval_keeps_the_color(rng):
    sigmas = rng.exponential(2.0, size=(50, 6))
    deltas = rng.uniform(0.05, 0.4, size=(50, 6))
    colors = rng.uniform(size=(50, 6, 3))
    rgb, weights, _ = composite(sigmas, colors, deltas)

    split = 2
    split_sigmas = np.insert(sigmas, split, sigmas[:, split], axis=1)
    split_colors = np.insert(colors, split, colors[:, split], axis=1)
    split_deltas = np.insert(deltas, split, deltas[:, split] / 2, axis=1)
    split_deltas[:, split + 1] /= 2
    split_rgb, split_weights, _ = composite(split_sigmas, split_colors, split_deltas)
    np.testing.assert_allclose(split_rgb, rgb, atol=1e-12)
    np.testing.assert_allclose(split_weights.sum(axis=-1), weights.sum(axis=-1), atol=1e-12)


def test_resample_uniform_fallback():
    t = hierarchical_resample(np.zeros((1, 4)), np.linspace(1.0, 5.0, 5), 8)
    assert np.all((t >= 1.0) & (t <= 5.0))
    np.testing.assert_allclose(t, [np.linspace(1.25, 4.75, 8)])


def test_resample_rejects_negative_weights():
    with pytest.raises(ValueError):
        hierarchical_resample(-np.ones((1, 4)), np.linspace(0, 1, 5), 4)


@pytest.mark.parametrize('n_fine', [0, 8])
def test_opaque_constant_field(n_fine):
    settings = RenderSettings(near=1.0, far=5.0, n_coarse=16, n_fine=n_fine, jitter=False)
    color = np.array([0.2, 0.4, 0.6])
    origins = np.zeros((5, 3))
    directions = np.tile([0.0, 0.0, -1.0], (5, 1))
    result = render_rays(constant_field(color, 1e3), {}, origins, directions, settings)
    np.testing.assert_allclose(result.rgb, np.tile(color, (5, 1)), atol=1e-9)
    assert result.t.shape == (5, 16 + n_fine)
    assert result.mid_points.shape == (5, 3)


def small_field():
    return SceneField(depth=2, width=8, encoding=EncodingConfig(L_position=2, L_direction=1))


def test_render_image_is_deterministic(camera):
    field = small_field()
    store = ad.ParameterStore()
    field.init(store, np.random.default_rng(0))
    settings = RenderSettings(near=camera.near, far=camera.far, n_coarse=8, n_fine=4)
    first = render_image(field, store.blocks, camera, settings, chunk=50)
    second = render_image(field, store.blocks, camera, settings)
    assert first.shape == (12, 16, 3)
    np.testing.assert_array_equal(first, second)
    assert np.all((first >= 0) & (first <= 1))


def test_zero_weight_field_renders_constant(camera):
    field = small_field()
    store = ad.ParameterStore()
    field.init(store, np.random.default_rng(0))
    for block in store.blocks.values():
        block[...] = 0.0
    settings = RenderSettings(near=camera.near, far=camera.far, n_coarse=8, n_fine=0)
    image = render_image(field, store.blocks, camera, settings)
    np.testing.assert_allclose(image, np.broadcast_to(image[0, 0], image.shape), atol=1e-12)


def test_render_gradients(rng):
    field = small_field()
    store = ad.ParameterStore()
    field.init(store, rng)
    settings = RenderSettings(near=1.0, far=4.0, n_coarse=6, n_fine=0, jitter=False)
    origins = rng.normal(scale=0.1, size=(3, 3))
    directions = rng.normal(size=(3, 3))
    directions /= np.linalg.norm(directions, axis=-1, keepdims=True)
    target = rng.uniform(size=(3, 3))

    def fn(p):
        rgb = render_rays(field, p, origins, directions, settings).rgb
        return ad.reduce_mean(ad.square(ad.sub(rgb, target)))

    assert ad.grad_check(fn, store, n_samples=6) < 1e-5
