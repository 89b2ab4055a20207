import numpy as np
import pytest

from nightNeRF import autodiff as ad
from nightNeRF.errors import ConfigurationError
from nightNeRF.geometry import camera_ray, look_at, make_camera, project
from nightNeRF.scenes import ToyScene, render_toy_scene
from nightNeRF.snd import (
    BlockMatcher, GroundTruthMatcher, aligned_pixels, aligned_rays, build_match_table,
    compose_noisy_pixel, consistency_loss, group_consistency_loss, group_rays, match_views)


def top_down_camera(x=0.0, z=0.0):
    """ Looks straight down at the ground plane, which fills the whole view. """
    pose = look_at((x, 1.5, z), (x, -1.0, z), up=(0.0, 0.0, -1.0))
    return make_camera(pose, 20.0, 16, 12, 0.5, 8.0)


def ground_views(offsets):
    cameras = [top_down_camera(x, z) for x, z in offsets]
    depths = [render_toy_scene(ToyScene(), cam)[1] for cam in cameras]
    return cameras, depths


def test_consistency_of_identical_colors():
    assert consistency_loss(np.tile([0.3, 0.6, 0.1], (4, 1))) == pytest.approx(0.0, abs=1e-15)


def test_consistency_of_black_and_white():
    assert consistency_loss(np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]])) == pytest.approx(0.5)


def test_consistency_invariances(rng):
    colors = rng.uniform(size=(5, 3))
    loss = consistency_loss(colors)
    assert loss >= 0
    assert consistency_loss(colors[rng.permutation(5)]) == pytest.approx(loss, abs=1e-15)
    assert consistency_loss(colors + 0.25) == pytest.approx(loss, abs=1e-12)
    assert consistency_loss(colors[:1]) == 0.0


def test_group_loss_matches_single_groups(rng):
    colors = rng.uniform(size=(2, 3, 3))
    valid = np.array([[True, True, False], [True, False, False]])
    expected = 0.5 * (consistency_loss(colors[0, :2]) + 0.0)
    assert group_consistency_loss(colors, valid) == pytest.approx(expected, abs=1e-12)
    with pytest.raises(ValueError):
        group_consistency_loss(colors, np.zeros((2, 3), dtype=bool))


def test_group_loss_gradients(rng):
    store = ad.ParameterStore()
    store.add('colors', rng.uniform(size=(3, 4, 3)))
    valid = np.array([[1, 1, 1, 0], [1, 0, 1, 1], [1, 1, 1, 1]], dtype=bool)
    assert ad.grad_check(lambda p: group_consistency_loss(p['colors'], valid), store) < 1e-5


def test_compose_noisy_pixel():
    np.testing.assert_allclose(
        compose_noisy_pixel(np.array([0.5, 0.5, 0.5]), np.array([-0.1, 0.0, 0.1])),
        [0.4, 0.5, 0.6])
    store = ad.ParameterStore()
    store.add('c', np.full(3, 0.5))
    store.add('n', np.zeros(3))
    tape = ad.Tape()
    p = tape.bind(store)
    w = np.array([1.0, -2.0, 3.0])
    grads = tape.backward(ad.reduce_sum(ad.mul(compose_noisy_pixel(p['c'], p['n']), w)))
    np.testing.assert_array_equal(grads['c'], w)
    np.testing.assert_array_equal(grads['n'], w)


def test_ground_truth_self_match():
    cameras, depths = ground_views([(0.0, 0.0), (0.0, 0.0)])
    flow, certainty = GroundTruthMatcher(cameras=cameras, depths=depths).match(0, 1)
    rows, cols = np.meshgrid(np.arange(12), np.arange(16), indexing='ij')
    np.testing.assert_allclose(flow[..., 0], rows, atol=1e-6)
    np.testing.assert_allclose(flow[..., 1], cols, atol=1e-6)
    np.testing.assert_array_equal(certainty, 1.0)


def test_ground_truth_border_pixels_match():
    # projections of border pixels may fall a hair outside the image
    cameras, depths = ground_views([(0.0, 0.0), (0.0, 0.0)])
    matcher = GroundTruthMatcher(cameras=cameras, depths=depths)
    flow, certainty = matcher.match(0, 1)
    border = np.zeros((12, 16), dtype=bool)
    border[[0, -1], :] = True
    border[:, [0, -1]] = True
    assert np.all(certainty[border] == 1.0)
    assert cameras[1].in_bounds(flow[..., 0], flow[..., 1]).all()


def test_ground_truth_out_of_view():
    cameras, depths = ground_views([(0.0, 0.0), (1.0, 0.0)])
    flow, certainty = match_views(None, None, GroundTruthMatcher(cameras=cameras, depths=depths), 0, 1)
    assert set(np.unique(certainty)) == {0.0, 1.0}
    matched = certainty == 1
    assert cameras[1].in_bounds(flow[matched, 0], flow[matched, 1]).all()
    np.testing.assert_array_equal(flow[~matched], -1.0)


def test_ground_truth_needs_depth():
    cameras, depths = ground_views([(0.0, 0.0), (0.1, 0.0)])
    with pytest.raises(ConfigurationError):
        GroundTruthMatcher(cameras=cameras, depths=[depths[0], None]).match(0, 1)


def gray_image(channel):
    return np.repeat(channel[..., None], 3, axis=-1)


def test_block_matcher_finds_shift():
    rng = np.random.default_rng(7)
    a = rng.uniform(size=(40, 60))
    b = np.roll(a, 5, axis=1)
    flow, certainty = BlockMatcher().match(0, 1, gray_image(a), gray_image(b))
    rows, cols = np.meshgrid(np.arange(8, 32), np.arange(8, 50), indexing='ij')
    d_col = flow[rows, cols, 1] - (cols + 5)
    d_row = flow[rows, cols, 0] - rows
    assert np.mean(np.abs(d_col)) < 0.5
    assert np.mean(np.abs(d_row)) < 0.5
    assert np.mean(np.round(flow[rows, cols, 1]) - cols == 5) > 0.95
    assert np.all(certainty[rows, cols] > 0.99)
    assert np.all((certainty >= 0) & (certainty <= 1))


def test_block_matcher_needs_images():
    with pytest.raises(ConfigurationError):
        BlockMatcher().match(0, 1, None, np.zeros((4, 4, 3)))


def test_certain_threshold_keeps_anchor_only():
    rng = np.random.default_rng(8)
    images = [gray_image(rng.uniform(size=(24, 32))) for _ in range(2)]
    table = build_match_table(images, BlockMatcher(search_radius=3))
    cameras = [make_camera(np.eye(3, 4), 20.0, 32, 24, 0.1, 5.0)] * 2
    anchor = camera_ray(cameras[0], (12, 16), view=0)
    assert aligned_rays(anchor, table, cameras, theta=1.0, K=20).size == 1


@pytest.fixture
def five_views():
    offsets = [(0.0, 0.0), (0.05, 0.0), (-0.05, 0.05), (0.1, -0.05), (-0.1, 0.1)]
    cameras, depths = ground_views(offsets)
    table = build_match_table([None] * 5, GroundTruthMatcher(cameras=cameras, depths=depths))
    return cameras, table


def test_unoccluded_pixel_joins_all_views(five_views):
    cameras, table = five_views
    anchor = camera_ray(cameras[0], (6, 8), view=0)
    group = aligned_rays(anchor, table, cameras, theta=0.8, K=20)
    assert group.size == 5
    assert [ray.view for ray in group.members] == [1, 2, 3, 4]
    assert group.certainties == [1.0] * 4
    # the ground point seen by the anchor lands 0.4 px off a pixel center in the
    # shifted views; members go through the nearest whole pixel
    assert [ray.pixel for ray in group.members] == [(6.0, 8.0), (6.0, 8.0), (6.0, 7.0), (5.0, 9.0)]
    point = anchor.origin + 2.5 * anchor.direction
    for ray in group.members:
        rows, cols, _, _ = project(cameras[ray.view], point[None])
        assert abs(rows[0] - ray.pixel[0]) <= 0.5
        assert abs(cols[0] - ray.pixel[1]) <= 0.5
        np.testing.assert_allclose(
            ray.direction, camera_ray(cameras[ray.view], ray.pixel).direction, atol=1e-15)


def test_group_size_is_capped(five_views):
    cameras, table = five_views
    anchor = camera_ray(cameras[2], (3, 4), view=2)
    group = aligned_rays(anchor, table, cameras, theta=0.8, K=3)
    assert group.size == 3
    assert [ray.view for ray in group.members] == [0, 1]
    with pytest.raises(ValueError):
        aligned_rays(anchor, table, cameras, K=0)


def test_batched_pixels_agree(five_views):
    cameras, table = five_views
    view_ids = np.array([0, 3, 1])
    rows, cols = np.array([6, 2, 11]), np.array([8, 15, 0])
    views, m_rows, m_cols, valid = aligned_pixels(table, view_ids, rows, cols, cameras, 0.8, 4)
    assert views.shape == (3, 3)
    np.testing.assert_array_equal(m_rows, np.round(m_rows))
    np.testing.assert_array_equal(m_cols, np.round(m_cols))
    origins, directions = group_rays(cameras, views, m_rows, m_cols, valid)
    for i in range(3):
        anchor = camera_ray(cameras[view_ids[i]], (rows[i], cols[i]), view=view_ids[i])
        group = aligned_rays(anchor, table, cameras, 0.8, 4)
        assert list(views[i][valid[i]]) == [ray.view for ray in group.members]
        pixels = list(zip(m_rows[i][valid[i]], m_cols[i][valid[i]]))
        assert pixels == [ray.pixel for ray in group.members]
        for j, ray in enumerate(group.members):
            np.testing.assert_allclose(directions[i, j], ray.direction, atol=1e-12)
    np.testing.assert_array_equal(directions[~valid], 0.0)
