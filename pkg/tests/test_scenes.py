import numpy as np

from nightNeRF.geometry import look_at, make_camera
from nightNeRF.scenes import (
    Box, CameraRig, Sphere, ToyScene, default_toy_scene, render_toy_scene, trace)


def test_empty_sky_is_background():
    cam = make_camera(look_at((0.0, 0.0, 10.0), (0.0, 10.0, 20.0)), 20.0, 16, 12, 0.5, 30.0)
    image, depth = render_toy_scene(default_toy_scene(), cam)
    np.testing.assert_array_equal(image, np.broadcast_to(ToyScene().background, image.shape))
    np.testing.assert_array_equal(depth, 30.0)


def test_sphere_depth_on_axis():
    scene = ToyScene(spheres=[Sphere(radius=0.5)])
    cam = make_camera(look_at((0.0, 0.0, 3.0), (0.0, 0.0, 0.0)), 20.0, 16, 12, 0.5, 8.0)
    _, depth = render_toy_scene(scene, cam)
    assert abs(depth[6, 8] - 2.5) < 1e-12


def test_box_hit_distance():
    box = Box(lower=np.array([-1.0, -1.0, -1.0]), upper=np.array([1.0, 1.0, 1.0]))
    t, normals = box.intersect(np.array([[0.0, 0.0, 5.0], [5.0, 5.0, 5.0]]),
                               np.array([[0.0, 0.0, -1.0], [0.0, 0.0, -1.0]]))
    assert t[0] == 4.0
    assert np.isinf(t[1])
    np.testing.assert_array_equal(normals[0], [0.0, 0.0, 1.0])


def test_ground_plane_is_hit():
    colors, depth = trace(ToyScene(), np.array([[0.0, 1.0, 0.0]]), np.array([[0.0, -1.0, 0.0]]), 10.0)
    assert depth[0] == 2.0
    assert np.all((colors >= 0) & (colors <= 1))


def test_renders_are_deterministic():
    cam = CameraRig(width=24, height=18, focal=22.5).cameras()[0]
    first, depth = render_toy_scene(default_toy_scene(), cam)
    second, _ = render_toy_scene(default_toy_scene(), cam)
    np.testing.assert_array_equal(first, second)
    assert np.any(depth < cam.far)


def test_rig_poses():
    rig = CameraRig(n_views=5)
    cameras = rig.cameras()
    assert len(cameras) == 5
    for cam in cameras:
        assert abs(np.linalg.norm(cam.center[[0, 2]]) - rig.radius) < 1e-12
        assert not cam.invalid
    assert rig.as_dict()['n_views'] == 5
