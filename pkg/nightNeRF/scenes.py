# ------------------------------------------------------------------------------
# Copyright (c) 2024 The nightNeRF developers

# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.

# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.

# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <https://www.gnu.org/licenses/>.
# ------------------------------------------------------------------------------


"""
Analytic toy scenes, ray traced to clean images and depth maps.
"""

import numpy as np

from traits.api import HasTraits, Array, Float, List, Instance

from .custom_traits import PositiveFloat, PositiveInt, UnitFloat
from .geometry import camera_rays, look_at, make_camera

_EPS = 1e-9


class Sphere(HasTraits):
    center = Array(dtype=float, shape=(3,), value=np.zeros(3))
    radius = PositiveFloat(1.0)
    color = Array(dtype=float, shape=(3,), value=np.ones(3))

    def intersect(self, origins, directions):
        """ Distance to the first hit (inf if none) and the surface normals. """
        oc = origins - self.center
        b = np.sum(oc * directions, axis=-1)
        c = np.sum(oc * oc, axis=-1) - self.radius ** 2
        disc = b * b - c
        root = np.sqrt(np.maximum(disc, 0))
        t_near = -b - root
        t_far = -b + root
        t = np.where(t_near > _EPS, t_near, t_far)
        t = np.where((disc >= 0) & (t > _EPS), t, np.inf)
        normals = origins + np.where(np.isfinite(t), t, 0)[:, None] * directions - self.center
        normals /= self.radius
        return t, normals

    def as_dict(self):
        return {'center': self.center.tolist(), 'radius': self.radius, 'color': self.color.tolist()}


class Box(HasTraits):
    """ Axis-aligned box. """

    lower = Array(dtype=float, shape=(3,), value=-np.ones(3))
    upper = Array(dtype=float, shape=(3,), value=np.ones(3))
    color = Array(dtype=float, shape=(3,), value=np.ones(3))

    def intersect(self, origins, directions):
        with np.errstate(divide='ignore', invalid='ignore'):
            inv = 1.0 / directions
            t0 = (self.lower - origins) * inv
            t1 = (self.upper - origins) * inv
        t_min = np.nan_to_num(np.minimum(t0, t1), nan=-np.inf)
        t_max = np.nan_to_num(np.maximum(t0, t1), nan=np.inf)
        t_enter = np.max(t_min, axis=-1)
        t_exit = np.min(t_max, axis=-1)
        hit = (t_exit >= t_enter) & (t_exit > _EPS)
        t = np.where(t_enter > _EPS, t_enter, t_exit)
        t = np.where(hit, t, np.inf)
        # the entering face is the slab that set t_enter
        axis = np.argmax(t_min, axis=-1)
        normals = np.zeros_like(directions)
        rows = np.arange(len(directions))
        normals[rows, axis] = -np.sign(directions[rows, axis])
        return t, normals

    def as_dict(self):
        return {'lower': self.lower.tolist(), 'upper': self.upper.tolist(),
                'color': self.color.tolist()}


class ToyScene(HasTraits):
    """
    Spheres and boxes standing on an infinite checkered ground plane, lit by
    one directional light.
    """

    spheres = List(Instance(Sphere))

    boxes = List(Instance(Box))

    ground_height = Float(-1.0)
    checker_size = PositiveFloat(0.5)
    checker_colors = Array(dtype=float, shape=(2, 3),
                           value=np.array([[0.9, 0.85, 0.7], [0.25, 0.3, 0.35]]))

    background = Array(dtype=float, shape=(3,), value=np.array([0.55, 0.65, 0.8]))

    light = Array(dtype=float, shape=(3,), value=np.array([0.4, 1.0, 0.6]))
    ambient = UnitFloat(0.3)

    # Radius of a sphere around the origin enclosing the interesting content
    extent = PositiveFloat(2.0)

    def as_dict(self):
        return {
            'spheres': [s.as_dict() for s in self.spheres],
            'boxes': [b.as_dict() for b in self.boxes],
            'ground_height': self.ground_height,
            'checker_size': self.checker_size,
            'background': self.background.tolist(),
            'ambient': self.ambient}


def default_toy_scene():
    return ToyScene(
        spheres=[
            Sphere(center=np.array([0.0, -0.2, 0.0]), radius=0.8,
                   color=np.array([0.85, 0.25, 0.2])),
            Sphere(center=np.array([1.3, -0.55, 0.7]), radius=0.45,
                   color=np.array([0.2, 0.7, 0.3]))],
        boxes=[
            Box(lower=np.array([-1.7, -1.0, -0.5]), upper=np.array([-0.9, -0.2, 0.3]),
                color=np.array([0.25, 0.35, 0.9]))])


def trace(scene, origins, directions, far):
    """
    Shade rays against `scene`.

    Returns
    -------
    colors : (N, 3)
    depth : (N,)
        Distance to the first hit, `far` where nothing is hit before `far`.
    """
    n = len(origins)
    best = np.full(n, np.inf)
    normals = np.zeros((n, 3))
    albedo = np.broadcast_to(scene.background, (n, 3)).copy()

    for shape in list(scene.spheres) + list(scene.boxes):
        t, nrm = shape.intersect(origins, directions)
        closer = t < best
        best[closer] = t[closer]
        normals[closer] = nrm[closer]
        albedo[closer] = shape.color

    with np.errstate(divide='ignore', invalid='ignore'):
        t_ground = (scene.ground_height - origins[:, 1]) / directions[:, 1]
    t_ground = np.where(np.isfinite(t_ground) & (t_ground > _EPS), t_ground, np.inf)
    closer = t_ground < best
    best[closer] = t_ground[closer]
    normals[closer] = np.array([0.0, 1.0, 0.0])
    hit_points = origins + np.where(np.isfinite(best), best, 0)[:, None] * directions
    checker = (np.floor(hit_points[:, 0] / scene.checker_size)
               + np.floor(hit_points[:, 2] / scene.checker_size)).astype(int) % 2
    albedo[closer] = scene.checker_colors[checker[closer]]

    hit = best < far
    light = scene.light / np.linalg.norm(scene.light)
    lambert = np.clip(normals @ light, 0.0, 1.0)
    shade = scene.ambient + (1 - scene.ambient) * lambert
    colors = np.where(hit[:, None], albedo * shade[:, None], scene.background)
    depth = np.where(hit, best, far)
    return np.clip(colors, 0.0, 1.0), depth


def render_toy_scene(scene, cam):
    """
    Ray trace `scene` through every pixel center of `cam`.

    Returns
    -------
    image : (H, W, 3) float array
    depth : (H, W) float array
    """
    cam.check()
    rows, cols = cam.pixel_grid()
    origins, directions = camera_rays(cam, rows, cols)
    colors, depth = trace(scene, origins, directions, cam.far)
    return (colors.reshape(cam.height, cam.width, 3),
            depth.reshape(cam.height, cam.width))


class CameraRig(HasTraits):
    """ Cameras on a ring around the origin, all looking at the scene center. """

    n_views = PositiveInt(12)
    width = PositiveInt(96)
    height = PositiveInt(72)
    focal = PositiveFloat(90.0)
    radius = PositiveFloat(4.5)
    elevation = Float(1.2)
    arc = PositiveFloat(120.0)  # degrees
    near = PositiveFloat(1.5)
    far = PositiveFloat(9.0)

    def poses(self):
        angles = np.deg2rad(np.linspace(-self.arc / 2, self.arc / 2, self.n_views))
        return [look_at((self.radius * np.sin(a), self.elevation, self.radius * np.cos(a)),
                        (0.0, -0.3, 0.0))
                for a in angles]

    def cameras(self):
        return [make_camera(pose, self.focal, self.width, self.height, self.near, self.far)
                for pose in self.poses()]

    def as_dict(self):
        return {
            'n_views': self.n_views, 'width': self.width, 'height': self.height,
            'focal': self.focal, 'radius': self.radius, 'elevation': self.elevation,
            'arc': self.arc, 'near': self.near, 'far': self.far}
