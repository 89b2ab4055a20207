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
Pinhole cameras, rays and SE(3) screw motions.

Cameras are right-handed and look down their local -z axis. Pixels are indexed
(row, col) with rows growing downwards; integer coordinates are pixel centers.
"""

import numpy as np

from traits.api import HasTraits, Array, Float, Int, Tuple, Property

from . import autodiff as ad
from .custom_traits import PositiveFloat, PositiveInt, UFloat
from .errors import ConfigurationError

# Below this squared angle the Rodrigues coefficients are evaluated by their
# Taylor series. Four terms are exact to double precision up to here.
SERIES_THETA_SQ = 1e-4


class Camera(HasTraits):
    """ A pinhole camera with a 3x4 camera-to-world pose. """

    pose = Array(dtype=float, shape=(3, 4), value=np.eye(3, 4))

    focal = PositiveFloat(50.0)  # pixels

    cx = Float  # principal point column, pixels
    cy = Float  # principal point row, pixels

    width = PositiveInt(1)
    height = PositiveInt(1)

    near = UFloat(0.0)  # scene units
    far = PositiveFloat(1.0)

    rotation = Property(depends_on='pose')
    center = Property(depends_on='pose')

    def _get_rotation(self):
        return self.pose[:, :3]

    def _get_center(self):
        return self.pose[:, 3]

    # Input validation
    invalid = Property(depends_on='pose, near, far')

    def _get_invalid(self):
        return bool(self.invalid_reasons())

    def invalid_reasons(self):
        reasons = []
        rot = self.rotation
        if np.max(np.abs(rot.T @ rot - np.eye(3))) > 1e-9:
            reasons.append('Pose rotation is not orthonormal.')
        if not self.near < self.far:
            reasons.append('Near bound (%g) must be below far bound (%g).' % (self.near, self.far))
        return '\n'.join(reasons)

    def check(self):
        reasons = self.invalid_reasons()
        if reasons:
            raise ConfigurationError(reasons)
        return self

    def in_bounds(self, rows, cols):
        rows, cols = np.asarray(rows), np.asarray(cols)
        return (rows >= 0) & (rows <= self.height - 1) & (cols >= 0) & (cols <= self.width - 1)

    def pixel_grid(self):
        """ (rows, cols) of every pixel in row-major order. """
        rows, cols = np.meshgrid(
            np.arange(self.height), np.arange(self.width), indexing='ij')
        return rows.reshape(-1), cols.reshape(-1)

    def as_dict(self):
        return {
            'pose': self.pose.reshape(-1).tolist(),
            'focal': self.focal,
            'cx': self.cx,
            'cy': self.cy,
            'width': self.width,
            'height': self.height,
            'near': self.near,
            'far': self.far}

    def __repr__(self):
        return 'Camera(%dx%d, f=%g, center=%s)' % (
            self.width, self.height, self.focal, np.round(self.center, 4))


def make_camera(pose, focal, width, height, near, far, cx=None, cy=None):
    """ A checked `Camera`; the principal point defaults to the image center. """
    cam = Camera(
        pose=np.asarray(pose, dtype=float).reshape(3, 4), focal=focal,
        width=width, height=height, near=near, far=far,
        cx=width / 2.0 if cx is None else cx,
        cy=height / 2.0 if cy is None else cy)
    return cam.check()


class Ray(HasTraits):
    """ A single ray o + t d with the pixel it was shot through. """

    origin = Array(dtype=float, shape=(3,))
    direction = Array(dtype=float, shape=(3,))

    view = Int(-1)
    pixel = Tuple(Float, Float)


class RayBatch(HasTraits):
    """ Rays drawn from the training views, with their target colors. """

    view_ids = Array(dtype=int)
    rows = Array(dtype=float)
    cols = Array(dtype=float)

    # Kept in the training precision
    origins = Array
    directions = Array

    # Observed (degraded) colors, shape (B, 3)
    targets = Array

    # Set by ctp.partition_rays
    clear = Array(dtype=bool)

    size = Property(depends_on='view_ids')

    def _get_size(self):
        return len(self.view_ids)


class ScrewMotion(HasTraits):
    """ Element (r; v) of se(3): axis-angle rotation and translation. """

    r = Array(dtype=float, shape=(3,), value=np.zeros(3))  # radians
    v = Array(dtype=float, shape=(3,), value=np.zeros(3))  # scene units

    def __neg__(self):
        return ScrewMotion(r=-self.r, v=-self.v)

    def as_vector(self):
        return np.concatenate([self.r, self.v])


class RigidTransform(HasTraits):
    """ x -> R x + t """

    rotation = Array(dtype=float, shape=(3, 3), value=np.eye(3))
    translation = Array(dtype=float, shape=(3,), value=np.zeros(3))

    def apply(self, points):
        return np.asarray(points) @ self.rotation.T + self.translation

    def rotate(self, vectors):
        return np.asarray(vectors) @ self.rotation.T

    def compose(self, other):
        """ self after other """
        return RigidTransform(
            rotation=self.rotation @ other.rotation,
            translation=self.rotation @ other.translation + self.translation)

    def inverse(self):
        rot_t = self.rotation.T
        return RigidTransform(rotation=rot_t, translation=-rot_t @ self.translation)

    def matrix(self):
        out = np.eye(4)
        out[:3, :3] = self.rotation
        out[:3, 3] = self.translation
        return out


# ------------------------------------------------------------------------------
# RAYS
# ------------------------------------------------------------------------------


def camera_rays(cam, rows, cols):
    """
    Rays through many pixels of one camera.

    Returns
    -------
    origins, directions : arrays of shape (N, 3)
    """
    rows = np.asarray(rows, dtype=float).reshape(-1)
    cols = np.asarray(cols, dtype=float).reshape(-1)
    if not np.all(cam.in_bounds(rows, cols)):
        raise ValueError('Pixel outside of the %dx%d image.' % (cam.height, cam.width))
    local = np.stack([
        (cols - cam.cx) / cam.focal,
        -(rows - cam.cy) / cam.focal,
        -np.ones_like(rows)], axis=-1)
    directions = local @ cam.rotation.T
    directions /= np.linalg.norm(directions, axis=-1, keepdims=True)
    origins = np.broadcast_to(cam.center, directions.shape).copy()
    return origins, directions


def camera_ray(cam, pixel, view=-1):
    """ The ray through `pixel` = (row, col) of `cam`. """
    row, col = pixel
    origins, directions = camera_rays(cam, [row], [col])
    return Ray(origin=origins[0], direction=directions[0], view=view,
               pixel=(float(row), float(col)))


def project(cam, points):
    """
    Project world points into `cam`.

    Returns
    -------
    rows, cols : arrays
        Sub-pixel image coordinates.
    distance : array
        Distance from the camera center, comparable to ray depth.
    in_front : bool array
        The point lies in front of the camera.
    """
    points = np.asarray(points, dtype=float)
    local = (points - cam.center) @ cam.rotation
    z = -local[..., 2]
    in_front = z > 1e-9
    safe_z = np.where(in_front, z, 1.0)
    cols = cam.cx + cam.focal * local[..., 0] / safe_z
    rows = cam.cy - cam.focal * local[..., 1] / safe_z
    distance = np.linalg.norm(points - cam.center, axis=-1)
    return rows, cols, distance, in_front


def look_at(eye, target, up=(0.0, 1.0, 0.0)):
    """ Camera-to-world pose of a camera at `eye` looking at `target`. """
    eye = np.asarray(eye, dtype=float)
    z_axis = eye - np.asarray(target, dtype=float)
    z_axis /= np.linalg.norm(z_axis)
    x_axis = np.cross(np.asarray(up, dtype=float), z_axis)
    x_axis /= np.linalg.norm(x_axis)
    y_axis = np.cross(z_axis, x_axis)
    return np.stack([x_axis, y_axis, z_axis, eye], axis=1)


# ------------------------------------------------------------------------------
# SE(3)
# ------------------------------------------------------------------------------


def _series(s, coeffs):
    out = np.zeros_like(s)
    for c in reversed(coeffs):
        out = out * s + c
    return out


def _coefficient(closed_form, series_coeffs):
    """
    Build a function of theta^2 that switches to a Taylor series near zero.
    """
    def fn(s):
        s = np.asarray(s)
        dtype = s.dtype if np.issubdtype(s.dtype, np.floating) else np.dtype(float)
        # the closed forms cancel badly in single precision
        s = s.astype(np.float64)
        small = s < SERIES_THETA_SQ
        safe = np.where(small, 1.0, s)
        theta = np.sqrt(safe)
        out = np.where(small, _series(s, series_coeffs), closed_form(theta))
        return out.astype(dtype, copy=False)
    return fn


# A = sin(t)/t, B = (1 - cos t)/t^2, C = (t - sin t)/t^3, all as functions
# of s = t^2, with their derivatives d/ds.
_coef_a = _coefficient(
    lambda t: np.sin(t) / t,
    (1.0, -1 / 6, 1 / 120, -1 / 5040, 1 / 362880))
_coef_a_ds = _coefficient(
    lambda t: (t * np.cos(t) - np.sin(t)) / (2 * t ** 3),
    (-1 / 6, 2 / 120, -3 / 5040, 4 / 362880))
_coef_b = _coefficient(
    lambda t: (1 - np.cos(t)) / t ** 2,
    (1 / 2, -1 / 24, 1 / 720, -1 / 40320, 1 / 3628800))
_coef_b_ds = _coefficient(
    lambda t: (t * np.sin(t) - 2 * (1 - np.cos(t))) / (2 * t ** 4),
    (-1 / 24, 2 / 720, -3 / 40320, 4 / 3628800))
_coef_c = _coefficient(
    lambda t: (t - np.sin(t)) / t ** 3,
    (1 / 6, -1 / 120, 1 / 5040, -1 / 362880, 1 / 39916800))
_coef_c_ds = _coefficient(
    lambda t: (t * (1 - np.cos(t)) - 3 * (t - np.sin(t))) / (2 * t ** 5),
    (-1 / 120, 2 / 5040, -3 / 362880, 4 / 39916800))


def rodrigues_coefficients(theta_sq):
    """ Differentiable (A, B, C) coefficients of the SO(3)/SE(3) exponentials. """
    return (
        ad.elementwise(theta_sq, _coef_a, _coef_a_ds, 'rodrigues_a'),
        ad.elementwise(theta_sq, _coef_b, _coef_b_ds, 'rodrigues_b'),
        ad.elementwise(theta_sq, _coef_c, _coef_c_ds, 'rodrigues_c'))


def rotate_vectors(r, x, coeffs=None):
    """
    Rotate `x` by the axis-angle vectors `r` (last axis 3, broadcastable).

    R x = x + A (r x x) + B r x (r x x)
    """
    if coeffs is None:
        coeffs = rodrigues_coefficients(ad.dot(r, r))
    a, b, _ = coeffs
    rx = ad.cross(r, x)
    return ad.add(x, ad.add(ad.mul(a, rx), ad.mul(b, ad.cross(r, rx))))


def screw_translation(r, v, coeffs=None, raw_translation=False):
    """ Translation part V(r) v of exp((r; v)), or v itself if `raw_translation`. """
    if raw_translation:
        return v
    if coeffs is None:
        coeffs = rodrigues_coefficients(ad.dot(r, r))
    _, b, c = coeffs
    rv = ad.cross(r, v)
    return ad.add(v, ad.add(ad.mul(b, rv), ad.mul(c, ad.cross(r, rv))))


def se3_exp(s, raw_translation=False):
    """
    Exponential of a `ScrewMotion`.

    Returns
    -------
    transform : RigidTransform
    """
    r = np.asarray(s.r, dtype=float)
    v = np.asarray(s.v, dtype=float)
    coeffs = rodrigues_coefficients(ad.dot(r[None], r[None]))
    rotation = rotate_vectors(r[None], np.eye(3), coeffs).T
    translation = screw_translation(r[None], v[None], coeffs, raw_translation)[0]
    return RigidTransform(rotation=rotation, translation=translation)


def rigid_transform_ray(ray, transform):
    """ Map the origin affinely and the direction by the rotation only. """
    direction = transform.rotate(ray.direction)
    return Ray(
        origin=transform.apply(ray.origin),
        direction=direction / np.linalg.norm(direction),
        view=ray.view,
        pixel=ray.pixel)


def transform_rays(origins, directions, r, v, raw_translation=False):
    """
    Differentiable rigid transform of ray bundles by screws (r; v).

    All arguments broadcast against each other along the leading axes; the
    last axis has length 3.
    """
    coeffs = rodrigues_coefficients(ad.dot(r, r))
    translation = screw_translation(r, v, coeffs, raw_translation)
    new_origins = ad.add(rotate_vectors(r, origins, coeffs), translation)
    new_directions = ad.normalize(rotate_vectors(r, directions, coeffs))
    return new_origins, new_directions
