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
Brightness preprocessing of low-light inputs (ScaleUp) and the synthetic
degradation that turns clean renders into dark, blurry, noisy training views.

Degradation order: darken, blur over the exposure trajectory, then add noise,
so the noise stays sharp regardless of camera shake.
"""

import numpy as np

from traits.api import HasTraits, Array, Bool, Either, List, Property

from .constants import (
    DARKEN_GAIN, DARKEN_GAMMA, EXPOSURE_FRAMES, NOISE_SIGNAL, NOISE_STD,
    SCALE_UP_TARGET_MEAN, SHAKE_FRACTION, SHAKE_ROTATION_DEG, SHAKE_TRANSLATION)
from .custom_traits import PositiveFloat, PositiveInt, UFloat, UnitFloat
from .errors import ConfigurationError
from .geometry import ScrewMotion, se3_exp
from .renderer import as_generator


class DegradeSpec(HasTraits):
    """ Parameters of the synthetic low-light degradation. """

    # Darkening v -> gain * v ** gamma
    gamma = PositiveFloat(DARKEN_GAMMA)
    gain = UnitFloat(DARKEN_GAIN)

    # Noise std ** 2 + signal * v, on the darkened signal
    noise_std = UFloat(NOISE_STD)
    noise_signal = UFloat(NOISE_SIGNAL)

    # Exposure path
    n_frames = PositiveInt(EXPOSURE_FRAMES)
    shake_fraction = UnitFloat(SHAKE_FRACTION)
    max_rotation = UFloat(SHAKE_ROTATION_DEG)  # degrees
    max_translation = UFloat(SHAKE_TRANSLATION)  # fraction of the scene diameter

    # Camera-to-world poses (3, 4) of one view's exposure, if known
    trajectory = List(Array(dtype=float, shape=(3, 4)))

    # ScaleUp of the degraded images; None selects the automatic gamma
    scale_gamma = Either(None, PositiveFloat)
    equalize = Bool(True)

    invalid = Property(depends_on='gain')

    def _get_invalid(self):
        return bool(self.invalid_reasons())

    def invalid_reasons(self):
        reasons = []
        if self.gain <= 0:
            reasons.append('Darkening gain must be in (0, 1].')
        return '\n'.join(reasons)

    def check(self):
        reasons = self.invalid_reasons()
        if reasons:
            raise ConfigurationError(reasons)
        return self

    def as_dict(self):
        return {
            'gamma': self.gamma,
            'gain': self.gain,
            'noise_std': self.noise_std,
            'noise_signal': self.noise_signal,
            'n_frames': self.n_frames,
            'shake_fraction': self.shake_fraction,
            'max_rotation': self.max_rotation,
            'max_translation': self.max_translation,
            'scale_gamma': self.scale_gamma,
            'equalize': self.equalize}


# ------------------------------------------------------------------------------
# SCALE UP
# ------------------------------------------------------------------------------


def equalize_histogram(image, bins=256):
    """
    Per-channel histogram equalization on `bins` levels.

    Level k maps to (cdf(k) - cdf_min) / (N - cdf_min); constant channels are
    returned unchanged.
    """
    image = np.asarray(image, dtype=float)
    levels = np.clip(np.round(image * (bins - 1)), 0, bins - 1).astype(int)
    out = np.empty_like(image)
    for ch in range(image.shape[-1]):
        lv = levels[..., ch]
        cdf = np.cumsum(np.bincount(lv.reshape(-1), minlength=bins))
        n = cdf[-1]
        cdf_min = cdf[lv.min()]
        if n == cdf_min:
            out[..., ch] = image[..., ch]
            continue
        lut = np.clip((cdf - cdf_min) / (n - cdf_min), 0.0, 1.0)
        out[..., ch] = lut[lv]
    return out


def scale_up(image, gamma, equalize=True):
    """
    Brighten a low-light image: per-channel power law v ** gamma, optionally
    followed by histogram equalization, clamped to [0, 1].
    """
    if gamma <= 0:
        raise ValueError('Gamma must be > 0, got %g' % gamma)
    out = np.power(np.clip(np.asarray(image, dtype=float), 0.0, 1.0), gamma)
    if equalize:
        out = equalize_histogram(out)
    return np.clip(out, 0.0, 1.0)


def auto_gamma(image, target=SCALE_UP_TARGET_MEAN, n_iter=60):
    """
    Gamma whose power law brings the mean intensity of `image` to `target`.

    Bisection in log space over [1e-3, 1e3]; the mean of v ** gamma falls
    monotonically with gamma.
    """
    image = np.clip(np.asarray(image, dtype=float), 0.0, 1.0)
    lo, hi = np.log(1e-3), np.log(1e3)
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        if np.mean(np.power(image, np.exp(mid))) > target:
            lo = mid
        else:
            hi = mid
    return float(np.exp(0.5 * (lo + hi)))


def preprocess(image, spec=None):
    """ ScaleUp with the gamma and equalization settings of `spec`. """
    spec = spec if spec is not None else DegradeSpec()
    gamma = spec.scale_gamma if spec.scale_gamma is not None else auto_gamma(image)
    return scale_up(image, gamma, spec.equalize)


# ------------------------------------------------------------------------------
# SYNTHESIS
# ------------------------------------------------------------------------------


def darken(image, spec):
    return spec.gain * np.power(np.clip(np.asarray(image, dtype=float), 0.0, 1.0), spec.gamma)


def synth_degrade(frames, spec, seed=None):
    """
    Degrade the clean frames rendered along one view's exposure trajectory.

    Parameters
    ----------
    frames : sequence of (H, W, 3) arrays in [0, 1]
    spec : DegradeSpec
    seed : int, Generator or None

    Returns
    -------
    image : (H, W, 3) float array in [0, 1]
    """
    frames = [np.asarray(f, dtype=float) for f in frames]
    if not frames:
        raise ValueError('Need at least one frame.')
    shape = frames[0].shape
    if any(f.shape != shape for f in frames):
        raise ValueError('All frames must have the same size, got %s.' % (
            sorted({f.shape for f in frames}),))
    if spec.trajectory and len(spec.trajectory) != len(frames):
        raise ValueError('Got %d frames for a trajectory of %d poses.' % (
            len(frames), len(spec.trajectory)))

    blurred = np.mean([darken(f, spec) for f in frames], axis=0)
    variance = spec.noise_std ** 2 + spec.noise_signal * blurred
    rng = as_generator(seed)
    if rng is None:
        rng = np.random.default_rng()
    noisy = blurred + rng.normal(size=shape) * np.sqrt(variance)
    return np.clip(noisy, 0.0, 1.0)


def random_screw(rng, max_rotation, max_translation):
    """ Screw with uniformly random directions and magnitudes within the bounds. """
    def random_vector(bound):
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        return direction * rng.uniform(0.0, bound)

    return ScrewMotion(r=random_vector(max_rotation), v=random_vector(max_translation))


def shake_pose(pose, transform):
    """ Apply a camera-frame rigid motion to a camera-to-world pose. """
    rot, center = pose[:, :3], pose[:, 3]
    return np.concatenate([
        rot @ transform.rotation,
        (rot @ transform.translation + center)[:, None]], axis=1)


def make_trajectory(pose, screw, n_frames):
    """
    Exposure path exp(s S) applied to `pose` for `n_frames` evenly spaced s in
    [0, 1]. The first pose is `pose` itself.
    """
    pose = np.asarray(pose, dtype=float).reshape(3, 4)
    if n_frames < 1:
        raise ValueError('Need at least one exposure frame, got %d' % n_frames)
    if n_frames == 1:
        return [pose.copy()]
    return [
        shake_pose(pose, se3_exp(ScrewMotion(r=s * screw.r, v=s * screw.v)))
        for s in np.linspace(0.0, 1.0, n_frames)]


def view_trajectory(pose, spec, rng, scene_diameter=1.0, shaken=True):
    """ Random exposure path of one view; unshaken views keep the single pose. """
    if not shaken:
        return make_trajectory(pose, ScrewMotion(), 1)
    screw = random_screw(
        rng, np.deg2rad(spec.max_rotation), spec.max_translation * scene_diameter)
    return make_trajectory(pose, screw, spec.n_frames)


def shaken_views(n_views, spec, rng):
    """ Bool per view, exactly round(shake_fraction * n_views) of them True. """
    n_shaken = int(round(spec.shake_fraction * n_views))
    flags = np.zeros(n_views, dtype=bool)
    flags[rng.permutation(n_views)[:n_shaken]] = True
    return flags


def quantize(image):
    """ [0, 1] float image -> uint8 """
    return np.round(np.clip(image, 0.0, 1.0) * 255).astype(np.uint8)
