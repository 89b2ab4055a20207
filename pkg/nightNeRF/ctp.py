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
Camera trajectory prediction: frequency-domain masks that keep noise-dominated
rays away from the blur kernel, and the rigid blur kernel itself.
"""

import numpy as np

from traits.api import HasTraits, Array, Str, Property, cached_property

from . import autodiff as ad
from .constants import CTP_RADIUS, CTP_THRESHOLD, LUMA, N_MOTIONS
from .custom_traits import Intensity8, PositiveInt, UFloat, PositiveFloat
from .geometry import transform_rays
from .mlp import Dense


class Spectrum(HasTraits):
    """ Centered 2D DFT of one image channel; DC sits at (M // 2, N // 2). """

    values = Array(dtype=complex)

    shape = Property(depends_on='values')

    def _get_shape(self):
        return self.values.shape


class CtpMask(HasTraits):
    """ Binary per-pixel mask; 1 marks rays that may train the blur kernel. """

    mask = Array(dtype=np.uint8)

    radius = UFloat(CTP_RADIUS)

    threshold = Intensity8(CTP_THRESHOLD)

    # Real part of the low-passed grayscale image, in [0, 1] units
    lowpass_image = Array(dtype=float)

    # 'ctp', 'rgb' or 'none'
    mode = Str('ctp')

    clear_fraction = Property(depends_on='mask')

    def _get_clear_fraction(self):
        return float(np.mean(self.mask)) if self.mask.size else 0.0


def grayscale(image):
    """ Luma of an (H, W, 3) image. """
    return np.asarray(image, dtype=float) @ np.asarray(LUMA)


def dft2(channel):
    """
    Unnormalized forward DFT of a real 2D array, shifted so that DC is at the
    array center.
    """
    channel = np.asarray(channel, dtype=float)
    if channel.size == 0:
        raise ValueError('Cannot transform an empty array.')
    return Spectrum(values=np.fft.fftshift(np.fft.fft2(channel)))


def idft2(spec):
    """ Inverse of `dft2`, including the 1 / (M N) factor. Complex result. """
    return np.fft.ifft2(np.fft.ifftshift(spec.values))


def frequency_radius(shape):
    """ Distance of every centered coefficient from DC, in index units. """
    m, n = shape
    u = np.arange(m) - m // 2
    v = np.arange(n) - n // 2
    return np.sqrt(u[:, None] ** 2 + v[None, :] ** 2)


def lowpass(spec, r):
    """ Zero every coefficient further than `r` from DC. """
    if r < 0:
        raise ValueError('Filter radius must be >= 0, got %g' % r)
    keep = frequency_radius(spec.shape) <= r
    return Spectrum(values=np.where(keep, spec.values, 0))


def ctp_mask(image, r=CTP_RADIUS, T=CTP_THRESHOLD):
    """
    Low-pass mask of an RGB image in [0, 1].

    The grayscale image is low-pass filtered in the frequency domain and
    binarized at T on the 0-255 scale.
    """
    if not 0 <= T <= 255:
        raise ValueError('Threshold must be within 0-255, got %g' % T)
    filtered = np.real(idft2(lowpass(dft2(grayscale(image)), r)))
    mask = (filtered * 255 >= T).astype(np.uint8)
    return CtpMask(mask=mask, radius=r, threshold=T, lowpass_image=filtered, mode='ctp')


def rgb_threshold_mask(image, T=CTP_THRESHOLD):
    """ Plain intensity threshold of the grayscale image, without filtering. """
    gray = grayscale(image)
    mask = (gray * 255 >= T).astype(np.uint8)
    return CtpMask(mask=mask, radius=0, threshold=T, lowpass_image=gray, mode='rgb')


def full_mask(image):
    """ Every ray clear. """
    shape = np.asarray(image).shape[:2]
    return CtpMask(mask=np.ones(shape, dtype=np.uint8), radius=0, threshold=0,
                   lowpass_image=grayscale(image), mode='none')


def make_mask(image, mode='ctp', r=CTP_RADIUS, T=CTP_THRESHOLD):
    if mode == 'ctp':
        return ctp_mask(image, r, T)
    if mode == 'rgb':
        return rgb_threshold_mask(image, T)
    if mode == 'none':
        return full_mask(image)
    raise ValueError('Unknown mask mode %r' % mode)


def partition_rays(batch, masks):
    """
    Tag every ray of `batch` clear (mask 1) or noisy (mask 0).

    Parameters
    ----------
    batch : RayBatch
    masks : sequence of CtpMask, indexed by view id

    Returns
    -------
    batch : RayBatch
        The same batch with `clear` set.
    """
    clear = np.empty(batch.size, dtype=bool)
    for view in np.unique(batch.view_ids):
        sel = batch.view_ids == view
        mask = masks[view].mask
        rows = batch.rows[sel].astype(int)
        cols = batch.cols[sel].astype(int)
        if (np.any(rows < 0) or np.any(cols < 0)
                or np.any(rows >= mask.shape[0]) or np.any(cols >= mask.shape[1])):
            raise ValueError('Ray pixel outside the mask of view %d.' % view)
        clear[sel] = mask[rows, cols] == 1
    batch.clear = clear
    return batch


# ------------------------------------------------------------------------------
# RIGID BLUR KERNEL
# ------------------------------------------------------------------------------


class BlurKernelNet(HasTraits):
    """
    Per-view latent code -> k screw motions and k + 1 composition weights.

    Parameter blocks: <prefix>.latent, and the MLPs E (embedding), R and L
    (rotation and translation parts of the screws) and W (composition
    logits).
    """

    prefix = Str('rbk')

    n_views = PositiveInt(1)

    n_motions = PositiveInt(N_MOTIONS)

    latent_dim = PositiveInt(32)

    hidden = PositiveInt(64)

    # Scale of the initial latent codes and of the screw heads
    init_scale = PositiveFloat(1e-2)

    layers = Property(depends_on='prefix, n_motions, latent_dim, hidden')

    @cached_property
    def _get_layers(self):
        k = self.n_motions
        p = self.prefix
        return {
            'E': Dense(name=p + '.E', n_in=self.latent_dim, n_out=self.hidden, activation='relu'),
            'R': Dense(name=p + '.R', n_in=self.hidden, n_out=3 * k, activation='identity'),
            'L': Dense(name=p + '.L', n_in=self.hidden, n_out=3 * k, activation='identity'),
            'W': Dense(name=p + '.W', n_in=self.hidden, n_out=k + 1, activation='identity'),
        }

    @property
    def latent_name(self):
        return self.prefix + '.latent'

    def init(self, store, rng, dtype=np.float64):
        latent = rng.normal(0.0, 1.0, size=(self.n_views, self.latent_dim))
        store.add(self.latent_name, latent.astype(dtype))
        layers = self.layers
        layers['E'].init(store, rng, dtype=dtype)
        for key in ('R', 'L', 'W'):
            layers[key].init(store, rng, scale=self.init_scale, dtype=dtype)

    def __call__(self, params, view_ids):
        view_ids = np.asarray(view_ids)
        if np.any(view_ids < 0) or np.any(view_ids >= self.n_views):
            raise ValueError('Unknown view id in %s (have %d views).' % (
                np.unique(view_ids), self.n_views))
        single = view_ids.ndim == 0
        ids = view_ids.reshape(-1)
        k = self.n_motions
        layers = self.layers
        embedded = layers['E'](params, ad.take(params[self.latent_name], ids, axis=0))
        r = ad.reshape(layers['R'](params, embedded), (ids.size, k, 3))
        v = ad.reshape(layers['L'](params, embedded), (ids.size, k, 3))
        screws = ad.concat([r, v], axis=-1)
        weights = ad.softmax(layers['W'](params, embedded), axis=-1)
        if single:
            return screws[0], weights[0]
        return screws, weights

    def as_dict(self):
        return {
            'n_views': self.n_views,
            'n_motions': self.n_motions,
            'latent_dim': self.latent_dim,
            'hidden': self.hidden,
            'init_scale': self.init_scale}


def rbk_motions(net, params, view_id):
    """
    Screws (..., k, 6) as (r; v) and normalized weights (..., k + 1) of the
    given view(s).
    """
    return net(params, view_id)


def transformed_rays(origins, directions, screws, raw_translation=False):
    """
    The original rays followed by their k rigidly moved copies.

    Returns
    -------
    origins, directions : shape (B, k + 1, 3)
    """
    n_rays = ad.value_of(origins).shape[0]
    o = ad.reshape(origins, (n_rays, 1, 3))
    d = ad.reshape(directions, (n_rays, 1, 3))
    r = screws[..., :3]
    v = screws[..., 3:]
    moved_o, moved_d = transform_rays(o, d, r, v, raw_translation)
    return ad.concat([o, moved_o], axis=1), ad.concat([d, moved_d], axis=1)


def blur_compose(origins, directions, screws, weights, render_fn, raw_translation=False,
                 extra_fn=None):
    """
    Blurry color as the weighted sum of the renders of the original ray and
    its rigidly transformed copies.

    Parameters
    ----------
    origins, directions : shape (B, 3)
    screws : shape (B, k, 6)
    weights : shape (B, k + 1), summing to 1
    render_fn : callable
        render_fn(origins (M, 3), directions (M, 3)) -> RenderResult
    extra_fn : callable or None
        extra_fn(result, origins, directions) -> (M, 3) term added to every
        ray's color before the weighting.

    Returns
    -------
    blurred : shape (B, 3)
    colors : shape (B, k + 1, 3), index 0 is the sharp render
    result : RenderResult of all B (k + 1) rays
    """
    n_rays = ad.value_of(origins).shape[0]
    k1 = ad.value_of(weights).shape[-1]
    all_o, all_d = transformed_rays(origins, directions, screws, raw_translation)
    flat_o = ad.reshape(all_o, (n_rays * k1, 3))
    flat_d = ad.reshape(all_d, (n_rays * k1, 3))
    result = render_fn(flat_o, flat_d)
    rgb = result.rgb
    if extra_fn is not None:
        rgb = ad.add(rgb, extra_fn(result, flat_o, flat_d))
    colors = ad.reshape(rgb, (n_rays, k1, 3))
    blurred = ad.reduce_sum(ad.mul(ad.reshape(weights, (n_rays, k1, 1)), colors), axis=1)
    return blurred, colors, result
