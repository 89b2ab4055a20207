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
Stratified sampling, hierarchical resampling and differentiable volume
rendering.
"""

import numpy as np

from traits.api import HasTraits, Any, Bool, Property

from . import autodiff as ad
from .constants import N_COARSE, N_FINE
from .custom_traits import PositiveInt, UInt, UFloat, PositiveFloat
from .errors import ConfigurationError
from .geometry import camera_rays


def as_generator(seed):
    """ Accept a seed, a numpy Generator or None (deterministic placement). """
    if seed is None or isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


class RenderSettings(HasTraits):
    """ Sampling parameters shared by training and rendering. """

    near = UFloat(0.0)
    far = PositiveFloat(1.0)

    n_coarse = PositiveInt(N_COARSE)
    n_fine = UInt(N_FINE)

    # Jitter samples inside their bins (training only)
    jitter = Bool(True)

    n_samples = Property(depends_on='n_coarse, n_fine')

    def _get_n_samples(self):
        return self.n_coarse + self.n_fine

    def check(self):
        if not self.near < self.far:
            raise ConfigurationError(
                'Near bound (%g) must be below far bound (%g).' % (self.near, self.far))
        return self


class RaySample(HasTraits):
    """
    Samples along a bundle of rays.

    Colors and densities may be `Var` objects; weights and transmittances are
    filled in by `volume_render`.
    """

    # Sample distances, shape (R, N), strictly increasing along N
    t = Any

    # Interval widths, shape (R, N)
    deltas = Any

    # Per-sample RGB, shape (R, N, 3)
    colors = Any

    # Per-sample density >= 0, shape (R, N)
    sigmas = Any

    weights = Any
    transmittances = Any


def stratified_samples(near, far, n, jitter=False, seed=None, n_rays=1):
    """
    One sample per equal-width bin of [near, far].

    Bin midpoints without jitter, uniform inside the bin with jitter.

    Returns
    -------
    t : array, shape (n_rays, n)
    """
    if not near < far:
        raise ValueError('near (%g) must be below far (%g)' % (near, far))
    if n < 1:
        raise ValueError('Need at least one sample, got %d' % n)
    edges = np.linspace(near, far, n + 1)
    lower, width = edges[:-1], (far - near) / n
    if jitter:
        rng = as_generator(seed)
        if rng is None:
            rng = np.random.default_rng()
        u = rng.uniform(0.0, 1.0, size=(n_rays, n))
    else:
        u = np.full((n_rays, n), 0.5)
    return lower + u * width


def interval_widths(t, far):
    """ delta_i = t_{i+1} - t_i, and far - t_N for the last sample. """
    t = np.asarray(t)
    return np.concatenate([np.diff(t, axis=-1), far - t[..., -1:]], axis=-1)


def composite(sigmas, colors, deltas):
    """
    Volume rendering quadrature.

        T_i = exp(-sum_{j<i} sigma_j delta_j)
        w_i = T_i (1 - exp(-sigma_i delta_i))
        C   = sum_i w_i c_i

    Returns
    -------
    rgb, weights, transmittances
    """
    optical = ad.mul(sigmas, deltas)
    transmittances = ad.exp(ad.neg(ad.cumsum_exclusive(optical, axis=-1)))
    alpha = ad.sub(1.0, ad.exp(ad.neg(optical)))
    weights = ad.mul(transmittances, alpha)
    lead = ad.value_of(weights).shape
    rgb = ad.reduce_sum(
        ad.mul(ad.reshape(weights, lead + (1,)), colors), axis=-2)
    return rgb, weights, transmittances


def volume_render(samples):
    """
    Render a `RaySample` bundle and store its weights and transmittances.

    Returns
    -------
    rgb, weights, transmittances
    """
    rgb, weights, transmittances = composite(
        samples.sigmas, samples.colors, samples.deltas)
    samples.weights = weights
    samples.transmittances = transmittances
    return rgb, weights, transmittances


def hierarchical_resample(weights, edges, n_fine, seed=None):
    """
    Draw `n_fine` distances per ray from the piecewise-constant density of the
    coarse weights over the bins `edges`.

    Parameters
    ----------
    weights : array, shape (R, N)
    edges : array, shape (N + 1,) or (R, N + 1)
    n_fine : int
    seed : int, Generator or None
        None places the samples at the CDF midpoints.

    Returns
    -------
    t_fine : array, shape (R, n_fine), sorted
    """
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0):
        raise ValueError('Weights must be non-negative.')
    n_rays, n_bins = weights.shape
    edges = np.broadcast_to(np.asarray(edges, dtype=float), (n_rays, n_bins + 1))

    totals = weights.sum(axis=-1, keepdims=True)
    empty = totals[:, 0] <= 0
    pdf = np.where(empty[:, None], 1.0 / n_bins, weights / np.where(totals > 0, totals, 1.0))
    cdf = np.concatenate([np.zeros((n_rays, 1)), np.cumsum(pdf, axis=-1)], axis=-1)
    cdf[:, -1] = 1.0

    rng = as_generator(seed)
    if rng is None:
        u = np.broadcast_to((np.arange(n_fine) + 0.5) / n_fine, (n_rays, n_fine))
    else:
        u = np.sort(rng.uniform(0.0, 1.0, size=(n_rays, n_fine)), axis=-1)

    # First bin whose upper CDF value exceeds u; bins of zero mass are never
    # picked because their CDF does not rise.
    idx = np.sum(u[:, :, None] >= cdf[:, None, :], axis=-1) - 1
    idx = np.clip(idx, 0, n_bins - 1)

    rows = np.arange(n_rays)[:, None]
    c_lo = cdf[rows, idx]
    mass = pdf[rows, idx]
    frac = np.clip((u - c_lo) / np.where(mass > 0, mass, 1.0), 0.0, 1.0)
    lo, hi = edges[rows, idx], edges[rows, idx + 1]
    return lo + frac * (hi - lo)


class RenderResult(HasTraits):
    """ Output of `render_rays`. """

    rgb = Any
    weights = Any
    t = Any
    points = Any
    mid_points = Any

    # Only set when a separate coarse field is trained
    rgb_coarse = Any


def render_rays(field, params, origins, directions, settings, seed=None,
                coarse_field=None, coarse_params=None):
    """
    Render a bundle of rays through `field` with a coarse and a fine pass.

    The coarse pass only places the fine samples. With a shared field it runs
    without a tape; with a separate `coarse_field` it is differentiated as
    well and its color returned as `rgb_coarse`. The fine pass evaluates the
    sorted union of coarse and fine samples.

    Parameters
    ----------
    field : callable
        field(params, points, directions) -> (colors, sigmas)
    params : dict
        Parameter blocks, `Var` objects when rendering on a tape.
    origins, directions : arrays or Var, shape (R, 3)
    settings : RenderSettings
    seed : int, Generator or None
    """
    rng = as_generator(seed)
    vo, vd = ad.value_of(origins), ad.value_of(directions)
    n_rays = vo.shape[0]
    near, far = settings.near, settings.far
    jitter = settings.jitter and rng is not None

    dtype = vo.dtype if np.issubdtype(vo.dtype, np.floating) else np.dtype(float)
    t_coarse = stratified_samples(
        near, far, settings.n_coarse, jitter=jitter, seed=rng, n_rays=n_rays).astype(dtype)

    result = RenderResult()
    if coarse_field is not None:
        rgb_c, weights_c = _render_samples(
            coarse_field, coarse_params, origins, directions, t_coarse, far)[:2]
        result.rgb_coarse = rgb_c
        coarse_weights = ad.value_of(weights_c)
    elif settings.n_fine > 0:
        raw = {name: ad.value_of(block) for name, block in params.items()}
        coarse_weights = _render_samples(field, raw, vo, vd, t_coarse, far)[1]

    if settings.n_fine > 0:
        edges = np.linspace(near, far, settings.n_coarse + 1)
        t_fine = hierarchical_resample(
            coarse_weights, edges, settings.n_fine, seed=rng if jitter else None)
        t = np.sort(np.concatenate([t_coarse, t_fine.astype(dtype)], axis=-1), axis=-1)
    else:
        t = t_coarse

    rgb, weights, points = _render_samples(field, params, origins, directions, t, far)
    result.rgb = rgb
    result.weights = weights
    result.t = t
    result.points = points
    result.mid_points = ad.getitem(points, (slice(None), t.shape[-1] // 2, slice(None)))
    return result


def sample_points(origins, directions, t):
    """ o + t d for every sample, shape (R, N, 3). """
    n_rays, n = t.shape
    o = ad.reshape(origins, (n_rays, 1, 3))
    d = ad.reshape(directions, (n_rays, 1, 3))
    return ad.add(o, ad.mul(t[..., None], d))


def _render_samples(field, params, origins, directions, t, far):
    n_rays, n = t.shape
    points = sample_points(origins, directions, t)
    dirs = ad.mul(ad.reshape(directions, (n_rays, 1, 3)), np.ones((1, n, 1), dtype=t.dtype))
    colors, sigmas = field(params, points, dirs)
    rgb, weights, _ = composite(sigmas, colors, interval_widths(t, far))
    return rgb, weights, points


def render_image(field, params, cam, settings, chunk=4096, coarse_field=None):
    """
    Render every pixel of `cam` without a tape.

    Sampling is deterministic: bin midpoints and CDF-midpoint fine samples.

    Returns
    -------
    image : array, shape (H, W, 3), clamped to [0, 1]
    """
    raw = {name: ad.value_of(block) for name, block in params.items()}
    rows, cols = cam.pixel_grid()
    origins, directions = camera_rays(cam, rows, cols)
    dtype = next(iter(raw.values())).dtype if raw else float
    origins, directions = origins.astype(dtype), directions.astype(dtype)
    out = np.empty((rows.size, 3), dtype=dtype)
    for start in range(0, rows.size, chunk):
        stop = start + chunk
        result = render_rays(
            field, raw, origins[start:stop], directions[start:stop], settings,
            coarse_field=coarse_field, coarse_params=raw if coarse_field is not None else None)
        out[start:stop] = result.rgb
    return np.clip(out, 0.0, 1.0).reshape(cam.height, cam.width, 3)
