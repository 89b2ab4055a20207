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
Image fidelity metrics.
"""

import numpy as np
from scipy import ndimage

from traits.api import HasTraits, Float, List, Str, Tuple, Property

from .constants import PSNR_CAP

SSIM_SIGMA = 1.5
SSIM_RADIUS = 5  # 11 x 11 window
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _check_pair(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError('Image sizes differ: %s vs %s' % (a.shape, b.shape))
    return a, b


def psnr(a, b, cap=PSNR_CAP):
    """ 10 log10(1 / MSE) for images in [0, 1], at most `cap` dB. """
    a, b = _check_pair(a, b)
    mse = np.mean((a - b) ** 2)
    if mse <= 10 ** (-cap / 10):
        return float(cap)
    return float(-10 * np.log10(mse))


def ssim(a, b):
    """
    Mean structural similarity of two images in [0, 1], per channel with a
    Gaussian window (sigma 1.5, 11 x 11), averaged over channels.
    """
    a, b = _check_pair(a, b)
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2

    def blur(x):
        return ndimage.gaussian_filter(x, SSIM_SIGMA, mode='reflect',
                                       truncate=SSIM_RADIUS / SSIM_SIGMA)

    values = []
    for ch in range(a.shape[-1]):
        x, y = a[..., ch], b[..., ch]
        mu_x, mu_y = blur(x), blur(y)
        var_x = blur(x * x) - mu_x * mu_x
        var_y = blur(y * y) - mu_y * mu_y
        cov = blur(x * y) - mu_x * mu_y
        num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
        den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
        values.append(np.mean(num / den))
    return float(np.mean(values))


class MetricReport(HasTraits):
    """ Per-view and mean PSNR (dB) and SSIM. """

    # (name, psnr, ssim)
    views = List(Tuple(Str, Float, Float))

    mean_psnr = Property(depends_on='views[]')
    mean_ssim = Property(depends_on='views[]')

    def _get_mean_psnr(self):
        return float(np.mean([v[1] for v in self.views])) if self.views else float('nan')

    def _get_mean_ssim(self):
        return float(np.mean([v[2] for v in self.views])) if self.views else float('nan')

    def summary(self):
        """ e.g. '19.31 / 0.5853' """
        return '%.2f / %.4f' % (self.mean_psnr, self.mean_ssim)

    def as_rows(self):
        rows = [{'view': n, 'psnr': '%.4f' % p, 'ssim': '%.6f' % s} for n, p, s in self.views]
        rows.append({'view': 'mean', 'psnr': '%.4f' % self.mean_psnr,
                     'ssim': '%.6f' % self.mean_ssim})
        return rows


def evaluate(renders, references, names=None):
    """ Metric report of matched (render, reference) image pairs. """
    if len(renders) != len(references):
        raise ValueError('Got %d renders for %d references.' % (len(renders), len(references)))
    if names is None:
        names = ['view_%03d' % i for i in range(len(renders))]
    views = []
    for name, render, reference in zip(names, renders, references):
        views.append((str(name), psnr(render, reference), ssim(render, reference)))
    return MetricReport(views=views)
