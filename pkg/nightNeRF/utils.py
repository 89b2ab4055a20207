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
Small helpers shared by the commands.
"""

import logging
import os

import numpy as np

LOG_FORMAT = '%(asctime)s %(levelname)-7s %(name)s: %(message)s'


def configure_logging(verbose=False):
    """ Set up the root handler once per process. """
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format=LOG_FORMAT)
    # matplotlib font discovery is chatty at DEBUG
    logging.getLogger('matplotlib').setLevel(logging.WARNING)


def ensure_directory(path):
    os.makedirs(path, exist_ok=True)
    return path


def parse_size(text):
    """ 'WxH' -> (W, H) """
    try:
        width, height = (int(v) for v in text.lower().split('x'))
    except ValueError:
        raise ValueError('Size must look like 96x72, got %r' % text)
    if width < 1 or height < 1:
        raise ValueError('Size must be positive, got %r' % text)
    return width, height


def parse_views(text, n_views, default):
    """ 'all', 'train', 'eval' or comma separated view ids. """
    if text in (None, ''):
        return list(default)
    if text == 'all':
        return list(range(n_views))
    views = [int(v) for v in text.split(',')]
    for view in views:
        if not 0 <= view < n_views:
            raise ValueError('View %d does not exist (have %d views).' % (view, n_views))
    return views


def resize_camera(cam, width, height):
    """ The same camera at another resolution, field of view unchanged. """
    scale_x = width / cam.width
    scale_y = height / cam.height
    new = cam.clone_traits()
    new.width = width
    new.height = height
    new.focal = cam.focal * scale_x
    new.cx = cam.cx * scale_x
    new.cy = cam.cy * scale_y
    return new


def mean_intensity(image):
    """ Mean intensity on the 0-255 scale. """
    return float(np.mean(image) * 255)
