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
Writing checkpoints and inspection images.
"""

import json
import logging
import os
import zipfile

import numpy as np

from .constants import CHECKPOINT_FORMAT, CHECKPOINT_VERSION
from .dataset import write_image

logger = logging.getLogger(__name__)

# Fixed zip entry timestamp, so equal states give equal files
_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


def checkpoint_header(state, cfg, extra=None):
    store = state.store
    header = {
        'format': CHECKPOINT_FORMAT,
        'version': CHECKPOINT_VERSION,
        'iteration': state.iteration,
        'blocks': {
            name: {
                'shape': list(block.shape),
                'dtype': str(block.dtype),
                'trainable': bool(store.trainable[name])}
            for name, block in sorted(store.blocks.items())},
        'config': cfg.as_dict(),
        'n_views': state.model.rbk.n_views,
        'near': state.model.settings.near,
        'far': state.model.settings.far}
    if extra:
        header.update(extra)
    return header


def _write_entry(archive, name, array):
    info = zipfile.ZipInfo(name + '.npy', date_time=_ZIP_DATE)
    info.compress_type = zipfile.ZIP_STORED
    with archive.open(info, 'w', force_zip64=True) as f:
        np.lib.format.write_array(f, np.asarray(array), allow_pickle=False)


def save_checkpoint(path, state, cfg, extra=None):
    """
    Write parameters, Adam moments and a JSON header to an .npz archive.

    Entries are `param/<block>`, `adam_m/<block>`, `adam_v/<block>` and
    `header`. The file is replaced atomically.
    """
    header = checkpoint_header(state, cfg, extra)
    tmp = path + '.tmp'
    with zipfile.ZipFile(tmp, 'w') as archive:
        _write_entry(archive, 'header', np.array(json.dumps(header, sort_keys=True)))
        for name in sorted(state.store.blocks):
            _write_entry(archive, 'param/' + name, state.store.blocks[name])
        for name in sorted(state.first_moments):
            _write_entry(archive, 'adam_m/' + name, state.first_moments[name])
            _write_entry(archive, 'adam_v/' + name, state.second_moments[name])
    os.replace(tmp, path)
    logger.debug('Saved checkpoint of iteration %d to %s', state.iteration, path)
    return path


def flow_to_rgb(flow, scale=None):
    """
    Color-code a match map: R and G hold the column and row offsets around
    0.5, B marks valid matches. Invalid pixels are black.

    Parameters
    ----------
    flow : (H, W, 2) matched (row, col), -1 where invalid
    scale : float or None
        Offset mapped to full intensity; defaults to the largest offset.
    """
    h, w = flow.shape[:2]
    rows, cols = np.meshgrid(np.arange(h), np.arange(w), indexing='ij')
    valid = flow[..., 0] >= 0
    d_row = np.where(valid, flow[..., 0] - rows, 0.0)
    d_col = np.where(valid, flow[..., 1] - cols, 0.0)
    if scale is None:
        scale = max(np.max(np.abs(d_row)), np.max(np.abs(d_col)), 1.0)
    image = np.stack([
        0.5 + 0.5 * d_col / scale,
        0.5 + 0.5 * d_row / scale,
        np.ones_like(d_row)], axis=-1)
    image[~valid] = 0.0
    return np.clip(image, 0.0, 1.0)


def write_match(directory, a, b, flow, certainty):
    """ Flow and certainty images of the view pair (a, b). """
    stem = os.path.join(directory, 'match_%03d_%03d' % (a, b))
    write_image(stem + '_flow.png', flow_to_rgb(flow))
    write_image(stem + '_certainty.png', np.clip(certainty, 0.0, 1.0))
    return stem


def write_mask(directory, view, mask):
    """ Binary mask and its low-pass image as grayscale PNGs. """
    stem = os.path.join(directory, 'mask_%03d' % view)
    write_image(stem + '.png', mask.mask.astype(np.uint8) * 255)
    write_image(stem + '_lowpass.png', np.clip(mask.lowpass_image, 0.0, 1.0))
    return stem
