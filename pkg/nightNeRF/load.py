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
Functions for restoring state from save data.
"""

import json
import os
import zipfile

import numpy as np

from .autodiff import ParameterStore
from .config import TrainConfig, apply_config
from .constants import CHECKPOINT_FORMAT, CHECKPOINT_VERSION
from .errors import CheckpointError, ConfigurationError
from .trainer import TrainState, build_model


def load_train_config(saved):
    """ Load a saved training configuration.

    Parameters
    ----------
    saved : dict
        Output of TrainConfig.as_dict(), restored from a JSON dump.
    """
    cfg = TrainConfig()
    apply_config([cfg], saved)
    return cfg


def read_checkpoint(path):
    """
    Raw contents of a checkpoint archive.

    Returns
    -------
    header : dict
    params, first_moments, second_moments : dict
        Block name -> array.
    """
    if not os.path.exists(path):
        raise CheckpointError('Checkpoint %s does not exist.' % path)
    try:
        archive = np.load(path, allow_pickle=False)
    except (OSError, ValueError, zipfile.BadZipFile) as exc:
        raise CheckpointError('Could not read checkpoint %s: %s' % (path, exc)) from exc
    with archive:
        if 'header' not in archive.files:
            raise CheckpointError('%s has no header entry.' % path)
        header = json.loads(str(archive['header']))
        if header.get('format') != CHECKPOINT_FORMAT:
            raise CheckpointError('%s is not a checkpoint.' % path)
        if header.get('version') != CHECKPOINT_VERSION:
            raise CheckpointError('Checkpoint version %s of %s is not supported (expected %d).' % (
                header.get('version'), path, CHECKPOINT_VERSION))
        params, first, second = {}, {}, {}
        for entry in archive.files:
            kind, _, name = entry.partition('/')
            if kind == 'param':
                params[name] = archive[entry]
            elif kind == 'adam_m':
                first[name] = archive[entry]
            elif kind == 'adam_v':
                second[name] = archive[entry]
    for name, meta in header['blocks'].items():
        if name not in params:
            raise CheckpointError('Block %s is missing from %s.' % (name, path))
        if list(params[name].shape) != meta['shape']:
            raise CheckpointError('Block %s of %s has shape %s, header says %s.' % (
                name, path, params[name].shape, meta['shape']))
    return header, params, first, second


def load_state(path, cameras=None):
    """ Load a checkpoint.

    Parameters
    ----------
    path : str
    cameras : list of Camera or None
        Cameras of the dataset the checkpoint belongs to.

    Returns
    -------
    state : TrainState
        Masks and match tables are not saved and start out empty.
    cfg : TrainConfig
    """
    header, params, first, second = read_checkpoint(path)
    try:
        cfg = load_train_config(header['config'])
    except ConfigurationError as exc:
        raise CheckpointError('Invalid configuration in %s: %s' % (path, exc)) from exc
    model = build_model(cfg, header['n_views'], header['near'], header['far'])

    expected = model.init(cfg.seed, dtype=np.dtype(cfg.precision))
    missing = set(expected.blocks) - set(params)
    if missing:
        raise CheckpointError('Blocks %s are missing from %s.' % (sorted(missing), path))

    store = ParameterStore()
    for name in expected.blocks:
        store.add(name, params[name], header['blocks'][name]['trainable'])
    state = TrainState(
        model=model, store=store, iteration=header['iteration'],
        cameras=list(cameras) if cameras is not None else [])
    state.first_moments = {n: first[n].copy() for n in first}
    state.second_moments = {n: second[n].copy() for n in second}
    return state, cfg
