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
Training configuration and the JSON configuration files of the commands.
"""

import copy
import json
import logging
import math
import os

from traits.api import HasTraits, Bool, Either, Enum, Int, Property, TraitError

from . import constants as c
from .custom_traits import Intensity8, OpenUnitFloat, PositiveFloat, PositiveInt, UFloat, UInt, UnitFloat
from .errors import ConfigurationError

logger = logging.getLogger(__name__)


class TrainConfig(HasTraits):
    """ Hyperparameters of one training run. """

    n_iterations = PositiveInt(20000)

    # Share of the iterations trained without the consistency loss
    stage1_fraction = OpenUnitFloat(c.STAGE1_FRACTION)

    alpha = UFloat(c.ALPHA)
    beta_stage2 = UFloat(c.BETA_STAGE2)

    batch_size = PositiveInt(c.BATCH_RAYS)

    # Exponential decay from learning_rate to learning_rate * lr_decay
    learning_rate = UFloat(c.LEARNING_RATE)
    lr_decay = UnitFloat(c.LR_DECAY)

    # Ray sampling
    n_coarse = PositiveInt(c.N_COARSE)
    n_fine = UInt(c.N_FINE)
    jitter = Bool(True)

    # Fields
    l_position = UInt(c.L_POSITION)
    l_direction = UInt(c.L_DIRECTION)
    scene_depth = PositiveInt(c.SCENE_DEPTH)
    scene_width = PositiveInt(c.SCENE_WIDTH)
    noise_depth = PositiveInt(c.NOISE_DEPTH)
    noise_width = PositiveInt(c.NOISE_WIDTH)

    # Blur kernel and trajectory mask
    n_motions = PositiveInt(c.N_MOTIONS)
    rbk_latent = PositiveInt(32)
    rbk_hidden = PositiveInt(64)
    ctp_radius = UFloat(c.CTP_RADIUS)
    ctp_threshold = Intensity8(c.CTP_THRESHOLD)

    # Aligned rays
    n_aligned = PositiveInt(c.N_ALIGNED)
    certainty = UnitFloat(c.CERTAINTY_THRESHOLD)
    match_every = PositiveInt(c.MATCH_REFRESH)
    match_backend = Enum('ground_truth', 'block')

    # Module switches
    use_rbk = Bool(True)
    use_snd = Bool(True)
    mask_mode = Enum('ctp', 'rgb', 'none')
    restoration_order = Enum('denoise_first', 'sharpen_first')
    mask_source = Enum('input', 'denoised')
    separate_coarse = Bool(False)
    raw_translation = Bool(False)

    precision = Enum('float64', 'float32')

    # ScaleUp of the training inputs; None selects the automatic gamma
    scale_gamma = Either(None, PositiveFloat)
    equalize = Bool(True)

    seed = Int(0)
    deterministic = Bool(False)

    log_every = PositiveInt(50)
    checkpoint_every = UInt(0)
    render_chunk = PositiveInt(4096)

    stage_boundary = Property(depends_on='n_iterations, stage1_fraction')

    def _get_stage_boundary(self):
        return int(math.ceil(round(self.stage1_fraction * self.n_iterations, 9)))

    # Input validation
    invalid = Property()

    def _get_invalid(self):
        return bool(self.invalid_reasons())

    def invalid_reasons(self):
        reasons = []
        if self.separate_coarse and self.n_fine == 0:
            reasons.append('A separate coarse field needs fine samples.')
        return '\n'.join(reasons)

    def check(self):
        reasons = self.invalid_reasons()
        if reasons:
            raise ConfigurationError(reasons)
        return self

    def baseline(self):
        """ Copy with the blur kernel, noise decomposition and masking switched off. """
        other = self.clone_traits()
        other.use_rbk = False
        other.use_snd = False
        other.mask_mode = 'none'
        return other

    def as_dict(self):
        return {name: getattr(self, name) for name in option_names(self)}


def option_names(obj):
    """ Sorted names of the settable, non-property traits of `obj`. """
    return sorted(n for n in obj.editable_traits() if obj.trait(n).type != 'property')


def read_config_file(path):
    """ Key/value pairs of a JSON configuration file. """
    if not os.path.exists(path):
        raise ConfigurationError('Configuration file %s does not exist.' % path)
    try:
        with open(path, 'r') as f:
            values = json.load(f)
    except ValueError as exc:
        raise ConfigurationError('Could not parse %s: %s' % (path, exc)) from exc
    if not isinstance(values, dict):
        raise ConfigurationError('%s must hold a JSON object.' % path)
    return values


def apply_config(targets, values):
    """
    Set every key of `values` on each target object that has a trait of that
    name.

    Raises
    ------
    ConfigurationError
        For keys no target knows, and for values the traits reject.
    """
    values = copy.deepcopy(values)
    for key, value in values.items():
        owners = [t for t in targets if key in option_names(t)]
        if not owners:
            raise ConfigurationError('Unknown configuration key %r.' % key)
        for owner in owners:
            try:
                setattr(owner, key, value)
            except TraitError as exc:
                raise ConfigurationError('Invalid value for %r: %s' % (key, exc)) from exc
    for target in targets:
        if hasattr(target, 'check'):
            target.check()
    logger.debug('Applied configuration keys %s', sorted(values))
    return targets
