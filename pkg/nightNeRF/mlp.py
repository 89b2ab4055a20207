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
Positional encoding and fully connected layers on top of `autodiff`.
"""

import numpy as np

from traits.api import HasTraits, Bool, Enum, Str

from . import autodiff as ad
from .constants import L_POSITION, L_DIRECTION
from .custom_traits import UInt, PositiveInt
from .errors import ConfigurationError


class EncodingConfig(HasTraits):
    """ Frequency encoding of positions and view directions. """

    L_position = UInt(L_POSITION)
    L_direction = UInt(L_DIRECTION)
    include_input = Bool(True)

    def width(self, input_dim, n_freqs):
        return input_dim * (2 * n_freqs + int(self.include_input))

    @property
    def position_width(self):
        return self.width(3, self.L_position)

    @property
    def direction_width(self):
        return self.width(3, self.L_direction)

    def as_dict(self):
        return {
            'L_position': self.L_position,
            'L_direction': self.L_direction,
            'include_input': self.include_input}


def positional_encode(p, n_freqs, include_input=True):
    """
    Encode the last axis of `p` with sin/cos pairs at frequencies 2^j * pi.

    For every frequency j the output holds sin(2^j pi p) followed by
    cos(2^j pi p), optionally prefixed by p itself.

    Parameters
    ----------
    p : array or Var, shape (..., D)
    n_freqs : int >= 0
    include_input : bool

    Returns
    -------
    encoded : array or Var, shape (..., D * (2 * n_freqs + include_input))
    """
    vp = ad.value_of(p)
    lead, dim = vp.shape[:-1], vp.shape[-1]
    parts = [p] if include_input else []
    if n_freqs > 0:
        freqs = (2.0 ** np.arange(n_freqs) * np.pi).astype(vp.dtype)
        scaled = ad.mul(ad.reshape(p, lead + (1, dim)), freqs[:, None])
        pairs = ad.concat([ad.sin(scaled), ad.cos(scaled)], axis=-1)
        parts.append(ad.reshape(pairs, lead + (2 * n_freqs * dim,)))
    if not parts:
        return np.zeros(lead + (0,), dtype=vp.dtype)
    if len(parts) == 1:
        return parts[0]
    return ad.concat(parts, axis=-1)


ACTIVATIONS = {
    'relu': ad.relu,
    'sigmoid': ad.sigmoid,
    'softplus': ad.softplus,
    'identity': ad.identity,
}


class Dense(HasTraits):
    """ One affine layer y = act(x W + b) with parameter blocks <name>.w/.b """

    name = Str

    n_in = PositiveInt

    n_out = PositiveInt

    activation = Enum('relu', 'sigmoid', 'softplus', 'identity')

    @property
    def weight_name(self):
        return self.name + '.w'

    @property
    def bias_name(self):
        return self.name + '.b'

    def init(self, store, rng, scale=1.0, dtype=np.float64):
        """ Glorot uniform weights times `scale`, zero bias. """
        bound = scale * np.sqrt(6.0 / (self.n_in + self.n_out))
        weight = rng.uniform(-bound, bound, size=(self.n_in, self.n_out))
        store.add(self.weight_name, weight.astype(dtype))
        store.add(self.bias_name, np.zeros(self.n_out, dtype=dtype))

    def __call__(self, params, x):
        weight, bias = params[self.weight_name], params[self.bias_name]
        w_shape = ad.value_of(weight).shape
        x_shape = ad.value_of(x).shape
        if w_shape != (self.n_in, self.n_out) or x_shape[-1] != self.n_in:
            raise ConfigurationError(
                'Layer %s expects %d -> %d inputs, got input %s and weights %s.'
                % (self.name, self.n_in, self.n_out, x_shape, w_shape))
        lead = x_shape[:-1]
        flat = ad.reshape(x, (-1, self.n_in))
        out = ad.add(ad.matmul(flat, weight), bias)
        out = ACTIVATIONS[self.activation](out)
        return ad.reshape(out, lead + (self.n_out,))


def mlp_forward(params, layers, x):
    """ Apply `layers` (a sequence of `Dense`) to `x` in order. """
    for layer in layers:
        x = layer(params, x)
    return x


def make_layers(prefix, widths, activation='relu', final='identity'):
    """
    Build a chain of `Dense` layers.

    Parameters
    ----------
    prefix : str
        Block name prefix, layers are named <prefix>.<n>
    widths : sequence of int
        Input width followed by every layer's output width.
    """
    layers = []
    n = len(widths) - 1
    for i in range(n):
        layers.append(Dense(
            name='%s.%d' % (prefix, i),
            n_in=widths[i],
            n_out=widths[i + 1],
            activation=final if i == n - 1 else activation))
    return layers
