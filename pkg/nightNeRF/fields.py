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
The scene field (radiance and density) and the per-ray noise estimator.
"""

import numpy as np

from traits.api import HasTraits, Float, Instance, List, Int, Str, Property, cached_property

from . import autodiff as ad
from .constants import SCENE_DEPTH, SCENE_WIDTH, NOISE_DEPTH, NOISE_WIDTH
from .custom_traits import PositiveInt, PositiveFloat
from .mlp import Dense, EncodingConfig, positional_encode


class SceneField(HasTraits):
    """
    F(x, d) -> (c, sigma)

    The density head only sees the position; the view direction enters the
    color head.
    """

    prefix = Str('scene')

    depth = PositiveInt(SCENE_DEPTH)
    width = PositiveInt(SCENE_WIDTH)

    # Trunk layers whose input is concatenated with the encoded position
    skips = List(Int, [4])

    encoding = Instance(EncodingConfig, ())

    # sigma = softplus(raw + density_shift)
    density_shift = Float(-1.0)

    trunk = Property(depends_on='prefix, depth, width, skips, encoding')
    heads = Property(depends_on='prefix, width, encoding')

    @cached_property
    def _get_trunk(self):
        pos_w = self.encoding.position_width
        layers = []
        for i in range(self.depth):
            n_in = pos_w if i == 0 else self.width
            if i in self.skips and i > 0:
                n_in += pos_w
            layers.append(Dense(
                name='%s.trunk.%d' % (self.prefix, i), n_in=n_in, n_out=self.width,
                activation='relu'))
        return layers

    @cached_property
    def _get_heads(self):
        half = max(self.width // 2, 1)
        return {
            'sigma': Dense(name=self.prefix + '.sigma', n_in=self.width, n_out=1,
                           activation='identity'),
            'feature': Dense(name=self.prefix + '.feature', n_in=self.width,
                             n_out=self.width, activation='identity'),
            'color_hidden': Dense(
                name=self.prefix + '.color.0',
                n_in=self.width + self.encoding.direction_width, n_out=half,
                activation='relu'),
            'color': Dense(name=self.prefix + '.color.1', n_in=half, n_out=3,
                           activation='sigmoid'),
        }

    def layers(self):
        return self.trunk + list(self.heads.values())

    def init(self, store, rng, dtype=np.float64):
        for layer in self.layers():
            layer.init(store, rng, dtype=dtype)

    def __call__(self, params, x, d):
        """
        Returns
        -------
        colors : shape (..., 3), in [0, 1]
        sigmas : shape (...), >= 0
        """
        enc = self.encoding
        enc_x = positional_encode(x, enc.L_position, enc.include_input)
        enc_d = positional_encode(d, enc.L_direction, enc.include_input)
        h = enc_x
        for i, layer in enumerate(self.trunk):
            if i in self.skips and i > 0:
                h = ad.concat([enc_x, h], axis=-1)
            h = layer(params, h)
        heads = self.heads
        raw_sigma = heads['sigma'](params, h)
        lead = ad.value_of(raw_sigma).shape[:-1]
        sigmas = ad.softplus(ad.add(ad.reshape(raw_sigma, lead), self.density_shift))
        feature = heads['feature'](params, h)
        hidden = heads['color_hidden'](params, ad.concat([feature, enc_d], axis=-1))
        colors = heads['color'](params, hidden)
        return colors, sigmas

    def as_dict(self):
        return {
            'depth': self.depth,
            'width': self.width,
            'skips': list(self.skips),
            'density_shift': self.density_shift}


class NoiseField(HasTraits):
    """
    n = MLP(P_mid, d)

    One noise triple per ray, without volume rendering. The linear output head
    starts close to zero.
    """

    prefix = Str('noise')

    depth = PositiveInt(NOISE_DEPTH)
    width = PositiveInt(NOISE_WIDTH)

    encoding = Instance(EncodingConfig, ())

    # Scale of the output layer's initial weights
    output_scale = PositiveFloat(1e-2)

    layers = Property(depends_on='prefix, depth, width, encoding')

    @cached_property
    def _get_layers(self):
        n_in = self.encoding.position_width + self.encoding.direction_width
        layers = []
        for i in range(self.depth):
            layers.append(Dense(
                name='%s.%d' % (self.prefix, i), n_in=n_in if i == 0 else self.width,
                n_out=self.width, activation='relu'))
        layers.append(Dense(
            name='%s.out' % self.prefix, n_in=self.width, n_out=3,
            activation='identity'))
        return layers

    def init(self, store, rng, dtype=np.float64):
        layers = self.layers
        for layer in layers[:-1]:
            layer.init(store, rng, dtype=dtype)
        layers[-1].init(store, rng, scale=self.output_scale, dtype=dtype)

    def __call__(self, params, p_mid, d):
        enc = self.encoding
        h = ad.concat([
            positional_encode(p_mid, enc.L_position, enc.include_input),
            positional_encode(d, enc.L_direction, enc.include_input)], axis=-1)
        for layer in self.layers:
            h = layer(params, h)
        return h

    def as_dict(self):
        return {
            'depth': self.depth,
            'width': self.width,
            'output_scale': self.output_scale}


def noise_field_for(scene, **traits):
    """ A NoiseField half as deep and half as wide as `scene`. """
    return NoiseField(
        depth=max(scene.depth // 2, 1),
        width=max(scene.width // 2, 1),
        encoding=scene.encoding,
        **traits)


def snerf_eval(field, params, x, d):
    """ (c, sigma) of `field` at positions `x` seen from unit directions `d`. """
    return field(params, x, d)


def nestimator_eval(field, params, p_mid, d):
    """ Noise triple of `field` for rays with mid point `p_mid`, direction `d`. """
    return field(params, p_mid, d)
