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
Figures of training runs and per-pixel maps.
"""

from matplotlib.axes import Axes
from matplotlib.figure import Figure

import numpy as np

from traits.api import HasTraits, Dict, Instance, Str, Float


class TrainingCurve(HasTraits):
    """ Construction and consistency loss against iteration, lr on a twin axis. """

    # Columns of a training log, see experiment_csv.read_training_log
    columns = Dict

    figure = Instance(Figure)

    axes = Instance(Axes)

    title = Str('')

    def _figure_default(self):
        figure = Figure(figsize=(7, 4))
        self.axes = axes = figure.add_subplot(111)
        it = self.columns['iteration']
        axes.semilogy(it, self.columns['l_construction'], label='construction')
        consistency = self.columns['l_consistency']
        if np.any(consistency > 0):
            axes.semilogy(it, np.where(consistency > 0, consistency, np.nan),
                          label='consistency')
        axes.set_xlabel('Iteration')
        axes.set_ylabel('Loss')
        stage2 = self.columns['beta'] > 0
        if np.any(stage2):
            axes.axvline(it[np.argmax(stage2)], color='grey', linestyle='--', linewidth=0.8)
        lr_axes = axes.twinx()
        lr_axes.plot(it, self.columns['lr'], color='black', alpha=0.4, linewidth=0.8)
        lr_axes.set_ylabel('Learning rate')
        lr_axes.ticklabel_format(scilimits=(-4, 4), useMathText=True)
        axes.legend(loc='upper right')
        axes.set_title(self.title)
        figure.tight_layout()
        return figure


class ArrayHeatmap(HasTraits):
    array = Instance(np.ndarray)

    figure = Instance(Figure)

    title = Str('')

    label = Str('')

    vmin = Float(0.0)
    vmax = Float(1.0)

    def _figure_default(self):
        figure = Figure()
        axis = figure.add_subplot(111)
        axis.set_title(self.title)
        axis.set_xticks([])
        axis.set_yticks([])
        heatmap = axis.imshow(self.array, cmap='Greys_r', vmin=self.vmin, vmax=self.vmax,
                              interpolation='nearest')
        cbar = figure.colorbar(heatmap, fraction=0.031, pad=0.04)
        cbar.ax.set_ylabel(self.label, rotation=-90, va='bottom')
        return figure


def save_figure(figure, path, dpi=120):
    figure.savefig(path, dpi=dpi)
    return path
