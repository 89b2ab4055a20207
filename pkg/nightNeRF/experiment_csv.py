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
Delimiter-separated logs: the per-iteration training log and metric reports.
"""

import csv
import os

import numpy as np

from traits.api import HasTraits, Bool, File, List


TRAINING_FIELDS = [
    'iteration',
    'l_construction',
    'l_consistency',
    'loss',
    'lr',
    'alpha',
    'beta',
    'elapsed']

METRIC_FIELDS = ['view', 'psnr', 'ssim']


class TrainingLog(HasTraits):
    """
    Rows of (iteration, losses, learning rate, loss weights).

    Rows are appended to `filepath` as they arrive. The elapsed time column
    stays empty for deterministic runs.
    """

    filepath = File()

    rows = List

    # Append to an existing file instead of starting a new one
    resume = Bool(False)

    _started = Bool(False)

    def _start(self):
        if self._started or not self.filepath:
            return
        if self.resume and os.path.exists(self.filepath):
            self._started = True
            return
        with open(self.filepath, 'w', newline='') as f:
            csv.DictWriter(f, fieldnames=TRAINING_FIELDS).writeheader()
        self._started = True

    def add(self, iteration, losses, elapsed=None):
        row = {
            'iteration': iteration,
            'l_construction': '%.8e' % losses['construction'],
            'l_consistency': '%.8e' % losses['consistency'],
            'loss': '%.8e' % losses['loss'],
            'lr': '%.8e' % losses['lr'],
            'alpha': '%g' % losses['alpha'],
            'beta': '%g' % losses['beta'],
            'elapsed': '' if elapsed is None else '%.2f' % elapsed}
        self.rows.append(row)
        self._start()
        if self.filepath:
            with open(self.filepath, 'a', newline='') as f:
                csv.DictWriter(f, fieldnames=TRAINING_FIELDS, restval='').writerow(row)
        return row


def read_training_log(path):
    """
    Columns of a training log as float arrays.

    Returns
    -------
    columns : dict
        Field name -> array; empty cells become NaN.
    """
    with open(path, 'r', newline='') as f:
        rows = list(csv.DictReader(f))
    columns = {}
    for name in TRAINING_FIELDS:
        columns[name] = np.array(
            [float(row[name]) if row.get(name) not in (None, '') else np.nan for row in rows])
    return columns


def write_metric_report(path, report):
    """ One row per view and a final `mean` row. """
    with open(path, 'w', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=METRIC_FIELDS, restval='None')
        writer.writeheader()
        for row in report.as_rows():
            writer.writerow(row)
