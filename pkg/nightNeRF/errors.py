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
Exceptions raised by nightNeRF.
"""


class NightNeRFError(Exception):
    """ Base class for all errors raised deliberately by nightNeRF. """


class ConfigurationError(NightNeRFError):
    """ A configuration is inconsistent or cannot be used as requested. """


class DatasetLoadError(NightNeRFError):
    """ A dataset directory could not be read. """


class CheckpointError(NightNeRFError):
    """ A checkpoint file is malformed or of an unsupported version. """


class GradientError(NightNeRFError):
    """ Reverse-mode differentiation was asked for something it cannot do. """
