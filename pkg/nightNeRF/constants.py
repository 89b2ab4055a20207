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


# Defaults reported for the full-scale method. Desk-scale overrides live in
# config.TrainConfig.

# Number of rigid camera motions per view in the blur kernel
N_MOTIONS = 4

# Low-pass radius (frequency pixels) and binarization threshold (0-255) of the
# trajectory mask
CTP_RADIUS = 30
CTP_THRESHOLD = 48

# Aligned ray group cap (anchor included) and match certainty threshold
N_ALIGNED = 20
CERTAINTY_THRESHOLD = 0.8

BATCH_RAYS = 1024
N_COARSE = 64
N_FINE = 64

# Loss weights per stage
ALPHA = 1.0
BETA_STAGE2 = 1e-2
STAGE1_FRACTION = 0.6

LEARNING_RATE = 5e-4
# Final learning rate as a fraction of the initial one
LR_DECAY = 0.1

# Positional encoding frequencies
L_POSITION = 10
L_DIRECTION = 4

# Field sizes. The noise estimator is half as deep and half as wide.
SCENE_DEPTH = 8
SCENE_WIDTH = 128
NOISE_DEPTH = 4
NOISE_WIDTH = 64

# Iterations between two refreshes of the match tables
MATCH_REFRESH = 2000

# Target mean intensity of the automatic gamma in ScaleUp
SCALE_UP_TARGET_MEAN = 0.4

# Reported PSNR for identical images (dB)
PSNR_CAP = 99.0

# Luma weights used to reduce RGB to a single channel
LUMA = (0.299, 0.587, 0.114)

# Version of the checkpoint archive layout
CHECKPOINT_FORMAT = 'nightNeRF-checkpoint'
CHECKPOINT_VERSION = 1

# Synthetic degradation: darkening v -> gain * v ** gamma, then noise with
# variance std ** 2 + signal * v on the darkened, blurred signal
DARKEN_GAMMA = 2.0
DARKEN_GAIN = 0.15
NOISE_STD = 0.01
NOISE_SIGNAL = 0.005

# Camera shake: exposure frames per view, share of shaken views and the bound
# of the random screw (degrees, fraction of the scene diameter)
EXPOSURE_FRAMES = 8
SHAKE_FRACTION = 0.8
SHAKE_ROTATION_DEG = 0.5
SHAKE_TRANSLATION = 0.005
