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
Dataset directories: a JSON manifest next to the PNG images and depth maps.

Layout::

    manifest.json
    images/view_000.png      degraded training inputs
    clean/view_000.png       clean ground truth (optional)
    depth/view_000.npy       float depth maps (optional)
"""

import json
import logging
import os

import imageio.v2 as imageio
import numpy as np

from traits.api import HasTraits, Array, Dict, Either, Enum, Float, Instance, List, Property, Str

from .custom_traits import PositiveFloat, PositiveInt, UFloat
from .errors import DatasetLoadError
from .geometry import make_camera

logger = logging.getLogger(__name__)

MANIFEST_NAME = 'manifest.json'
MANIFEST_FORMAT = 'nightNeRF-dataset'
MANIFEST_VERSION = 1


class ViewRecord(HasTraits):
    name = Str

    # Paths relative to the dataset directory
    image = Str
    depth = Either(None, Str)
    clean = Either(None, Str)

    pose = Array(dtype=float, shape=(3, 4), value=np.eye(3, 4))
    focal = PositiveFloat(50.0)
    cx = Float
    cy = Float
    width = PositiveInt(1)
    height = PositiveInt(1)

    split = Enum('train', 'eval')

    # Exposure poses used to synthesize the view; empty for real captures
    trajectory = List

    def camera(self, near, far):
        return make_camera(self.pose, self.focal, self.width, self.height, near, far,
                           cx=self.cx, cy=self.cy)

    def as_dict(self):
        return {
            'name': self.name,
            'image': self.image,
            'depth': self.depth,
            'clean': self.clean,
            'pose': self.pose.tolist(),
            'focal': self.focal,
            'cx': self.cx,
            'cy': self.cy,
            'width': self.width,
            'height': self.height,
            'split': self.split,
            'trajectory': [np.asarray(p).tolist() for p in self.trajectory]}


class DatasetManifest(HasTraits):
    """ Views with poses and intrinsics, scene bounds and the train/eval split. """

    views = List(Instance(ViewRecord))

    near = UFloat(0.0)
    far = PositiveFloat(1.0)

    # Free-form provenance (degradation settings, toy scene, seed)
    metadata = Dict

    train_views = Property()
    eval_views = Property()

    def _get_train_views(self):
        return [i for i, v in enumerate(self.views) if v.split == 'train']

    def _get_eval_views(self):
        return [i for i, v in enumerate(self.views) if v.split == 'eval']

    def cameras(self):
        return [v.camera(self.near, self.far) for v in self.views]

    def as_dict(self):
        return {
            'format': MANIFEST_FORMAT,
            'version': MANIFEST_VERSION,
            'near': self.near,
            'far': self.far,
            'metadata': self.metadata,
            'views': [v.as_dict() for v in self.views]}


class Dataset(HasTraits):
    """ A loaded dataset: manifest plus decoded images in [0, 1]. """

    directory = Str

    manifest = Instance(DatasetManifest)

    images = List

    # None where not present
    clean = List
    depths = List

    cameras = List

    n_views = Property(depends_on='images')

    def _get_n_views(self):
        return len(self.images)

    @property
    def train_views(self):
        return self.manifest.train_views

    @property
    def eval_views(self):
        return self.manifest.eval_views


def default_split(n_views):
    """
    Split tags holding out about one view in seven for evaluation, spread
    evenly over the interior of the sequence (21 views -> 18 + 3).
    """
    n_eval = int(round(n_views / 7.0))
    split = ['train'] * n_views
    if n_eval:
        held = np.round(np.linspace(0, n_views - 1, n_eval + 2))[1:-1].astype(int)
        for i in held:
            split[i] = 'eval'
    return split


def read_image(path):
    """ 8-bit PNG -> float RGB in [0, 1] """
    data = imageio.imread(path)
    if data.ndim == 2:
        data = np.stack([data] * 3, axis=-1)
    return data[..., :3].astype(float) / 255.0


def write_image(path, image):
    """ float RGB (or gray) in [0, 1] or uint8 -> 8-bit PNG """
    image = np.asarray(image)
    if image.dtype != np.uint8:
        image = np.round(np.clip(image, 0.0, 1.0) * 255).astype(np.uint8)
    imageio.imwrite(path, image)


def _view_from_dict(i, saved):
    try:
        pose = np.asarray(saved['pose'], dtype=float)
        if pose.size != 12 or not np.all(np.isfinite(pose)):
            raise ValueError('pose must hold 12 finite numbers')
        return ViewRecord(
            name=saved.get('name', 'view_%03d' % i),
            image=saved['image'],
            depth=saved.get('depth'),
            clean=saved.get('clean'),
            pose=pose.reshape(3, 4),
            focal=saved['focal'],
            cx=saved['cx'],
            cy=saved['cy'],
            width=saved['width'],
            height=saved['height'],
            split=saved.get('split', 'train'),
            trajectory=[np.asarray(p, dtype=float) for p in saved.get('trajectory', [])])
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetLoadError('View %d (%s) of the manifest is malformed: %s' % (
            i, saved.get('name', '?') if isinstance(saved, dict) else '?', exc)) from exc


def load_manifest(directory):
    path = os.path.join(directory, MANIFEST_NAME)
    if not os.path.exists(path):
        raise DatasetLoadError('No %s in %s.' % (MANIFEST_NAME, directory))
    try:
        with open(path, 'r') as f:
            saved = json.load(f)
    except (OSError, ValueError) as exc:
        raise DatasetLoadError('Could not read %s: %s' % (path, exc)) from exc
    if saved.get('format') != MANIFEST_FORMAT:
        raise DatasetLoadError('%s is not a dataset manifest.' % path)

    views = [_view_from_dict(i, v) for i, v in enumerate(saved.get('views', []))]
    if not views:
        raise DatasetLoadError('Manifest %s lists no views.' % path)
    try:
        manifest = DatasetManifest(
            views=views, near=saved['near'], far=saved['far'],
            metadata=saved.get('metadata', {}))
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetLoadError('Malformed scene bounds in %s: %s' % (path, exc)) from exc
    if not manifest.near < manifest.far:
        raise DatasetLoadError('Near bound must be below the far bound in %s.' % path)
    return manifest


def load_dataset(directory):
    """
    Read a dataset directory.

    Every referenced file is checked before anything is decoded, so a broken
    dataset fails as a whole.

    Raises
    ------
    DatasetLoadError
        Naming the offending view.
    """
    manifest = load_manifest(directory)
    for view in manifest.views:
        for kind in ('image', 'depth', 'clean'):
            rel = getattr(view, kind)
            if rel is not None and not os.path.exists(os.path.join(directory, rel)):
                raise DatasetLoadError('Missing %s file %s of view %s.' % (kind, rel, view.name))

    images, clean, depths, cameras = [], [], [], []
    for view in manifest.views:
        image = read_image(os.path.join(directory, view.image))
        if image.shape[:2] != (view.height, view.width):
            raise DatasetLoadError('Image of view %s is %dx%d, manifest says %dx%d.' % (
                view.name, image.shape[1], image.shape[0], view.width, view.height))
        images.append(image)
        clean.append(read_image(os.path.join(directory, view.clean)) if view.clean else None)
        depths.append(np.load(os.path.join(directory, view.depth)) if view.depth else None)
        try:
            cameras.append(view.camera(manifest.near, manifest.far))
        except Exception as exc:
            raise DatasetLoadError('Invalid camera of view %s: %s' % (view.name, exc)) from exc

    logger.info('Loaded %d views (%d train, %d eval) from %s', len(images),
                len(manifest.train_views), len(manifest.eval_views), directory)
    return Dataset(directory=str(directory), manifest=manifest, images=images,
                   clean=clean, depths=depths, cameras=cameras)


def write_dataset(directory, manifest, images, clean=None, depths=None):
    """
    Write images, optional clean references and depth maps, then the manifest.

    Image paths of `manifest` are (re)assigned to the standard layout.
    """
    os.makedirs(os.path.join(directory, 'images'), exist_ok=True)
    for i, (view, image) in enumerate(zip(manifest.views, images)):
        name = view.name or 'view_%03d' % i
        view.name = name
        view.image = os.path.join('images', name + '.png')
        write_image(os.path.join(directory, view.image), image)
        if clean is not None and clean[i] is not None:
            os.makedirs(os.path.join(directory, 'clean'), exist_ok=True)
            view.clean = os.path.join('clean', name + '.png')
            write_image(os.path.join(directory, view.clean), clean[i])
        if depths is not None and depths[i] is not None:
            os.makedirs(os.path.join(directory, 'depth'), exist_ok=True)
            view.depth = os.path.join('depth', name + '.npy')
            np.save(os.path.join(directory, view.depth), np.asarray(depths[i], dtype=float))

    with open(os.path.join(directory, MANIFEST_NAME), 'w') as f:
        json.dump(manifest.as_dict(), f, indent=2)
    logger.info('Wrote %d views to %s', len(images), directory)
