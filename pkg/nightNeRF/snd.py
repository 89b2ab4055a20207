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
Multi-view consistency of the sharp scene colors.

Pixels of the training views are matched across views; the sharp colors
rendered along the rays of matched pixels are pulled towards their mean, which
pushes view-dependent noise out of the scene field and into the noise field.
"""

import logging

import numpy as np
from scipy import ndimage

from traits.api import HasTraits, Dict, Float, Instance, Int, List, Property, Str

from . import autodiff as ad
from .constants import CERTAINTY_THRESHOLD, N_ALIGNED
from .custom_traits import PositiveInt, UFloat
from .ctp import grayscale
from .errors import ConfigurationError
from .geometry import Ray, camera_ray, camera_rays, project

logger = logging.getLogger(__name__)


class MatchTable(HasTraits):
    """
    Snapshot of pixel correspondences between ordered view pairs.

    For the pair (a, b), `flows[(a, b)]` has shape (H, W, 2) and holds the
    (row, col) in view b matched by every pixel of view a, or -1 where there
    is none. `certainties[(a, b)]` holds the matching certainty in [0, 1].
    Tables are replaced, never updated in place.
    """

    flows = Dict

    certainties = Dict

    backend = Str

    # Training iteration the table was built at
    iteration = Int(0)

    views = Property(depends_on='flows')

    def _get_views(self):
        return sorted({a for a, _ in self.flows} | {b for _, b in self.flows})

    def __contains__(self, pair):
        return pair in self.flows

    def pairs(self):
        return sorted(self.flows)

    def lookup(self, a, b, row, col):
        """ (row, col, certainty) in view b of pixel (row, col) of view a. """
        if (a, b) not in self.flows:
            return -1.0, -1.0, 0.0
        target = self.flows[(a, b)][row, col]
        return float(target[0]), float(target[1]), float(self.certainties[(a, b)][row, col])

    def mean_certainty(self):
        if not self.certainties:
            return 0.0
        return float(np.mean([c.mean() for c in self.certainties.values()]))


class AlignedRayGroup(HasTraits):
    """ An anchor ray and the rays of the pixels matched to it in other views. """

    anchor = Instance(Ray)

    members = List(Instance(Ray))

    certainties = List(Float)

    size = Property(depends_on='members[]')

    def _get_size(self):
        return 1 + len(self.members)

    def rays(self):
        return [self.anchor] + list(self.members)


# ------------------------------------------------------------------------------
# MATCHING BACKENDS
# ------------------------------------------------------------------------------


class GroundTruthMatcher(HasTraits):
    """
    Correspondences from known cameras and per-pixel depth.

    A pixel of view a is back-projected along its ray to its depth and
    projected into view b. The match is certain (C = 1) when the point lands
    inside view b, in front of its camera and is not occluded there; else
    C = 0. Background pixels (depth at the far bound) never match.
    """

    cameras = List

    depths = List

    # Relative depth slack of the occlusion test
    tolerance = UFloat(0.02)

    def _check(self, view):
        if not 0 <= view < len(self.cameras):
            raise ConfigurationError('No camera for view %d.' % view)
        if view >= len(self.depths) or self.depths[view] is None:
            raise ConfigurationError(
                'The ground truth matcher needs the depth map of view %d.' % view)

    def match(self, view_a, view_b, image_a=None, image_b=None):
        self._check(view_a)
        self._check(view_b)
        cam_a, cam_b = self.cameras[view_a], self.cameras[view_b]
        depth_a = np.asarray(self.depths[view_a], dtype=float)
        depth_b = np.asarray(self.depths[view_b], dtype=float)

        rows, cols = cam_a.pixel_grid()
        origins, directions = camera_rays(cam_a, rows, cols)
        depth = depth_a.reshape(-1)
        points = origins + depth[:, None] * directions

        rows_b, cols_b, dist, in_front = project(cam_b, points)
        # a point belongs to the pixel whose center is nearest
        ri, ci = np.round(rows_b), np.round(cols_b)
        valid = (depth < cam_a.far) & in_front & cam_b.in_bounds(ri, ci)
        ri = np.clip(ri, 0, cam_b.height - 1).astype(int)
        ci = np.clip(ci, 0, cam_b.width - 1).astype(int)
        visible = depth_b[ri, ci] >= dist * (1 - self.tolerance)
        valid &= visible

        flow = np.stack([
            np.clip(rows_b, 0, cam_b.height - 1),
            np.clip(cols_b, 0, cam_b.width - 1)], axis=-1)
        flow[~valid] = -1
        shape = (cam_a.height, cam_a.width)
        return flow.reshape(shape + (2,)), valid.astype(float).reshape(shape)


class BlockMatcher(HasTraits):
    """
    Image-based correspondences by normalized cross correlation.

    Every pixel of view a is compared with the pixels of view b within
    `search_radius` rows and columns using square patches of side
    2 `patch_radius` + 1. The best displacement is refined to sub-pixel
    precision by a parabola through the neighbouring scores. The certainty is
    the correlation, clamped to [0, 1].
    """

    patch_radius = PositiveInt(3)

    search_radius = PositiveInt(8)

    # Patches with a grayscale standard deviation below this never match
    min_std = UFloat(1e-3)

    def match(self, view_a, view_b, image_a, image_b):
        if image_a is None or image_b is None:
            raise ConfigurationError('The block matcher needs both images.')
        a = grayscale(image_a)
        b = grayscale(image_b)
        if a.shape != b.shape:
            raise ConfigurationError(
                'Cannot match images of shapes %s and %s.' % (a.shape, b.shape))
        h, w = a.shape
        size = 2 * self.patch_radius + 1
        s = self.search_radius

        def box(x):
            return ndimage.uniform_filter(x, size=size, mode='reflect')

        mean_a = box(a)
        std_a = np.sqrt(np.maximum(box(a * a) - mean_a ** 2, 0))

        offsets = np.arange(-s, s + 1)
        n = len(offsets)
        scores = np.full((n, n, h, w), -np.inf)
        padded = np.pad(b, s, mode='edge')
        rows = np.arange(h)[:, None]
        cols = np.arange(w)[None, :]
        for i, dy in enumerate(offsets):
            for j, dx in enumerate(offsets):
                shifted = padded[s + dy:s + dy + h, s + dx:s + dx + w]
                mean_b = box(shifted)
                std_b = np.sqrt(np.maximum(box(shifted * shifted) - mean_b ** 2, 0))
                cov = box(a * shifted) - mean_a * mean_b
                with np.errstate(divide='ignore', invalid='ignore'):
                    ncc = cov / (std_a * std_b)
                ncc[(std_a < self.min_std) | (std_b < self.min_std)] = 0.0
                inside = (rows + dy >= 0) & (rows + dy < h) & (cols + dx >= 0) & (cols + dx < w)
                scores[i, j] = np.where(inside, ncc, -np.inf)

        flat = scores.reshape(n * n, h, w)
        best = np.argmax(flat, axis=0)
        bi, bj = np.divmod(best, n)
        score = np.take_along_axis(flat, best[None], axis=0)[0]

        def refine(center, minus, plus):
            denom = minus - 2 * center + plus
            with np.errstate(divide='ignore', invalid='ignore'):
                offset = 0.5 * (minus - plus) / denom
            ok = np.isfinite(offset) & (denom < 0)
            return np.clip(np.where(ok, offset, 0.0), -0.5, 0.5)

        ii, jj = np.meshgrid(np.arange(h), np.arange(w), indexing='ij')
        up = scores[np.clip(bi - 1, 0, n - 1), bj, ii, jj]
        down = scores[np.clip(bi + 1, 0, n - 1), bj, ii, jj]
        left = scores[bi, np.clip(bj - 1, 0, n - 1), ii, jj]
        right = scores[bi, np.clip(bj + 1, 0, n - 1), ii, jj]
        sub_row = np.where((bi > 0) & (bi < n - 1), refine(score, up, down), 0.0)
        sub_col = np.where((bj > 0) & (bj < n - 1), refine(score, left, right), 0.0)

        target_rows = ii + offsets[bi] + sub_row
        target_cols = jj + offsets[bj] + sub_col
        certainty = np.clip(np.where(np.isfinite(score), score, 0.0), 0.0, 1.0)
        flow = np.stack([target_rows, target_cols], axis=-1)
        flow[certainty <= 0] = -1
        return flow, certainty


def match_views(image_a, image_b, backend, view_a=None, view_b=None):
    """
    Dense correspondences from view a to view b.

    Returns
    -------
    flow : shape (H, W, 2)
        Matched (row, col) in view b, -1 where there is no match.
    certainty : shape (H, W), in [0, 1]
    """
    return backend.match(view_a, view_b, image_a, image_b)


def build_match_table(images, backend, views=None, iteration=0):
    """ Match every ordered pair of distinct `views` (default: all). """
    if views is None:
        views = range(len(images))
    views = list(views)
    flows, certainties = {}, {}
    for a in views:
        for b in views:
            if a == b:
                continue
            flows[(a, b)], certainties[(a, b)] = match_views(
                images[a], images[b], backend, view_a=a, view_b=b)
    table = MatchTable(
        flows=flows, certainties=certainties,
        backend=type(backend).__name__, iteration=iteration)
    logger.info('Matched %d view pairs, mean certainty %.3f',
                len(flows), table.mean_certainty())
    return table


# ------------------------------------------------------------------------------
# ALIGNED RAYS
# ------------------------------------------------------------------------------


def aligned_rays(anchor, table, cameras, theta=CERTAINTY_THRESHOLD, K=N_ALIGNED):
    """
    Group the anchor ray with the rays of its matches in the other views.

    Views are visited in increasing order; a match joins the group when its
    certainty exceeds `theta`, until the group holds K rays (anchor included).
    Member rays go through the matched pixel, rounded to the nearest one.
    """
    if K < 1:
        raise ValueError('Group size K must be >= 1, got %d' % K)
    a = anchor.view
    row, col = (int(round(x)) for x in anchor.pixel)
    group = AlignedRayGroup(anchor=anchor)
    for b in table.views:
        if len(group.members) + 1 >= K:
            break
        if b == a or (a, b) not in table:
            continue
        target_row, target_col, certainty = table.lookup(a, b, row, col)
        if certainty <= theta or target_row < 0:
            continue
        target_row, target_col = float(np.round(target_row)), float(np.round(target_col))
        cam = cameras[b]
        if not cam.in_bounds(target_row, target_col):
            continue
        group.members.append(camera_ray(cam, (target_row, target_col), view=b))
        group.certainties.append(certainty)
    return group


def aligned_pixels(table, view_ids, rows, cols, cameras, theta=CERTAINTY_THRESHOLD,
                   K=N_ALIGNED):
    """
    Batched `aligned_rays` in pixel form.

    Returns
    -------
    member_views : int array (B, K - 1)
    member_rows, member_cols : float arrays (B, K - 1)
        Matched pixels rounded to whole pixels, -1 in unused slots.
    valid : bool array (B, K - 1)
        Unused slots are False.
    """
    if K < 1:
        raise ValueError('Group size K must be >= 1, got %d' % K)
    view_ids = np.asarray(view_ids, dtype=int)
    rows = np.round(np.asarray(rows)).astype(int)
    cols = np.round(np.asarray(cols)).astype(int)
    n = len(view_ids)
    views = table.views
    n_views = len(views)

    cand_rows = np.full((n, n_views), -1.0)
    cand_cols = np.full((n, n_views), -1.0)
    cand_ok = np.zeros((n, n_views), dtype=bool)
    for j, b in enumerate(views):
        for a in np.unique(view_ids):
            if a == b or (a, b) not in table:
                continue
            sel = np.nonzero(view_ids == a)[0]
            target = table.flows[(a, b)][rows[sel], cols[sel]]
            certainty = table.certainties[(a, b)][rows[sel], cols[sel]]
            ok = (certainty > theta) & (target[:, 0] >= 0)
            target = np.round(target)
            ok &= cameras[b].in_bounds(target[:, 0], target[:, 1])
            cand_rows[sel, j] = np.where(ok, target[:, 0], -1.0)
            cand_cols[sel, j] = np.where(ok, target[:, 1], -1.0)
            cand_ok[sel, j] = ok

    # first K - 1 usable views, in view order
    order = np.argsort(~cand_ok, axis=1, kind='stable')[:, :K - 1]
    valid = np.take_along_axis(cand_ok, order, axis=1)
    member_views = np.asarray(views, dtype=int)[order] if n_views else np.zeros((n, 0), int)
    member_rows = np.take_along_axis(cand_rows, order, axis=1)
    member_cols = np.take_along_axis(cand_cols, order, axis=1)
    return member_views, member_rows, member_cols, valid


def group_rays(cameras, member_views, member_rows, member_cols, valid):
    """ Origins and directions (B, K - 1, 3) of the matched pixels; invalid slots are zero. """
    shape = member_views.shape
    origins = np.zeros(shape + (3,))
    directions = np.zeros(shape + (3,))
    for view in np.unique(member_views[valid]):
        sel = valid & (member_views == view)
        o, d = camera_rays(cameras[view], member_rows[sel], member_cols[sel])
        origins[sel] = o
        directions[sel] = d
    return origins, directions


# ------------------------------------------------------------------------------
# LOSS
# ------------------------------------------------------------------------------


def consistency_loss(colors):
    """
    Mean absolute deviation of a group's colors from their mean.

    (1 / K) sum_i mean_channels |c_i - mean_j c_j| for colors of shape (K, 3).
    """
    k = ad.value_of(colors).shape[0]
    if k < 1:
        raise ValueError('Empty ray group.')
    center = ad.reduce_mean(colors, axis=0, keepdims=True)
    return ad.reduce_mean(ad.absolute(ad.sub(colors, center)))


def group_consistency_loss(colors, valid):
    """
    `consistency_loss` over a batch of padded groups, averaged over groups.

    Parameters
    ----------
    colors : shape (B, K, 3)
    valid : bool array (B, K)
        Column 0 (the anchor) must be True.
    """
    valid = np.asarray(valid, dtype=ad.value_of(colors).dtype)
    count = valid.sum(axis=1, keepdims=True)
    if np.any(count < 1):
        raise ValueError('Every group needs at least its anchor.')
    w = valid[:, :, None]
    center = ad.div(ad.reduce_sum(ad.mul(colors, w), axis=1, keepdims=True), count[:, :, None])
    deviation = ad.mul(ad.absolute(ad.sub(colors, center)), w)
    per_group = ad.div(ad.reduce_sum(deviation, axis=(1, 2)), 3 * count[:, 0])
    return ad.reduce_mean(per_group)


def compose_noisy_pixel(c_sharp, n):
    """ Noisy sharp color: scene color plus the noise estimate. """
    return ad.add(c_sharp, n)
