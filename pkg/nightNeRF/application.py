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
The commands of the nightnerf program.
"""

import json
import logging
import os

import numpy as np

from traits.api import HasTraits, Bool, Either, Instance, Int, Str

from . import utils
from .config import TrainConfig, apply_config, read_config_file
from .ctp import make_mask
from .dataset import (
    DatasetManifest, ViewRecord, default_split, load_dataset, write_dataset, write_image)
from .degrade import (
    DegradeSpec, preprocess, quantize, shaken_views, synth_degrade, view_trajectory)
from .experiment_csv import TrainingLog, read_training_log, write_metric_report
from .export import save_checkpoint, write_mask, write_match
from .geometry import make_camera
from .load import load_state
from .metrics import evaluate
from .plots import ArrayHeatmap, TrainingCurve, save_figure
from .scenes import CameraRig, default_toy_scene, render_toy_scene
from .snd import BlockMatcher, GroundTruthMatcher, match_views
from .trainer import build_model, new_state, prepare_training_set, refresh_masks, train

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = 'checkpoint.npz'
LOG_NAME = 'training_log.csv'


def render_novel(checkpoint, cam):
    """
    Render `cam` from the scene field of a checkpoint.

    The noise estimator and the blur kernel are not used.
    """
    state, cfg = load_state(checkpoint)
    return state.model.render(state.store.blocks, cam, chunk=cfg.render_chunk)


class Application(HasTraits):
    """ Options shared by all commands and the commands themselves. """

    seed = Int(0)

    # JSON file with TrainConfig / DegradeSpec keys
    config_path = Either(None, Str)

    deterministic = Bool(False)

    train_config = Instance(TrainConfig, ())

    degrade_spec = Instance(DegradeSpec, ())

    def configure(self, overrides=None):
        """ Apply the configuration file, then `overrides`, then seed and determinism. """
        targets = [self.train_config, self.degrade_spec]
        if self.config_path:
            apply_config(targets, read_config_file(self.config_path))
        if overrides:
            apply_config(targets, overrides)
        self.train_config.seed = self.seed
        self.train_config.deterministic = self.deterministic
        return self

    # --------------------------------------------------------------------------
    # synth
    # --------------------------------------------------------------------------

    def synth(self, out, n_views=12, width=96, height=72):
        """ Render, degrade and write a toy dataset. """
        spec = self.degrade_spec.check()
        rng = np.random.default_rng(self.seed)
        scene = default_toy_scene()
        rig = CameraRig(n_views=n_views, width=width, height=height,
                        focal=90.0 * width / 96.0)
        cameras = rig.cameras()
        shaken = shaken_views(n_views, spec, rng)
        split = default_split(n_views)

        views, images, clean, depths = [], [], [], []
        for i, cam in enumerate(cameras):
            trajectory = view_trajectory(cam.pose, spec, rng, 2 * scene.extent, shaken[i])
            frames = [
                render_toy_scene(scene, make_camera(
                    pose, cam.focal, cam.width, cam.height, cam.near, cam.far))[0]
                for pose in trajectory]
            image, depth = render_toy_scene(scene, cam)
            degraded = synth_degrade(frames, spec, seed=rng)
            views.append(ViewRecord(
                name='view_%03d' % i, pose=cam.pose, focal=cam.focal, cx=cam.cx, cy=cam.cy,
                width=cam.width, height=cam.height, split=split[i], trajectory=trajectory))
            images.append(quantize(degraded))
            clean.append(image)
            depths.append(depth)
            logger.debug('View %d: %d exposure poses, mean %.1f/255', i, len(trajectory),
                         utils.mean_intensity(degraded))

        manifest = DatasetManifest(
            views=views, near=rig.near, far=rig.far,
            metadata={
                'seed': self.seed,
                'shaken': [bool(s) for s in shaken],
                'degrade': spec.as_dict(),
                'scene': scene.as_dict(),
                'rig': rig.as_dict()})
        utils.ensure_directory(out)
        write_dataset(out, manifest, images, clean=clean, depths=depths)
        with open(os.path.join(out, 'degrade.json'), 'w') as f:
            json.dump(spec.as_dict(), f, indent=2)
        mean = np.mean([utils.mean_intensity(im / 255.0) for im in images])
        logger.info('Synthesized %d views, %d shaken, mean intensity %.1f/255',
                    n_views, int(shaken.sum()), mean)
        return manifest

    # --------------------------------------------------------------------------
    # train
    # --------------------------------------------------------------------------

    def train(self, dataset_dir, out, resume=None, baseline=False, progress=True):
        """ Train on a dataset directory; writes checkpoint, log and config to `out`. """
        cfg = self.train_config.baseline() if baseline else self.train_config
        cfg.check()
        dataset = load_dataset(dataset_dir)
        data = prepare_training_set(dataset, cfg)
        utils.ensure_directory(out)

        if resume:
            state, saved_cfg = load_state(resume, cameras=dataset.cameras)
            logger.info('Resuming from %s at iteration %d', resume, state.iteration)
            cfg = saved_cfg
            cfg.n_iterations = max(cfg.n_iterations, self.train_config.n_iterations)
            refresh_masks(state, cfg, data.images)
        else:
            model = build_model(cfg, dataset.n_views, data.near, data.far)
            state = new_state(model, cfg, data)
        logger.info('Training %d parameters for %d iterations (%s)',
                    state.store.n_parameters, cfg.n_iterations,
                    'baseline' if baseline else 'full')

        with open(os.path.join(out, 'config.json'), 'w') as f:
            json.dump(cfg.as_dict(), f, indent=2, sort_keys=True)
        log = TrainingLog(filepath=os.path.join(out, LOG_NAME), resume=bool(resume))
        path = os.path.join(out, CHECKPOINT_NAME)

        def checkpoint(state):
            save_checkpoint(path, state, cfg)

        train(state, cfg, data, log=log, checkpoint=checkpoint, progress=progress)
        return state

    # --------------------------------------------------------------------------
    # render / eval
    # --------------------------------------------------------------------------

    def render(self, checkpoint, dataset_dir, out, views=None, size=None):
        """ Render views of the dataset's cameras from a checkpoint. """
        dataset = load_dataset(dataset_dir)
        state, cfg = load_state(checkpoint, cameras=dataset.cameras)
        views = utils.parse_views(views, dataset.n_views, dataset.eval_views)
        utils.ensure_directory(out)
        written = []
        for view in views:
            cam = dataset.cameras[view]
            if size is not None:
                cam = utils.resize_camera(cam, *size)
            image = state.model.render(state.store.blocks, cam, chunk=cfg.render_chunk)
            path = os.path.join(out, 'render_%03d.png' % view)
            write_image(path, image)
            written.append(path)
        logger.info('Rendered %d views to %s', len(written), out)
        return written

    def evaluate(self, checkpoint, dataset_dir, out, views=None):
        """ PSNR / SSIM of renders against the clean references. """
        dataset = load_dataset(dataset_dir)
        state, cfg = load_state(checkpoint, cameras=dataset.cameras)
        views = utils.parse_views(views, dataset.n_views, dataset.eval_views)
        references = []
        for view in views:
            if dataset.clean[view] is None:
                raise ValueError('View %d has no clean reference.' % view)
            references.append(dataset.clean[view])
        renders = [state.model.render(state.store.blocks, dataset.cameras[view],
                                      chunk=cfg.render_chunk) for view in views]
        names = [dataset.manifest.views[v].name for v in views]
        report = evaluate(renders, references, names)

        spec = self.degrade_spec
        inputs = [preprocess(dataset.images[v], spec) for v in views]
        input_report = evaluate(inputs, references, names)

        utils.ensure_directory(out)
        write_metric_report(os.path.join(out, 'metrics.csv'), report)
        write_metric_report(os.path.join(out, 'metrics_input.csv'), input_report)
        logger.info('Renders  PSNR / SSIM: %s', report.summary())
        logger.info('ScaleUp inputs      : %s', input_report.summary())
        return report, input_report

    # --------------------------------------------------------------------------
    # inspection
    # --------------------------------------------------------------------------

    def mask(self, dataset_dir, out, views=None):
        """ Trajectory masks of the preprocessed inputs, with low-pass heatmaps. """
        cfg = self.train_config
        dataset = load_dataset(dataset_dir)
        data = prepare_training_set(dataset, cfg)
        views = utils.parse_views(views, dataset.n_views, range(dataset.n_views))
        utils.ensure_directory(out)
        masks = {}
        for view in views:
            mask = make_mask(data.images[view], cfg.mask_mode, cfg.ctp_radius, cfg.ctp_threshold)
            stem = write_mask(out, view, mask)
            heatmap = ArrayHeatmap(
                array=mask.lowpass_image, title='View %d, %.0f%% clear' % (
                    view, 100 * mask.clear_fraction), label='Low-pass intensity')
            save_figure(heatmap.figure, stem + '_heatmap.png')
            masks[view] = mask
        logger.info('Wrote %d masks (r=%g, T=%g) to %s', len(masks), cfg.ctp_radius,
                    cfg.ctp_threshold, out)
        return masks

    def match(self, dataset_dir, out, backend='ground_truth', pairs=None):
        """ Match tables of view pairs, as flow and certainty images. """
        cfg = self.train_config
        dataset = load_dataset(dataset_dir)
        data = prepare_training_set(dataset, cfg)
        if backend == 'ground_truth':
            matcher = GroundTruthMatcher(cameras=list(dataset.cameras), depths=list(dataset.depths))
        else:
            matcher = BlockMatcher()
        if pairs is None:
            pairs = [(a, a + 1) for a in range(dataset.n_views - 1)]
        utils.ensure_directory(out)
        results = {}
        for a, b in pairs:
            flow, certainty = match_views(data.images[a], data.images[b], matcher,
                                          view_a=a, view_b=b)
            stem = write_match(out, a, b, flow, certainty)
            heatmap = ArrayHeatmap(array=certainty, title='Views %d -> %d' % (a, b),
                                   label='Certainty')
            save_figure(heatmap.figure, stem + '_heatmap.png')
            results[(a, b)] = (flow, certainty)
            logger.info('Views %d -> %d: mean certainty %.3f', a, b, certainty.mean())
        return results

    def plot(self, log_path, out):
        """ Training curve figure of a training log. """
        curve = TrainingCurve(columns=read_training_log(log_path),
                              title=os.path.basename(os.path.dirname(os.path.abspath(log_path))))
        save_figure(curve.figure, out)
        logger.info('Wrote %s', out)
        return out
