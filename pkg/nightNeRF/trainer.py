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
Training: the simulated low-light pixel, its losses, the two-stage schedule
and the optimizer loop.

Per ray, the training pixel is simulated as

    blur(scene) + noise          (restoration_order 'denoise_first')
    blur(scene + noise)          (restoration_order 'sharpen_first')

where blur is the rigid blur kernel of the ray's view applied to scene field
renders and noise comes from the noise estimator at the ray's mid sample.
"""

import logging
import time

import numpy as np
from tqdm import tqdm

from traits.api import HasTraits, Any, Dict, Either, Float, Instance, Int, List, Property

from . import autodiff as ad
from .autodiff import ParameterStore, Tape
from .ctp import BlurKernelNet, blur_compose, make_mask, partition_rays
from .degrade import auto_gamma, scale_up
from .errors import ConfigurationError, NightNeRFError
from .fields import NoiseField, SceneField, nestimator_eval
from .geometry import RayBatch, camera_rays
from .mlp import EncodingConfig
from .renderer import RenderSettings, render_image, render_rays
from .snd import (
    BlockMatcher, GroundTruthMatcher, MatchTable, aligned_pixels, build_match_table,
    compose_noisy_pixel, group_consistency_loss, group_rays)

logger = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class RadianceModel(HasTraits):
    """ The networks trained together, and how rays are sampled through them. """

    scene = Instance(SceneField)

    # Separate coarse scene field, if trained
    coarse = Either(None, Instance(SceneField))

    noise = Instance(NoiseField)

    rbk = Instance(BlurKernelNet)

    settings = Instance(RenderSettings)

    def init(self, seed, dtype=np.float64):
        """ Fresh parameter blocks of all networks. """
        rng = np.random.default_rng(seed)
        store = ParameterStore()
        self.scene.init(store, rng, dtype=dtype)
        if self.coarse is not None:
            self.coarse.init(store, rng, dtype=dtype)
        self.noise.init(store, rng, dtype=dtype)
        self.rbk.init(store, rng, dtype=dtype)
        return store

    def render(self, params, cam, chunk=4096):
        """ Image of `cam` from the scene field alone. """
        return render_image(self.scene, params, cam, self.settings, chunk=chunk,
                            coarse_field=self.coarse)

    def render_fn(self, params, seed=None):
        """ Ray bundle renderer bound to `params`, as used by `blur_compose`. """
        def render(origins, directions):
            return render_rays(
                self.scene, params, origins, directions, self.settings, seed=seed,
                coarse_field=self.coarse,
                coarse_params=params if self.coarse is not None else None)
        return render


def build_model(cfg, n_views, near, far):
    encoding = EncodingConfig(L_position=cfg.l_position, L_direction=cfg.l_direction)
    scene = SceneField(depth=cfg.scene_depth, width=cfg.scene_width, encoding=encoding)
    coarse = None
    if cfg.separate_coarse:
        coarse = SceneField(prefix='coarse', depth=cfg.scene_depth, width=cfg.scene_width,
                            encoding=encoding)
    return RadianceModel(
        scene=scene,
        coarse=coarse,
        noise=NoiseField(depth=cfg.noise_depth, width=cfg.noise_width, encoding=encoding),
        rbk=BlurKernelNet(n_views=n_views, n_motions=cfg.n_motions,
                          latent_dim=cfg.rbk_latent, hidden=cfg.rbk_hidden),
        settings=RenderSettings(near=near, far=far, n_coarse=cfg.n_coarse,
                                n_fine=cfg.n_fine, jitter=cfg.jitter).check())


class TrainingSet(HasTraits):
    """ Preprocessed training inputs of a dataset. """

    # ScaleUp-ed images of all views, indexed by view id
    images = List

    cameras = List

    # Depth maps for the ground truth matcher; None where unknown
    depths = List

    train_views = List(Int)

    gammas = List

    near = Float(0.0)
    far = Float(1.0)


def prepare_training_set(dataset, cfg):
    """ ScaleUp every view of a loaded `Dataset`. """
    images, gammas = [], []
    for image in dataset.images:
        gamma = cfg.scale_gamma if cfg.scale_gamma is not None else auto_gamma(image)
        images.append(scale_up(image, gamma, cfg.equalize))
        gammas.append(gamma)
    logger.info('ScaleUp gammas: %s', ', '.join('%.3f' % g for g in gammas))
    return TrainingSet(
        images=images, cameras=list(dataset.cameras), depths=list(dataset.depths),
        train_views=list(dataset.train_views), gammas=gammas,
        near=dataset.manifest.near, far=dataset.manifest.far)


class TrainState(HasTraits):
    """ Everything that changes while training. """

    model = Instance(RadianceModel)

    store = Instance(ParameterStore)

    # Adam moments per trainable block
    first_moments = Dict
    second_moments = Dict

    iteration = Int(0)

    match_table = Either(None, Instance(MatchTable))

    # CtpMask per view id
    masks = List

    cameras = List

    # Losses of the last step
    last_losses = Dict

    invalid = Property()

    def _get_invalid(self):
        return bool(self.invalid_reasons())

    def invalid_reasons(self):
        reasons = []
        for name, block in self.store.blocks.items():
            for moments in (self.first_moments, self.second_moments):
                if name in moments and moments[name].shape != block.shape:
                    reasons.append('Moment of %s does not match its shape.' % name)
        return '\n'.join(reasons)


def new_state(model, cfg, data):
    dtype = np.dtype(cfg.precision)
    store = model.init(cfg.seed, dtype=dtype)
    state = TrainState(model=model, store=store, cameras=list(data.cameras))
    reset_moments(state)
    refresh_masks(state, cfg, data.images)
    return state


def reset_moments(state):
    state.first_moments = {
        n: np.zeros_like(b) for n, b in state.store.blocks.items() if state.store.trainable[n]}
    state.second_moments = {
        n: np.zeros_like(b) for n, b in state.store.blocks.items() if state.store.trainable[n]}


# ------------------------------------------------------------------------------
# LOSSES AND SCHEDULE
# ------------------------------------------------------------------------------


def reconstruction_loss(predicted, target):
    """ Mean squared difference over rays and channels. """
    if ad.value_of(predicted).shape != np.shape(target):
        raise ValueError('Predicted %s and target %s differ in shape.' % (
            ad.value_of(predicted).shape, np.shape(target)))
    return ad.reduce_mean(ad.square(ad.sub(predicted, target)))


def total_loss(l_construction, l_consistency, alpha, beta):
    return ad.add(ad.mul(l_construction, alpha), ad.mul(l_consistency, beta))


def schedule(iteration, cfg):
    """
    (alpha, beta, learning rate) at `iteration`.

    beta switches on at the stage boundary; the learning rate decays
    exponentially by `lr_decay` between the first and the last iteration.
    """
    if not 0 <= iteration < cfg.n_iterations:
        raise ValueError('Iteration %d outside of 0-%d.' % (iteration, cfg.n_iterations - 1))
    beta = 0.0 if iteration < cfg.stage_boundary else cfg.beta_stage2
    lr = cfg.learning_rate * cfg.lr_decay ** (iteration / max(cfg.n_iterations - 1, 1))
    return cfg.alpha, beta, lr


# ------------------------------------------------------------------------------
# BATCHES
# ------------------------------------------------------------------------------


def sample_batch(data, cfg, rng):
    """ Uniformly drawn training pixels with their rays and target colors. """
    views = np.asarray(data.train_views, dtype=int)
    if views.size == 0:
        raise ConfigurationError('The dataset has no training views.')
    sizes = np.array([data.cameras[v].height * data.cameras[v].width for v in views])
    flat = rng.integers(0, sizes.sum(), size=cfg.batch_size)
    slot = np.searchsorted(np.cumsum(sizes), flat, side='right')
    offset = flat - np.concatenate([[0], np.cumsum(sizes)[:-1]])[slot]
    view_ids = views[slot]
    return make_batch(data, view_ids, offset, cfg.precision)


def make_batch(data, view_ids, pixel_index, precision='float64'):
    """ Batch of the pixels with flat (row-major) index `pixel_index` in `view_ids`. """
    view_ids = np.asarray(view_ids, dtype=int)
    n = view_ids.size
    rows = np.empty(n)
    cols = np.empty(n)
    origins = np.empty((n, 3))
    directions = np.empty((n, 3))
    targets = np.empty((n, 3))
    for view in np.unique(view_ids):
        sel = view_ids == view
        cam = data.cameras[view]
        r, c = np.divmod(np.asarray(pixel_index)[sel], cam.width)
        rows[sel], cols[sel] = r, c
        origins[sel], directions[sel] = camera_rays(cam, r, c)
        targets[sel] = data.images[view][r, c]
    dtype = np.dtype(precision)
    return RayBatch(
        view_ids=view_ids, rows=rows, cols=cols, origins=origins.astype(dtype),
        directions=directions.astype(dtype), targets=targets.astype(dtype),
        clear=np.ones(n, dtype=bool))


# ------------------------------------------------------------------------------
# FORWARD
# ------------------------------------------------------------------------------


class Simulation(HasTraits):
    """ Forward products of one batch. """

    # Simulated low-light pixel, (B, 3)
    predicted = Any

    # Scene field color of the unmoved ray, (B, 3)
    sharp = Any

    # Noise estimate of the unmoved ray, (B, 3) or None
    noise = Any

    # Same composition through the separate coarse field, or None
    predicted_coarse = Any


def simulate(model, cfg, params, batch, seed=None, detach=True):
    """
    Simulate the observed colors of `batch`.

    Rays not tagged clear reach the blur kernel only through detached
    motions, so they supervise the fields but not the kernel. `detach=False`
    skips the detaching; forward values are identical either way.
    """
    render_fn = model.render_fn(params, seed=seed)
    n_rays = batch.size
    origins, directions = batch.origins, batch.directions
    use_snd = cfg.use_snd
    sharpen_first = use_snd and cfg.restoration_order == 'sharpen_first'

    def noise_at(result, flat_directions):
        return nestimator_eval(model.noise, params, result.mid_points, flat_directions)

    if cfg.use_rbk:
        screws, weights = model.rbk(params, batch.view_ids)
        if detach:
            clear = np.asarray(batch.clear, dtype=bool)
            screws = ad.where(clear[:, None, None], screws, ad.detach(screws))
            weights = ad.where(clear[:, None], weights, ad.detach(weights))
        extra = None
        if sharpen_first:
            def extra(result, flat_origins, flat_directions):
                return noise_at(result, flat_directions)
        blurred, colors, result = blur_compose(
            origins, directions, screws, weights, render_fn,
            raw_translation=cfg.raw_translation, extra_fn=extra)
        k1 = ad.value_of(weights).shape[-1]
        first = np.arange(n_rays) * k1
        sharp_result_rgb = ad.take(result.rgb, first, axis=0)
        mid_points = ad.take(result.mid_points, first, axis=0)
    else:
        result = render_fn(origins, directions)
        blurred = result.rgb
        sharp_result_rgb = result.rgb
        mid_points = result.mid_points
        weights = None

    sim = Simulation(sharp=sharp_result_rgb)
    if use_snd and not sharpen_first:
        noise = nestimator_eval(model.noise, params, mid_points, directions)
        sim.noise = noise
        sim.predicted = compose_noisy_pixel(blurred, noise)
    else:
        sim.predicted = blurred

    if model.coarse is not None:
        if weights is not None:
            coarse = ad.reshape(result.rgb_coarse, (n_rays, k1, 3))
            coarse = ad.reduce_sum(ad.mul(ad.reshape(weights, (n_rays, k1, 1)), coarse), axis=1)
        else:
            coarse = result.rgb_coarse
        if sim.noise is not None:
            coarse = compose_noisy_pixel(coarse, sim.noise)
        sim.predicted_coarse = coarse
    return sim


def consistency_term(model, cfg, params, batch, sharp, table, cameras, seed=None):
    """
    Consistency loss of the sharp colors of `batch` and of the rays matched
    to them in `table`. Zero when nothing matches.
    """
    member_views, member_rows, member_cols, valid = aligned_pixels(
        table, batch.view_ids, batch.rows, batch.cols, cameras,
        theta=cfg.certainty, K=cfg.n_aligned)
    if not np.any(valid):
        return 0.0
    origins, directions = group_rays(cameras, member_views, member_rows, member_cols, valid)
    dtype = ad.value_of(sharp).dtype
    result = model.render_fn(params, seed=seed)(
        origins[valid].astype(dtype), directions[valid].astype(dtype))
    # slot 0 of the gather table is a zero color for unused members
    index = np.zeros(valid.shape, dtype=int)
    index[valid] = np.arange(1, int(valid.sum()) + 1)
    table_rgb = ad.concat([np.zeros((1, 3), dtype=dtype), result.rgb], axis=0)
    members = ad.take(table_rgb, index, axis=0)
    n_rays = batch.size
    colors = ad.concat([ad.reshape(sharp, (n_rays, 1, 3)), members], axis=1)
    group_valid = np.concatenate([np.ones((n_rays, 1), dtype=bool), valid], axis=1)
    return group_consistency_loss(colors, group_valid)


def step_loss(state, cfg, params, batch, beta, seed=None, detach=True):
    """
    Total loss of one batch and its parts.

    Returns
    -------
    loss : Var or array
    parts : dict
        'construction' and 'consistency' values.
    """
    alpha = cfg.alpha
    sim = simulate(state.model, cfg, params, batch, seed=seed, detach=detach)
    l_construction = reconstruction_loss(sim.predicted, batch.targets)
    if sim.predicted_coarse is not None:
        l_construction = ad.add(l_construction,
                                reconstruction_loss(sim.predicted_coarse, batch.targets))
    l_consistency = 0.0
    if beta > 0 and cfg.use_snd and state.match_table is not None:
        l_consistency = consistency_term(
            state.model, cfg, params, batch, sim.sharp, state.match_table, state.cameras,
            seed=seed)
    loss = total_loss(l_construction, l_consistency, alpha, beta)
    parts = {
        'construction': float(np.sum(ad.value_of(l_construction))),
        'consistency': float(np.sum(ad.value_of(l_consistency)))}
    return loss, parts


# ------------------------------------------------------------------------------
# OPTIMIZER
# ------------------------------------------------------------------------------


def adam_update(state, grads, lr):
    """ One bias-corrected Adam step on the trainable blocks of `state.store`. """
    t = state.iteration + 1
    correction1 = 1 - ADAM_BETA1 ** t
    correction2 = 1 - ADAM_BETA2 ** t
    for name, grad in grads.items():
        block = state.store.blocks[name]
        grad = grad.astype(block.dtype, copy=False)
        m = state.first_moments[name]
        v = state.second_moments[name]
        m *= ADAM_BETA1
        m += (1 - ADAM_BETA1) * grad
        v *= ADAM_BETA2
        v += (1 - ADAM_BETA2) * grad * grad
        step = lr * (m / correction1) / (np.sqrt(v / correction2) + ADAM_EPS)
        block -= step.astype(block.dtype, copy=False)


def step_seed(cfg, iteration, stream):
    """ Generator of one random stream of one iteration; independent of resumes. """
    return np.random.default_rng([cfg.seed, iteration, stream])


def train_step(state, cfg, batch):
    """
    One optimizer step on `batch`.

    The batch is tagged with the trajectory masks, the losses are taped and
    differentiated, and Adam updates the parameters in place.

    Returns
    -------
    state : TrainState
        The same object, one iteration further.
    """
    alpha, beta, lr = schedule(state.iteration, cfg)
    if not cfg.use_snd:
        beta = 0.0
    if cfg.use_rbk:
        partition_rays(batch, state.masks)
    seed = step_seed(cfg, state.iteration, 1) if cfg.jitter else None

    tape = Tape()
    params = tape.bind(state.store)
    loss, parts = step_loss(state, cfg, params, batch, beta, seed=seed)
    grads = tape.backward(loss)
    adam_update(state, grads, lr)

    state.last_losses = dict(parts, loss=float(ad.value_of(loss)), lr=lr, alpha=alpha,
                             beta=beta)
    state.iteration += 1
    return state


# ------------------------------------------------------------------------------
# REFRESHES
# ------------------------------------------------------------------------------


def refresh_masks(state, cfg, images):
    """ Trajectory masks of every view from `images`. """
    state.masks = [make_mask(image, cfg.mask_mode, cfg.ctp_radius, cfg.ctp_threshold)
                   for image in images]
    clear = np.mean([m.clear_fraction for m in state.masks]) if state.masks else 1.0
    logger.info('Computed %s masks, %.1f%% of the rays clear', cfg.mask_mode, 100 * clear)


def render_views(state, cfg, views):
    """ Scene field renders of `views`, as a list indexed by view id. """
    images = [None] * len(state.cameras)
    for view in views:
        images[view] = state.model.render(state.store.blocks, state.cameras[view],
                                          chunk=cfg.render_chunk)
    return images


def refresh_matches(state, cfg, data):
    """ Swap in a new match table between the training views. """
    if cfg.match_backend == 'ground_truth':
        backend = GroundTruthMatcher(cameras=list(data.cameras), depths=list(data.depths))
        images = [None] * len(data.cameras)
    else:
        backend = BlockMatcher()
        images = render_views(state, cfg, data.train_views)
    state.match_table = build_match_table(
        images, backend, views=data.train_views, iteration=state.iteration)


def before_step(state, cfg, data):
    """ Stage boundary work and periodic match refreshes. """
    it = state.iteration
    boundary = cfg.stage_boundary
    if it == boundary and cfg.mask_source == 'denoised' and cfg.use_rbk:
        logger.info('Recomputing masks from scene renders at iteration %d', it)
        renders = render_views(state, cfg, range(len(state.cameras)))
        refresh_masks(state, cfg, renders)
    if it < boundary or not cfg.use_snd or cfg.beta_stage2 == 0:
        return
    if state.match_table is None or (it - boundary) % cfg.match_every == 0:
        refresh_matches(state, cfg, data)


# ------------------------------------------------------------------------------
# LOOP
# ------------------------------------------------------------------------------


def train(state, cfg, data, log=None, checkpoint=None, progress=True):
    """
    Train until `cfg.n_iterations`.

    Parameters
    ----------
    state : TrainState
    cfg : TrainConfig
    data : TrainingSet
    log : experiment_csv.TrainingLog or None
    checkpoint : callable or None
        checkpoint(state) writes a checkpoint.
    progress : bool
        Show a progress bar.
    """
    cfg.check()
    start = time.time()
    iterations = range(state.iteration, cfg.n_iterations)
    bar = tqdm(iterations, disable=not progress, desc='train', unit='it')
    for _ in bar:
        before_step(state, cfg, data)
        batch = sample_batch(data, cfg, step_seed(cfg, state.iteration, 0))
        train_step(state, cfg, batch)
        losses = state.last_losses
        done = state.iteration
        if log is not None and (done % cfg.log_every == 0 or done == cfg.n_iterations):
            log.add(done, losses, elapsed=None if cfg.deterministic else time.time() - start)
        if done % cfg.log_every == 0:
            bar.set_postfix(loss='%.5f' % losses['construction'],
                            cons='%.5f' % losses['consistency'])
        if checkpoint is not None and cfg.checkpoint_every and done % cfg.checkpoint_every == 0:
            checkpoint(state)
        if not np.isfinite(losses['loss']):
            raise NightNeRFError('Training diverged at iteration %d.' % done)
    if checkpoint is not None:
        checkpoint(state)
    logger.info('Trained %d iterations in %.1f s', cfg.n_iterations, time.time() - start)
    return state
