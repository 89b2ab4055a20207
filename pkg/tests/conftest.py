import numpy as np
import pytest

from nightNeRF.application import Application
from nightNeRF.config import TrainConfig
from nightNeRF.geometry import look_at, make_camera


def pytest_addoption(parser):
    parser.addoption(
        '--runslow', action='store_true', default=False,
        help='run the end-to-end training runs')


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: end-to-end training runs')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tiny_config(**traits):
    """ A configuration small enough for unit tests. """
    values = dict(
        n_iterations=20, batch_size=8, n_coarse=8, n_fine=0, jitter=False,
        l_position=2, l_direction=1, scene_depth=2, scene_width=16,
        noise_depth=1, noise_width=8, n_motions=2, rbk_latent=4, rbk_hidden=8,
        n_aligned=3, certainty=0.5, match_every=5, log_every=5, render_chunk=512)
    values.update(traits)
    return TrainConfig(**values)


@pytest.fixture
def tiny_cfg():
    return tiny_config()


@pytest.fixture
def camera():
    pose = look_at((0.0, 0.5, 4.0), (0.0, 0.0, 0.0))
    return make_camera(pose, focal=20.0, width=16, height=12, near=1.0, far=8.0)


@pytest.fixture(scope='session')
def toy_dataset(tmp_path_factory):
    """ A 4-view synthetic dataset of 24 x 18 pixels. """
    out = str(tmp_path_factory.mktemp('toy'))
    app = Application(seed=3)
    app.degrade_spec.n_frames = 2
    app.synth(out, n_views=4, width=24, height=18)
    return out
