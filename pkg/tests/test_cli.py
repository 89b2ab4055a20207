import json
import os
import shutil

import numpy as np
import pytest

from nightNeRF.__main__ import build_parser, main, parse_pairs
from nightNeRF.application import CHECKPOINT_NAME, LOG_NAME, Application, render_novel
from nightNeRF.dataset import load_dataset, read_image
from nightNeRF.degrade import preprocess
from nightNeRF.experiment_csv import read_training_log
from nightNeRF.export import save_checkpoint
from nightNeRF.load import load_state
from nightNeRF.metrics import psnr

TINY = {
    'batch_size': 8, 'n_coarse': 8, 'n_fine': 0, 'l_position': 2, 'l_direction': 1,
    'scene_depth': 2, 'scene_width': 16, 'noise_depth': 1, 'noise_width': 8,
    'n_motions': 2, 'rbk_latent': 4, 'rbk_hidden': 8, 'n_aligned': 3,
    'match_every': 2, 'log_every': 2, 'render_chunk': 512,
}


def read_bytes(path):
    with open(path, 'rb') as f:
        return f.read()


@pytest.fixture(scope='module')
def tiny_json(tmp_path_factory):
    path = str(tmp_path_factory.mktemp('config') / 'tiny.json')
    with open(path, 'w') as f:
        json.dump(TINY, f)
    return path


def train_args(dataset, out, config, *extra):
    return ['train', dataset, out, '--config', config, '--iterations', '4',
            '--deterministic', '--no-progress'] + list(extra)


@pytest.fixture(scope='module')
def trained(toy_dataset, tiny_json, tmp_path_factory):
    out = str(tmp_path_factory.mktemp('run'))
    assert main(train_args(toy_dataset, out, tiny_json)) == 0
    return out


def test_parser_reads_shared_options():
    args = build_parser().parse_args(
        ['train', 'data', 'out', '--iterations', '4', '--batch-size', '16', '--seed', '7',
         '--deterministic', '--baseline'])
    assert args.command == 'train'
    assert args.iterations == 4
    assert args.batch_size == 16
    assert args.seed == 7
    assert args.deterministic
    assert args.baseline
    assert args.resume is None


def test_parser_needs_a_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])


def test_parse_pairs():
    assert parse_pairs('0:1,2:5') == [(0, 1), (2, 5)]
    assert parse_pairs(None) is None


def test_synth_writes_a_dataset(tmp_path):
    out = str(tmp_path / 'toy')
    assert main(['synth', out, '--views', '3', '--size', '16x12', '--seed', '1']) == 0
    dataset = load_dataset(out)
    assert dataset.n_views == 3
    assert dataset.images[0].shape == (12, 16, 3)
    assert all(clean is not None for clean in dataset.clean)
    assert all(depth.shape == (12, 16) for depth in dataset.depths)
    assert os.path.exists(os.path.join(out, 'degrade.json'))


def test_synth_is_seeded(tmp_path):
    for name in ('a', 'b'):
        assert main(['synth', str(tmp_path / name), '--views', '2', '--size', '16x12',
                     '--seed', '5']) == 0
    a, b = load_dataset(str(tmp_path / 'a')), load_dataset(str(tmp_path / 'b'))
    for image_a, image_b in zip(a.images, b.images):
        np.testing.assert_array_equal(image_a, image_b)


def test_synth_darkens_the_scene(toy_dataset):
    dataset = load_dataset(toy_dataset)
    for image, clean in zip(dataset.images, dataset.clean):
        assert image.mean() < clean.mean()


def test_train_writes_checkpoint_log_and_config(trained):
    assert os.path.exists(os.path.join(trained, CHECKPOINT_NAME))
    columns = read_training_log(os.path.join(trained, LOG_NAME))
    np.testing.assert_array_equal(columns['iteration'], [2, 4])
    assert np.all(np.isnan(columns['elapsed']))
    with open(os.path.join(trained, 'config.json')) as f:
        saved = json.load(f)
    assert saved['n_iterations'] == 4
    assert saved['scene_width'] == 16
    assert saved['deterministic'] is True

    state, cfg = load_state(os.path.join(trained, CHECKPOINT_NAME))
    assert state.iteration == 4
    assert cfg.n_motions == 2


def test_deterministic_training_is_byte_identical(trained, toy_dataset, tiny_json, tmp_path):
    out = str(tmp_path / 'again')
    assert main(train_args(toy_dataset, out, tiny_json)) == 0
    for name in (CHECKPOINT_NAME, LOG_NAME, 'config.json'):
        assert read_bytes(os.path.join(out, name)) == read_bytes(os.path.join(trained, name))


def test_resume_continues_the_log(trained, toy_dataset, tiny_json, tmp_path):
    out = str(tmp_path / 'resumed')
    shutil.copytree(trained, out)
    checkpoint = os.path.join(out, CHECKPOINT_NAME)
    assert main(['train', toy_dataset, out, '--iterations', '6', '--resume', checkpoint,
                 '--deterministic', '--no-progress']) == 0
    columns = read_training_log(os.path.join(out, LOG_NAME))
    np.testing.assert_array_equal(columns['iteration'], [2, 4, 6])
    state, _ = load_state(checkpoint)
    assert state.iteration == 6


def test_baseline_switches_modules_off(toy_dataset, tiny_json, tmp_path):
    out = str(tmp_path / 'baseline')
    assert main(train_args(toy_dataset, out, tiny_json, '--baseline')) == 0
    with open(os.path.join(out, 'config.json')) as f:
        saved = json.load(f)
    assert saved['use_rbk'] is False
    assert saved['use_snd'] is False
    assert saved['mask_mode'] == 'none'
    state, _ = load_state(os.path.join(out, CHECKPOINT_NAME))
    assert state.iteration == 4


def test_render_is_reproducible(trained, toy_dataset, tmp_path):
    checkpoint = os.path.join(trained, CHECKPOINT_NAME)
    for name in ('a', 'b'):
        assert main(['render', checkpoint, toy_dataset, str(tmp_path / name),
                     '--views', 'all']) == 0
    files = sorted(os.listdir(str(tmp_path / 'a')))
    assert files == ['render_%03d.png' % i for i in range(4)]
    for name in files:
        assert read_bytes(str(tmp_path / 'a' / name)) == read_bytes(str(tmp_path / 'b' / name))


def test_render_size_option(trained, toy_dataset, tmp_path):
    out = str(tmp_path / 'small')
    assert main(['render', os.path.join(trained, CHECKPOINT_NAME), toy_dataset, out,
                 '--views', '1', '--size', '12x9']) == 0
    assert read_image(os.path.join(out, 'render_001.png')).shape == (9, 12, 3)


def test_eval_writes_metric_reports(trained, toy_dataset, tmp_path):
    out = str(tmp_path / 'eval')
    assert main(['eval', os.path.join(trained, CHECKPOINT_NAME), toy_dataset, out]) == 0
    for name in ('metrics.csv', 'metrics_input.csv'):
        with open(os.path.join(out, name)) as f:
            lines = f.read().splitlines()
        assert lines[0] == 'view,psnr,ssim'
        # one held-out view out of four
        assert lines[1].startswith('view_002,')
        assert lines[2].startswith('mean,')


def test_mask_and_match_write_images(toy_dataset, tmp_path):
    masks = str(tmp_path / 'masks')
    assert main(['mask', toy_dataset, masks, '--views', '0,3']) == 0
    for view in (0, 3):
        for suffix in ('.png', '_lowpass.png', '_heatmap.png'):
            assert os.path.exists(os.path.join(masks, 'mask_%03d%s' % (view, suffix)))

    matches = str(tmp_path / 'matches')
    assert main(['match', toy_dataset, matches, '--pairs', '0:1']) == 0
    for suffix in ('_flow.png', '_certainty.png', '_heatmap.png'):
        assert os.path.exists(os.path.join(matches, 'match_000_001%s' % suffix))


def test_match_block_backend_defaults_to_neighbours(toy_dataset, tmp_path):
    out = str(tmp_path / 'block')
    assert main(['match', toy_dataset, out, '--backend', 'block']) == 0
    for a in range(3):
        assert os.path.exists(os.path.join(out, 'match_%03d_%03d_flow.png' % (a, a + 1)))


def test_plot_writes_a_figure(trained, tmp_path):
    out = str(tmp_path / 'curve.png')
    assert main(['plot', os.path.join(trained, LOG_NAME), out]) == 0
    with open(out, 'rb') as f:
        assert f.read(8) == b'\x89PNG\r\n\x1a\n'


def test_errors_return_one(trained, toy_dataset, tmp_path):
    checkpoint = os.path.join(trained, CHECKPOINT_NAME)
    out = str(tmp_path / 'out')
    assert main(['render', str(tmp_path / 'missing.npz'), toy_dataset, out]) == 1
    assert main(['render', checkpoint, toy_dataset, out, '--size', 'big']) == 1
    assert main(['render', checkpoint, toy_dataset, out, '--views', '9']) == 1
    assert main(['train', toy_dataset, out, '--config', str(tmp_path / 'none.json')]) == 1
    assert main(['mask', str(tmp_path / 'nowhere'), out]) == 1


def test_invalid_config_value_returns_one(toy_dataset, tmp_path):
    path = str(tmp_path / 'bad.json')
    with open(path, 'w') as f:
        json.dump({'certainty': 1.5}, f)
    assert main(['train', toy_dataset, str(tmp_path / 'out'), '--config', path]) == 1


def test_render_novel_ignores_everything_but_the_scene_field(trained, camera, tmp_path):
    state, cfg = load_state(os.path.join(trained, CHECKPOINT_NAME))
    for block in state.store.blocks.values():
        block[...] = 0.0
    path = str(tmp_path / 'zero.npz')
    save_checkpoint(path, state, cfg)
    image = render_novel(path, camera)
    assert image.shape == (12, 16, 3)
    np.testing.assert_allclose(image, np.broadcast_to(image[0, 0], image.shape), atol=1e-12)
    assert 0.0 < image[0, 0, 0] < 0.5


@pytest.mark.slow
def test_full_model_beats_baseline_on_held_out_views(tmp_path):
    data = str(tmp_path / 'toy')
    app = Application(seed=0)
    app.synth(data, n_views=12, width=96, height=72)
    reports = {}
    for name, baseline in (('full', False), ('baseline', True)):
        run = Application(seed=0, deterministic=True)
        run.configure({'n_iterations': 20000, 'batch_size': 512})
        out = str(tmp_path / name)
        run.train(data, out, baseline=baseline, progress=False)
        reports[name] = run.evaluate(os.path.join(out, CHECKPOINT_NAME), data, out)
    full, _ = reports['full']
    base, inputs = reports['baseline']
    assert full.mean_psnr >= base.mean_psnr + 1.0
    assert full.mean_psnr > inputs.mean_psnr


@pytest.mark.slow
def test_restored_training_view_beats_its_input(toy_dataset, tmp_path):
    run = Application(seed=0, deterministic=True)
    run.configure({'n_iterations': 3000, 'batch_size': 256, 'n_coarse': 32, 'n_fine': 16})
    out = str(tmp_path / 'run')
    state = run.train(toy_dataset, out, progress=False)
    dataset = load_dataset(toy_dataset)
    view = dataset.train_views[0]
    render = state.model.render(state.store.blocks, dataset.cameras[view])
    scaled = preprocess(dataset.images[view], run.degrade_spec)
    assert psnr(render, dataset.clean[view]) > psnr(scaled, dataset.clean[view])


@pytest.mark.slow
def test_denoising_first_is_not_worse_than_sharpening_first(tmp_path):
    data = str(tmp_path / 'toy')
    Application(seed=0).synth(data, n_views=12, width=96, height=72)
    scores = {}
    for order in ('denoise_first', 'sharpen_first'):
        run = Application(seed=0, deterministic=True)
        run.configure({'n_iterations': 20000, 'batch_size': 512, 'restoration_order': order})
        out = str(tmp_path / order)
        run.train(data, out, progress=False)
        report, _ = run.evaluate(os.path.join(out, CHECKPOINT_NAME), data, out)
        scores[order] = report.mean_psnr
    assert scores['denoise_first'] >= scores['sharpen_first']
