import numpy as np
import pytest
from traits.api import TraitError

from nightNeRF.degrade import (
    DegradeSpec, auto_gamma, darken, equalize_histogram, make_trajectory, preprocess,
    quantize, random_screw, scale_up, shake_pose, shaken_views, synth_degrade,
    view_trajectory)
from nightNeRF.geometry import ScrewMotion, look_at, se3_exp


def clean_spec(**traits):
    values = dict(gamma=1.0, gain=1.0, noise_std=0.0, noise_signal=0.0)
    values.update(traits)
    return DegradeSpec(**values)


def test_scale_up_power_law():
    np.testing.assert_allclose(scale_up(np.full((2, 2, 3), 0.25), 0.5, equalize=False), 0.5)


def test_scale_up_rejects_bad_gamma():
    with pytest.raises(ValueError):
        scale_up(np.zeros((2, 2, 3)), 0.0)


def test_equalizing_a_flat_histogram_changes_nothing(rng):
    levels = rng.permutation(np.repeat(np.arange(256), 4)).reshape(32, 32) / 255
    image = np.stack([levels, levels.T, levels[::-1]], axis=-1)
    np.testing.assert_allclose(scale_up(image, 1.0), image, atol=1 / 255)
    np.testing.assert_allclose(equalize_histogram(image), image, atol=1e-12)


def test_equalize_keeps_constant_channel():
    image = np.full((4, 4, 3), 0.2)
    np.testing.assert_array_equal(equalize_histogram(image), image)


def test_scale_up_is_monotone(rng):
    values = np.sort(rng.uniform(0, 0.2, size=300))
    out = scale_up(np.repeat(values[None, :, None], 3, axis=-1), 0.6)[0, :, 0]
    assert np.all(np.diff(out) >= 0)


def test_auto_gamma_reaches_target(rng):
    image = rng.uniform(0, 0.1, size=(20, 20, 3))
    gamma = auto_gamma(image)
    assert gamma < 1
    assert scale_up(image, gamma, equalize=False).mean() == pytest.approx(0.4, abs=0.05)
    np.testing.assert_allclose(
        preprocess(image, DegradeSpec(equalize=False)), scale_up(image, gamma, equalize=False))


def test_identity_degradation_is_exact(rng):
    frame = rng.uniform(size=(6, 5, 3))
    np.testing.assert_array_equal(synth_degrade([frame], clean_spec(), seed=1), frame)


def test_identical_frames_only_darken():
    frames = [np.full((4, 4, 3), 0.6)] * 3
    spec = clean_spec(gamma=2.0, gain=0.5)
    np.testing.assert_allclose(synth_degrade(frames, spec, seed=0), 0.5 * 0.36, atol=1e-15)
    np.testing.assert_allclose(darken(frames[0], spec), 0.18)


def test_gaussian_noise_level():
    frame = np.full((100, 100, 3), 0.5)
    out = synth_degrade([frame], clean_spec(noise_std=0.02), seed=3)
    assert np.std(out - 0.5) == pytest.approx(0.02, rel=0.05)


def test_signal_dependent_noise():
    frame = np.concatenate([np.full((100, 50, 3), 0.2), np.full((100, 50, 3), 0.8)], axis=1)
    out = synth_degrade([frame], clean_spec(noise_signal=0.004), seed=3)
    assert np.std(out[:, :50] - 0.2) < np.std(out[:, 50:] - 0.8)


def test_degradation_is_seeded(rng):
    frames = [rng.uniform(size=(8, 8, 3)) for _ in range(2)]
    spec = DegradeSpec()
    np.testing.assert_array_equal(synth_degrade(frames, spec, seed=9), synth_degrade(frames, spec, seed=9))
    assert not np.array_equal(synth_degrade(frames, spec, seed=9), synth_degrade(frames, spec, seed=10))


def test_degradation_rejects_mismatched_frames():
    with pytest.raises(ValueError):
        synth_degrade([np.zeros((4, 4, 3)), np.zeros((4, 5, 3))], DegradeSpec(), seed=0)
    with pytest.raises(ValueError):
        synth_degrade([], DegradeSpec(), seed=0)
    spec = DegradeSpec(trajectory=[np.eye(3, 4)] * 3)
    with pytest.raises(ValueError):
        synth_degrade([np.zeros((4, 4, 3))] * 2, spec, seed=0)


def step_frames(n_frames, shape=(64, 64)):
    frames = []
    for p in range(n_frames):
        frame = np.full(shape + (3,), 0.3)
        frame[:, 20 + p:] = 0.7
        frames.append(frame)
    return frames


def test_blur_before_noise():
    spec = clean_spec(noise_std=0.02)
    for n_frames in (1, 4):
        frames = step_frames(n_frames)
        mean = np.mean(frames, axis=0)
        spread = np.sum((mean[0, :, 0] > 0.3 + 1e-9) & (mean[0, :, 0] < 0.7 - 1e-9))
        assert spread == n_frames - 1

        residual = synth_degrade(frames, spec, seed=n_frames) - mean
        lag = np.mean(residual[:, 1:] * residual[:, :-1]) / np.mean(residual ** 2)
        assert abs(lag) < 0.05


def test_invalid_gain():
    spec = DegradeSpec(gain=0.0)
    assert spec.invalid
    with pytest.raises(TraitError):
        DegradeSpec(gain=1.5)


def test_trajectory_starts_at_pose(rng):
    pose = look_at((1.0, 0.5, 3.0), (0.0, 0.0, 0.0))
    screw = ScrewMotion(r=[0.01, 0.0, -0.005], v=[0.01, 0.02, 0.0])
    path = make_trajectory(pose, screw, 5)
    assert len(path) == 5
    np.testing.assert_array_equal(path[0], pose)
    np.testing.assert_allclose(path[-1], shake_pose(pose, se3_exp(screw)), atol=1e-12)
    for p in path:
        np.testing.assert_allclose(p[:, :3].T @ p[:, :3], np.eye(3), atol=1e-12)
    assert len(make_trajectory(pose, screw, 1)) == 1


def test_view_trajectory_bounds(rng):
    pose = look_at((0.0, 0.0, 3.0), (0.0, 0.0, 0.0))
    spec = DegradeSpec(n_frames=4, max_rotation=1.0, max_translation=0.01)
    path = view_trajectory(pose, spec, rng, scene_diameter=4.0)
    assert len(path) == 4
    assert np.linalg.norm(path[-1][:, 3] - pose[:, 3]) <= 0.04 + 1e-9
    assert len(view_trajectory(pose, spec, rng, shaken=False)) == 1
    screw = random_screw(rng, 0.1, 0.2)
    assert np.linalg.norm(screw.r) <= 0.1
    assert np.linalg.norm(screw.v) <= 0.2


def test_shaken_view_count(rng):
    flags = shaken_views(12, DegradeSpec(shake_fraction=0.8), rng)
    assert flags.sum() == 10


def test_quantize():
    np.testing.assert_array_equal(quantize(np.array([-0.1, 0.0, 0.5, 1.2])), [0, 0, 128, 255])
