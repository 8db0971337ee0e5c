from sde_core.pathgen import *

import math
import numpy as np
import pytest

from dataclasses import replace
from sde_core import sde_lab, util, pathgen, ddpm_core, eval_metrics
from sde_core.ddpm_core import SlotModel, make_schedule

OU = sde_lab.OuSpec(1.0, 1.2, 0.3, 1.5)
GRID = TimeGrid(0.0, 0.05, 20)
TINY = GeneratorConfig(diff_steps=20, hidden=(8, 8), train_steps=30, batch_size=16, report_every=0)


def _ou_oracle_bundle(spec, grid, diff_steps=100):
    """Slot models whose noise predictor is exact for the OU transition density."""
    schedule = make_schedule(diff_steps)
    decay = math.exp(-spec.rate * grid.dt)
    step_std = spec.vol * math.sqrt((1.0 - decay * decay) / (2.0 * spec.rate))

    def eps_fn(y, k, c_norm):
        a_bar = schedule.alpha_bar[k-1]
        target = (spec.level - c_norm) * (1.0 - decay) / step_std
        return math.sqrt(1.0 - a_bar) * (y - math.sqrt(a_bar) * target)

    models = tuple(SlotModel(n, None, np.zeros(1), np.ones(1), np.zeros(1), np.full(1, step_std),
                             schedule, eps_fn=eps_fn) for n in range(grid.n_steps))

    return GeneratorBundle(models, grid, 1, [spec.x0])


def _normal_sampler(n, states, rngs):
    return np.stack([0.1 * rng.standard_normal(states.shape[1]) for rng in rngs])


def test_autoregress_telescopes():
    grid = TimeGrid(0.0, 0.1, 6)
    paths, incs, n_failed = autoregress([0.5, -1.0], grid, 7, 3, _normal_sampler)
    start = np.broadcast_to(paths.initial_state, (7, 1, 2))

    assert n_failed == 0
    assert incs.shape == (7, 6, 2)
    assert np.array_equal(np.cumsum(np.concatenate([start, incs], axis=1), axis=1), paths.data)


def test_autoregress_path_streams():
    grid = TimeGrid(0.0, 0.1, 4)
    few = autoregress([0.0], grid, 3, 9, _normal_sampler)[0]
    many = autoregress([0.0], grid, 8, 9, _normal_sampler)[0]
    other = autoregress([0.0], grid, 3, 10, _normal_sampler)[0]

    assert np.array_equal(few.data, many.data[:3])
    assert not np.array_equal(few.data, other.data)


def test_autoregress_drops_failures():
    def sampler(n, states, rngs):
        out = np.stack([rng.standard_normal(1) for rng in rngs])
        if n == 1:
            out[::2] = np.nan

        return out

    paths, incs, n_failed = autoregress([0.0], TimeGrid(0.0, 1.0, 3), 6, 0, sampler)

    assert n_failed == 3
    assert paths.n_paths == 3
    assert np.all(np.isfinite(paths.data))


def test_autoregress_zero_paths():
    paths, incs, n_failed = autoregress([1.0, 2.0], GRID, 0, 1, _normal_sampler)

    assert paths.n_paths == 0
    assert paths.data.shape == (0, 21, 2)
    assert n_failed == 0

    with pytest.raises(ValidationError):
        autoregress([1.0], GRID, -1, 1, _normal_sampler)


def test_oracle_bundle_matches_ou():
    bundle = _ou_oracle_bundle(OU, GRID)
    paths = generate_paths(bundle, 2000, 4)
    mean, std = sde_lab.ou_moments(OU, GRID)
    x = paths.data[:, :, 0]

    assert paths.n_paths == 2000
    assert np.all(x[:, 0] == 1.5)
    assert np.all(np.abs(x.mean(axis=0) - mean) <= 0.02)
    assert np.all(np.abs(x[:, 1:].std(axis=0) / std[1:] - 1.0) <= 0.1)


def test_generate_report():
    bundle = _ou_oracle_bundle(OU, TimeGrid(0.0, 0.05, 5), 20)
    paths, report = generate_paths(bundle, 12, 1, return_report=True)
    start = np.broadcast_to(paths.initial_state, (12, 1, 1))

    assert report['n_requested'] == 12 and report['n_failed'] == 0
    assert np.array_equal(np.cumsum(np.concatenate([start, report['increments']], axis=1), axis=1), paths.data)
    assert np.array_equal(bundle_source(bundle)(12, 1).data, paths.data)


def test_bundle_validation():
    bundle = _ou_oracle_bundle(OU, TimeGrid(0.0, 0.05, 3), 20)

    with pytest.raises(ValidationError):
        GeneratorBundle(bundle.slot_models[:2], bundle.grid, 1, [1.5])

    with pytest.raises(ValidationError):
        GeneratorBundle(bundle.slot_models[::-1], bundle.grid, 1, [1.5])


def test_train_generator(tmpdir):
    grid = TimeGrid(0.0, 0.05, 3)
    dataset = sde_lab.simulate_ou(OU, grid, 40, 1)
    stat_file = str(tmpdir.join("stats.json"))
    bundle = train_generator(dataset, TINY, 5, 1, stat_file)

    assert len(bundle.slot_models) == 3
    assert [m.slot for m in bundle.slot_models] == [0, 1, 2]
    assert len(bundle.report['final_losses']) == 3
    assert 'training' in util.read_json(stat_file)

    again = train_generator(dataset, TINY, 5, 1)
    for a, b in zip(bundle.slot_models, again.slot_models):
        for p, q in zip(a.net.params(), b.net.params()):
            assert np.array_equal(p, q)

    paths = generate_paths(bundle, 10, 2)
    assert paths.grid == grid
    assert np.all(paths.data[:, 0, 0] == 1.5)


def test_train_shared_net():
    grid = TimeGrid(0.0, 0.05, 3)
    dataset = sde_lab.simulate_ou(OU, grid, 30, 2)
    bundle = train_generator(dataset, replace(TINY, shared_net=True), 1)

    assert bundle.slot_models[0].net is bundle.slot_models[2].net
    assert not np.array_equal(bundle.slot_models[0].time_feature, bundle.slot_models[1].time_feature)
    assert generate_paths(bundle, 4, 0).n_paths == 4


def test_train_generator_errors():
    grid = TimeGrid(0.0, 1.0, 3)
    const = sde_lab.PathSet(grid, np.ones((5, 4, 1)), [1.0])

    with pytest.raises(DegenerateDataError):
        train_generator(const, TINY)

    with pytest.raises(ValidationError):
        train_generator(sde_lab.simulate_ou(OU, grid, 1, 0), TINY)


def test_train_generator_log_increments():
    grid = TimeGrid(0.0, 0.5, 3)
    dataset = sde_lab.simulate_gbm(sde_lab.random_gbm_spec(2, 1), grid, 40, 1)

    for shared in (False, True):
        bundle = train_generator(dataset, replace(TINY, log_increments=True, shared_net=shared), 2)

        assert bundle.report['log_increments'] is True
        assert all(m.log_increments for m in bundle.slot_models)
        assert np.all(generate_paths(bundle, 20, 3).data > 0)

    negative = sde_lab.simulate_ou(sde_lab.OuSpec(1.0, -1.2, 0.3, -1.5), grid, 20, 4)

    with pytest.raises(ValidationError):
        train_generator(negative, replace(TINY, log_increments=True))


def test_bundle_files(tmpdir):
    grid = TimeGrid(0.0, 0.05, 2)
    dataset = sde_lab.simulate_ou(OU, grid, 30, 3)

    for shared in (False, True):
        bundle = train_generator(dataset, replace(TINY, shared_net=shared), 4)
        dir_path = str(tmpdir.join("bundle_%d" % shared))
        save_bundle(bundle, dir_path)
        loaded = load_bundle(dir_path)

        assert loaded.grid == bundle.grid
        assert np.array_equal(loaded.initial_state, bundle.initial_state)
        assert np.array_equal(generate_paths(loaded, 6, 1).data, generate_paths(bundle, 6, 1).data)

    with pytest.raises(DataIOError):
        load_bundle(str(tmpdir.join("missing")))


def test_silverman_bandwidth():
    states = np.array([[0.0, 1.0], [1.0, 1.0], [2.0, 1.0]])
    h = silverman_bandwidth(states)

    assert h[0] == pytest.approx(1.06 * 1.0 * 3 ** -0.2)
    assert h[1] == ddpm_core.STD_FLOOR


def test_sdm_mc_single_pair():
    cfg = SdmMcConfig(1.0, make_schedule(100))
    pairs = (np.array([[0.3]]), np.array([[-0.02]]))
    samples = sdm_mc_sample(pairs, [0.3], cfg, util.rng_stream(0), 50)

    assert samples.shape == (50, 1)
    assert np.allclose(samples, -0.02, atol=1e-9)
    assert sdm_mc_sample(pairs, [0.3], cfg, util.rng_stream(0)).shape == (1,)


def test_sdm_mc_kernel_limit():
    states = np.array([[0.0], [1.0], [5.0]])
    weights = pathgen._kernel_weights(states, np.array([1.0]), 1e-3)

    assert weights[1] == pytest.approx(1.0)

    with pytest.raises(NumericError):
        pathgen._kernel_weights(states, np.array([100.0]), 1e-3)


def test_sdm_mc_infinite_bandwidth():
    rng = np.random.default_rng(1)
    states = rng.standard_normal((300, 1))
    incs = 2.0 * states + 0.5 * rng.standard_normal((300, 1))
    cfg = SdmMcConfig(np.inf, make_schedule(100))

    low = sdm_mc_sample((states, incs), [-2.0], cfg, util.rng_stream(1), 3000)
    high = sdm_mc_sample((states, incs), [2.0], cfg, util.rng_stream(2), 3000)

    for samples in (low, high):
        assert abs(samples.mean() - incs.mean()) < 0.15
        assert abs(samples.std() / incs.std() - 1.0) < 0.1


@pytest.mark.slow
def test_sdm_mc_ou_slot():
    dataset = sde_lab.simulate_ou(OU, GRID, 2000, 6)
    states, incs = sde_lab.slot_increments(dataset, 0)
    cfg = SdmMcConfig(silverman_bandwidth(states), make_schedule(100))
    samples = sdm_mc_sample((states, incs), [1.5], cfg, util.rng_stream(3), 5000)

    decay = math.exp(-0.05)
    mean = (1.2 - 1.5) * (1.0 - decay)
    std = 0.3 * math.sqrt((1.0 - decay * decay) / 2.0)

    assert abs(samples.mean() - mean) < 0.006
    assert abs(samples.std() / std - 1.0) < 0.1


def test_baselines():
    grid = TimeGrid(0.0, 0.05, 4)
    dataset = sde_lab.simulate_ou(OU, grid, 200, 7)

    gaussian = baseline_generate_paths(dataset, 'gaussian', 500, 1)
    sdm_mc = baseline_source(dataset, 'sdm-mc', diff_steps=20)(20, 1)

    assert gaussian.n_paths == 500 and sdm_mc.n_paths == 20
    assert gaussian.grid == grid
    assert np.all(sdm_mc.data[:, 0, 0] == 1.5)

    real_incs = np.diff(dataset.data[:, :, 0], axis=1)
    synth_incs = np.diff(gaussian.data[:, :, 0], axis=1)
    assert np.allclose(synth_incs.mean(axis=0), real_incs.mean(axis=0), atol=0.01)

    with pytest.raises(ValidationError):
        baseline_generate_paths(dataset, 'neural-sde', 5, 1)


@pytest.mark.slow
def test_ou_generation_quality():
    dataset = sde_lab.simulate_ou(OU, GRID, 100, 21)
    bundle = train_generator(dataset, GeneratorConfig(report_every=0), 22)
    synth = generate_paths(bundle, 1000, 23)
    mean, std = sde_lab.ou_moments(OU, GRID)
    x = synth.data[:, :, 0]

    assert synth.n_paths == 1000
    assert np.all(np.abs(x.mean(axis=0) - mean) <= 0.05)
    assert np.all(np.abs(x[:, 1:].std(axis=0, ddof=1) / std[1:] - 1.0) <= 0.25)

    source = sde_lab.simulator_source(OU, GRID)
    estimate = eval_metrics.kl_experiment(source, bundle, 100, 20, 1, 24)
    baseline = eval_metrics.kl_experiment(source, baseline_source(dataset, 'gaussian'), 100, 20, 1, 24)

    assert estimate.mean <= 0.5
    assert estimate.mean < baseline.mean


@pytest.mark.slow
def test_gbm_tracking():
    spec = sde_lab.random_gbm_spec(10, 0)
    grid = TimeGrid(0.0, 1.0, 7)
    dataset = sde_lab.simulate_gbm(spec, grid, 2000, 31)
    bundle = train_generator(dataset, GeneratorConfig(report_every=0, log_increments=True), 32)
    synth = generate_paths(bundle, 20000, 33)

    real_stats = eval_metrics.path_statistics(dataset)
    synth_stats = eval_metrics.path_statistics(synth)
    mean_err = eval_metrics.max_relative_error(real_stats, synth_stats)[0]

    # The sample std of 2000 log-normal training paths is itself ~10% noisy at t=7
    _, std = sde_lab.gbm_moments(spec, grid)
    std_err = np.abs(synth_stats.std_curve[1:] / std[1:] - 1.0).max()

    assert mean_err <= 0.15
    assert std_err <= 0.15
    assert synth_stats.positivity_fraction >= 0.99
