from sde_core.eval_metrics import *

import math
import numpy as np
import pytest
import hypothesis as hp

from hypothesis import strategies as st
from scipy.spatial import cKDTree
from sde_core import sde_lab, util
from sde_core.eval_metrics import _kth_distances

OU = sde_lab.OuSpec(1.0, 1.2, 0.3, 1.5)
GRID = sde_lab.TimeGrid(0.0, 0.05, 20)


def _samples(seed, n, m, dim):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, dim)), 0.5 + rng.standard_normal((m, dim))


def test_knn_kl_hand_formula():
    p = np.array([[0.0], [1.0], [3.0]])
    q = np.array([[0.5], [10.0]])
    expect = (math.log(0.5 / 1.0) + math.log(0.5 / 1.0) + math.log(2.5 / 2.0)) / 3.0 + math.log(2.0 / 2.0)

    assert knn_kl(p, q) == pytest.approx(expect)
    assert knn_kl(p[:, 0], q[:, 0]) == pytest.approx(expect)


def test_knn_kl_distance_floor():
    p = np.array([[0.0], [0.0], [1.0]])
    q = np.array([[0.0], [5.0]])
    result = knn_kl_details(p, q)

    assert result.n_floored == 2
    assert result.estimate == pytest.approx(0.0)
    assert result.warnings


def test_knn_kl_validation():
    with pytest.raises(ValidationError):
        knn_kl(np.zeros((5, 2)), np.zeros((5, 3)))

    with pytest.raises(ValidationError):
        knn_kl(np.zeros((1, 2)), np.zeros((5, 2)))

    with pytest.raises(ValidationError):
        knn_kl(np.zeros((5, 2)), np.zeros((5, 2)), k=0)


def test_knn_kl_tree_matches_brute_force():
    rng = np.random.default_rng(3)
    p = rng.standard_normal((2500, 3))
    q = rng.standard_normal((2600, 3)) + 0.2

    tree = knn_kl(p, q, k=2)
    brute = _kth_distances(p[:1000], p[:1000], 2, True)
    small = knn_kl(p[:1000], q[:1000], k=2)

    assert np.allclose(brute, cKDTree(p[:1000]).query(p[:1000], k=3)[0][:, -1])
    assert np.isfinite(tree) and np.isfinite(small)


@hp.settings(max_examples=25, deadline=None)
@hp.given(seed=st.integers(0, 2**31), k=st.integers(1, 3))
def test_knn_kl_permutation_invariance(seed, k):
    p, q = _samples(seed, 40, 30, 3)
    rng = np.random.default_rng(seed + 1)

    base = knn_kl(p, q, k)
    assert knn_kl(p[rng.permutation(40)], q[rng.permutation(30)], k) == pytest.approx(base, rel=1e-9, abs=1e-12)


@hp.settings(max_examples=25, deadline=None)
@hp.given(seed=st.integers(0, 2**31))
def test_knn_kl_orthogonal_invariance(seed):
    p, q = _samples(seed, 50, 40, 4)
    rot, _ = np.linalg.qr(np.random.default_rng(seed + 7).standard_normal((4, 4)))

    assert knn_kl(p @ rot, q @ rot) == pytest.approx(knn_kl(p, q), rel=1e-7, abs=1e-9)


def test_knn_kl_calibration():
    values = []
    same = []

    for seed in range(10):
        rng = np.random.default_rng(seed)
        p = rng.standard_normal((5000, 1))
        values.append(knn_kl(p, 1.0 + rng.standard_normal((5000, 1))))
        same.append(knn_kl(p, rng.standard_normal((5000, 1))))

    assert abs(np.mean(values) - 0.5) <= 0.1
    assert abs(np.mean(same)) <= 0.05


def test_paths_to_vectors():
    paths = sde_lab.simulate_gbm(sde_lab.random_gbm_spec(2, 0), sde_lab.TimeGrid(0.0, 1.0, 3), 4, 1)
    vectors = paths_to_vectors(paths)

    assert vectors.shape == (4, 6)
    assert np.array_equal(vectors[1, :2], paths.data[1, 1])
    assert np.array_equal(vectors[1, 4:], paths.data[1, 3])


def test_path_statistics():
    paths = sde_lab.simulate_ou(OU, GRID, 50, 2)
    stats = path_statistics(paths)
    shuffled = path_statistics(paths.subset(np.random.default_rng(0).permutation(50)))

    assert stats.mean_curve.shape == (21, 1)
    assert stats.std_curve[0, 0] == 0.0
    assert stats.positivity_fraction == 1.0
    assert np.allclose(stats.mean_curve, shuffled.mean_curve, rtol=1e-12)
    assert np.allclose(stats.std_curve, shuffled.std_curve, rtol=1e-12)

    with pytest.raises(ValidationError):
        path_statistics(paths.subset(slice(0, 1)))


def test_max_relative_error():
    paths = sde_lab.simulate_ou(OU, GRID, 50, 2)
    stats = path_statistics(paths)

    assert max_relative_error(stats, stats) == (0.0, 0.0)


def test_kl_experiment_self_comparison():
    source = sde_lab.simulator_source(OU, GRID)
    estimate = kl_experiment(source, source, 100, 30, seed=3)
    baseline = kl_experiment(source, source, 100, 30, seed=4)

    assert estimate.n_repeats == 30
    assert estimate.dim == 20
    assert len(estimate.values) == 30
    assert abs(estimate.mean - baseline.mean) <= 3.0 * math.hypot(estimate.std_error, baseline.std_error) + 0.05
    assert str(estimate) == '%.4f ± %.4f' % (estimate.mean, estimate.std_error)


def test_kl_experiment_single_repeat():
    source = sde_lab.simulator_source(OU, GRID)
    estimate = kl_experiment(source, source, 20, 1, seed=0)

    assert estimate.single_repeat
    assert estimate.std_error == 0.0
    assert any('Single repeat' in w for w in estimate.warnings)

    with pytest.raises(ValidationError):
        kl_experiment(source, source, 20, 0)

    with pytest.raises(ValidationError):
        kl_experiment(source, source, 1, 3)


def test_kl_experiment_deterministic():
    source = sde_lab.simulator_source(OU, GRID)
    first = kl_experiment(source, source, 30, 3, seed=8)
    second = kl_experiment(source, source, 30, 3, seed=8)

    assert first.values == second.values


def test_metric_report(tmpdir):
    estimate = KlEstimate(0.15, 0.01, 20, 1, 20, (0.1, 0.2))
    file_path = str(tmpdir.join("kl_report.json"))
    write_metric_report(file_path, estimate, {'seed': 1})
    report = util.read_json(file_path)

    assert report['mean'] == 0.15
    assert report['std_error'] == 0.01
    assert report['orientation'] == 'real||synthetic'
    assert report['config'] == {'seed': 1}
    assert report['single_repeat'] is False


def test_moment_curves_csv(tmpdir):
    real = sde_lab.simulate_ou(OU, GRID, 20, 1)
    synth = sde_lab.simulate_ou(OU, GRID, 20, 2)
    file_path = str(tmpdir.join("moments.csv"))
    write_moment_curves_csv(file_path, GRID, path_statistics(real), path_statistics(synth))

    with open(file_path) as f:
        lines = f.read().splitlines()

    assert lines[0] == 't,dim,real_mean,synth_mean,real_std,synth_std'
    assert len(lines) == 22
    assert lines[1].startswith('0.0,0,1.5,1.5,0.0,0.0')
