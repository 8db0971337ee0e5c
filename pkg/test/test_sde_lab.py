from sde_core.sde_lab import *

import math, struct
import numpy as np
import pytest

OU = OuSpec(1.0, 1.2, 0.3, 1.5)
GRID = TimeGrid(0.0, 0.05, 20)


def test_time_grid():
    grid = TimeGrid(0.5, 0.25, 4)
    assert grid.horizon == 1.0
    assert np.allclose(grid.times, [0.5, 0.75, 1.0, 1.25, 1.5])

    with pytest.raises(ValidationError):
        TimeGrid(0.0, 0.0, 4)

    with pytest.raises(ValidationError):
        TimeGrid(0.0, 0.1, 0)


def test_path_set_invariants():
    data = np.ones((3, 5, 2))
    paths = PathSet(TimeGrid(0.0, 1.0, 4), data, [1.0, 1.0])
    assert paths.n_paths == 3 and paths.dim == 2

    with pytest.raises(ValueError):
        paths.data[0, 0, 0] = 2.0

    with pytest.raises(ValidationError):
        PathSet(TimeGrid(0.0, 1.0, 3), data, [1.0, 1.0])

    bad = data.copy()
    bad[1, 0, 0] = 0.0

    with pytest.raises(ValidationError):
        PathSet(TimeGrid(0.0, 1.0, 4), bad, [1.0, 1.0])

    bad = data.copy()
    bad[1, 2, 0] = np.nan

    with pytest.raises(NumericError):
        PathSet(TimeGrid(0.0, 1.0, 4), bad, [1.0, 1.0])


def test_ou_spec_validation():
    with pytest.raises(ValidationError):
        OuSpec(0.0, 1.0, 0.3, 1.0)

    with pytest.raises(ValidationError):
        OuSpec(1.0, 1.0, -0.3, 1.0)


def test_simulate_ou_moments():
    paths = simulate_ou(OU, GRID, 20000, 1)
    mean, std = ou_moments(OU, GRID)
    x = paths.data[:, :, 0]
    n = paths.n_paths

    assert np.all(x[:, 0] == 1.5)
    assert np.all(np.abs(x.mean(axis=0) - mean) <= 4.0 * std / math.sqrt(n) + 1e-12)
    assert np.allclose(x[:, 1:].std(axis=0, ddof=1), std[1:], rtol=0.05)


def test_simulate_ou_deterministic():
    a = simulate_ou(OU, GRID, 10, 5)
    b = simulate_ou(OU, GRID, 10, 5)
    c = simulate_ou(OU, GRID, 4, 5)

    assert np.array_equal(a.data, b.data)
    assert np.array_equal(a.data[:4], c.data)


def test_simulate_zero_paths():
    with pytest.raises(ValidationError):
        simulate_ou(OU, GRID, 0, 1)


def test_gbm_spec_validation():
    with pytest.raises(ValidationError):
        GbmSpec([0.1], [0.0], [[1.0]], [1.0])

    with pytest.raises(ValidationError):
        GbmSpec([0.1, 0.1], [0.2, 0.2], [[1.0, 2.0], [2.0, 1.0]], [1.0, 1.0])

    with pytest.raises(ValidationError):
        GbmSpec([0.1], [0.2], [[1.0]], [-1.0])


def test_simulate_gbm():
    spec = random_gbm_spec(3, 4)
    grid = TimeGrid(0.0, 0.25, 4)
    paths = simulate_gbm(spec, grid, 20000, 2)
    mean, std = gbm_moments(spec, grid)

    assert np.all(paths.data > 0)
    assert np.allclose(paths.data.mean(axis=0), mean, rtol=0.03)
    assert np.allclose(paths.data[:, 1:].std(axis=0, ddof=1), std[1:], rtol=0.08)


def test_random_gbm_spec():
    spec = random_gbm_spec(10, 0)
    assert spec.dim == 10
    assert np.all((spec.drift >= -0.05) & (spec.drift <= 0.10))
    assert np.all((spec.vol >= 0.1) & (spec.vol <= 0.4))
    assert np.allclose(np.diag(spec.corr), 1.0)
    assert np.array_equal(spec.x0, np.ones(10))
    assert np.array_equal(random_gbm_spec(10, 0).corr, spec.corr)


def test_gbm_sqrt_corr():
    corr = np.array([[1.0, 1.0], [1.0, 1.0]])
    chol = gbm_sqrt_corr(corr)
    assert np.allclose(chol @ chol.T, corr, atol=1e-6)

    with pytest.raises(NumericError):
        gbm_sqrt_corr(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_euler_maruyama_converges():
    n_paths = 10000
    grid = TimeGrid(0.0, 0.1, 10)
    exact_mean, exact_std = ou_moments(OU, grid)
    errors = []

    for substeps in (1, 100):
        paths = euler_maruyama(ou_generic_spec(OU), grid, n_paths, substeps, 3)
        x = paths.data[:, :, 0]
        errors.append(np.abs(x.std(axis=0)[1:] - exact_std[1:]).max() + np.abs(x.mean(axis=0) - exact_mean).max())

    assert errors[1] <= errors[0] + 0.015
    assert errors[1] < 0.03


def test_euler_maruyama_gbm_positive():
    spec = random_gbm_spec(2, 1)
    paths = euler_maruyama(gbm_generic_spec(spec), TimeGrid(0.0, 0.1, 10), 200, 10, 0)
    assert np.all(paths.data > 0)


def test_euler_maruyama_non_finite():
    spec = GenericSdeSpec(lambda t, x: np.full_like(x, np.inf), lambda t, x: np.zeros((len(x), 1, 1)), [0.0], 1)

    with pytest.raises(NumericError):
        euler_maruyama(spec, TimeGrid(0.0, 0.1, 3), 5, 1, 0)


def test_slot_increments():
    paths = simulate_ou(OU, GRID, 5000, 9)
    states, incs = slot_increments(paths, 0)

    assert np.all(states == 1.5)
    assert incs.shape == (5000, 1)
    assert abs(incs.mean() - (1.2 - 1.5) * (1.0 - math.exp(-0.05))) < 3.5 * incs.std() / math.sqrt(5000)

    const = PathSet(TimeGrid(0.0, 1.0, 3), np.ones((4, 4, 1)), [1.0])
    assert np.all(slot_increments(const, 2)[1] == 0.0)

    with pytest.raises(SlotIndexError):
        slot_increments(paths, 20)

    with pytest.raises(IndexError):
        slot_increments(paths, -1)


def test_simulator_source():
    source = simulator_source(OU, GRID)
    assert np.array_equal(source(3, 1).data, simulate_ou(OU, GRID, 3, 1).data)

    with pytest.raises(ValidationError):
        simulator_source('not a spec', GRID)


def test_csv_round_trip(tmpdir):
    paths = simulate_ou(OU, TimeGrid(0.0, 0.05, 4), 3, 1)

    for name in ("paths.csv", "paths.csv.gz"):
        file_path = str(tmpdir.join(name))
        save_paths(paths, file_path)
        loaded = load_paths(file_path, dt=0.05)

        assert np.array_equal(loaded.data, paths.data)
        assert loaded.grid == paths.grid


def test_binary_format(tmpdir):
    paths = simulate_gbm(random_gbm_spec(2, 0), TimeGrid(0.5, 0.25, 3), 4, 1)
    file_path = str(tmpdir.join("paths.spg"))
    save_paths(paths, file_path)

    with open(file_path, 'rb') as f:
        head = f.read(struct.calcsize(BINARY_HEADER))

    assert struct.unpack(BINARY_HEADER, head) == (BINARY_MAGIC, 4, 4, 2, 0.5, 0.25)

    loaded = load_paths(file_path)
    assert np.array_equal(loaded.data, paths.data)
    assert loaded.grid == paths.grid


def test_bad_files(tmpdir):
    bad_magic = str(tmpdir.join("bad.spg"))

    with open(bad_magic, 'wb') as f:
        f.write(struct.pack(BINARY_HEADER, b'XXXX', 1, 2, 1, 0.0, 1.0) + bytes(16))

    with pytest.raises(DataIOError):
        load_paths(bad_magic)

    truncated = str(tmpdir.join("short.spg"))

    with open(truncated, 'wb') as f:
        f.write(struct.pack(BINARY_HEADER, BINARY_MAGIC, 1, 2, 1, 0.0, 1.0) + bytes(8))

    with pytest.raises(DataIOError):
        load_paths(truncated)

    bad_csv = str(tmpdir.join("bad.csv"))

    with open(bad_csv, 'w') as f:
        f.write("a,b,c\n1,2,3\n")

    with pytest.raises(DataIOError):
        load_paths(bad_csv)


def test_empty_csv(tmpdir):
    empty = PathSet(TimeGrid(0.0, 0.5, 3), np.zeros((0, 4, 2)), [1.0, 2.0])
    file_path = str(tmpdir.join("empty.csv"))
    save_paths(empty, file_path)

    with open(file_path) as f:
        assert f.read() == "path_id,t_index,x_0,x_1\n"

    loaded = load_paths(file_path, dt=0.5)

    assert loaded.n_paths == 0 and loaded.dim == 2
    assert np.array_equal(loaded.initial_state, np.zeros(2))


def test_gbm_correlated_returns():
    spec = GbmSpec([0.05, 0.08], [0.2, 0.3], [[1.0, 0.5], [0.5, 1.0]], [1.0, 1.0])
    paths = simulate_gbm(spec, TimeGrid(0.0, 1.0, 1), 100000, 6)
    log_ret = np.log(paths.data[:, 1] / paths.data[:, 0])

    assert abs(np.corrcoef(log_ret.T)[0, 1] - 0.5) <= 0.02
