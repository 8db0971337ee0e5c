"""
Ground-truth SDE specifications and simulators, used to create training path
sets and closed-form oracle statistics. Also holds the PathSet file formats.
"""

import struct
import numpy as np

from dataclasses import dataclass, field
from functools import partial
from typing import Callable

from sde_core import util
from sde_core.util import ValidationError, NumericError, SlotIndexError, DataIOError

BINARY_MAGIC = b'SPG1'
BINARY_HEADER = '<4sIIIdd'
BINARY_EXT = '.spg'
CSV_EXT = '.csv'
CHOL_JITTER = 1e-8
PSD_TOL = 1e-10
GBM_DRIFT_RANGE = (-0.05, 0.10)
GBM_VOL_RANGE = (0.1, 0.4)


@dataclass(frozen=True)
class TimeGrid:

  t0: float
  dt: float
  n_steps: int

  def __post_init__(self):
    if not (np.isfinite(self.dt) and self.dt > 0):
      raise ValidationError('Time step dt must be positive (%s given)' % self.dt)

    if int(self.n_steps) != self.n_steps or self.n_steps < 1:
      raise ValidationError('Number of grid steps must be an integer >= 1 (%s given)' % self.n_steps)

    if not np.isfinite(self.t0):
      raise ValidationError('Grid origin t0 must be finite')

    object.__setattr__(self, 't0', float(self.t0))
    object.__setattr__(self, 'dt', float(self.dt))
    object.__setattr__(self, 'n_steps', int(self.n_steps))

  @property
  def horizon(self):

    return self.n_steps * self.dt

  @property
  def times(self):

    return self.t0 + np.arange(self.n_steps+1) * self.dt

  def time(self, n):

    return self.t0 + n * self.dt


@dataclass(frozen=True, eq=False)
class PathSet:

  grid: TimeGrid
  data: np.ndarray
  initial_state: np.ndarray

  def __post_init__(self):
    data = np.array(self.data, dtype=np.float64, order='C')
    x0 = np.array(self.initial_state, dtype=np.float64).ravel()

    if data.ndim != 3:
      raise ValidationError('Path data must have shape H x (N_T+1) x d (got %d dims)' % data.ndim)

    n_paths, n_points, dim = data.shape

    if n_points != self.grid.n_steps + 1:
      raise ValidationError('Path data has %d time points but grid has %d' % (n_points, self.grid.n_steps + 1))

    if dim < 1 or len(x0) != dim:
      raise ValidationError('Initial state dimension %d does not match path dimension %d' % (len(x0), dim))

    if not np.all(np.isfinite(data)):
      raise NumericError('Path data contains non-finite values')

    if n_paths and not np.array_equal(data[:,0], np.broadcast_to(x0, (n_paths, dim))):
      raise ValidationError('Every path must start at the initial state')

    data.setflags(write=False)
    x0.setflags(write=False)
    object.__setattr__(self, 'data', data)
    object.__setattr__(self, 'initial_state', x0)

  @property
  def n_paths(self):

    return self.data.shape[0]

  @property
  def dim(self):

    return self.data.shape[2]

  def subset(self, idx):

    return PathSet(self.grid, self.data[idx], self.initial_state)


@dataclass(frozen=True)
class OuSpec:

  rate: float
  level: float
  vol: float
  x0: float

  def __post_init__(self):
    if not self.rate > 0:
      raise ValidationError('OU mean-reversion rate must be > 0 (%s given)' % self.rate)

    if not self.vol > 0:
      raise ValidationError('OU volatility must be > 0 (%s given)' % self.vol)

    if not np.all(np.isfinite([self.rate, self.level, self.vol, self.x0])):
      raise ValidationError('OU parameters must be finite')


@dataclass(frozen=True, eq=False)
class GbmSpec:

  drift: np.ndarray
  vol: np.ndarray
  corr: np.ndarray
  x0: np.ndarray

  def __post_init__(self):
    drift = np.array(self.drift, float).ravel()
    vol = np.array(self.vol, float).ravel()
    x0 = np.array(self.x0, float).ravel()
    corr = np.array(self.corr, float)
    d = len(drift)

    if not (len(vol) == len(x0) == d) or corr.shape != (d, d):
      raise ValidationError('GBM parameter shapes are inconsistent for dimension %d' % d)

    if np.any(vol <= 0):
      raise ValidationError('GBM volatilities must be strictly positive')

    if np.any(x0 <= 0):
      raise ValidationError('GBM initial state must be strictly positive')

    if not np.allclose(corr, corr.T, atol=1e-12):
      raise ValidationError('GBM correlation matrix must be symmetric')

    if not np.allclose(np.diag(corr), 1.0, atol=1e-12):
      raise ValidationError('GBM correlation matrix must have a unit diagonal')

    if np.linalg.eigvalsh(corr).min() < -PSD_TOL:
      raise ValidationError('GBM correlation matrix is not positive semidefinite')

    for name, arr in (('drift', drift), ('vol', vol), ('x0', x0), ('corr', corr)):
      arr.setflags(write=False)
      object.__setattr__(self, name, arr)

  @property
  def dim(self):

    return len(self.drift)

  @property
  def brownian_dim(self):

    return len(self.drift)


@dataclass(frozen=True, eq=False)
class GenericSdeSpec:

  drift_fn: Callable
  diff_fn: Callable
  x0: np.ndarray
  brownian_dim: int

  def __post_init__(self):
    x0 = np.array(self.x0, float).ravel()

    if int(self.brownian_dim) < 1:
      raise ValidationError('Brownian dimension must be >= 1')

    if not np.all(np.isfinite(x0)):
      raise ValidationError('Initial state must be finite')

    x0.setflags(write=False)
    object.__setattr__(self, 'x0', x0)
    object.__setattr__(self, 'brownian_dim', int(self.brownian_dim))

  @property
  def dim(self):

    return len(self.x0)


def _check_n_paths(n_paths):

  if int(n_paths) != n_paths or n_paths < 1:
    raise ValidationError('Number of paths must be an integer >= 1 (%s given)' % n_paths)

  return int(n_paths)


def _path_normals(seed, n_paths, n_draws, width):
  # Path i always reads from its own stream, whatever n_paths is
  normals = np.empty((n_paths, n_draws, width))

  for i in range(n_paths):
    normals[i] = util.rng_stream(seed, i).standard_normal((n_draws, width))

  return normals


def simulate_ou(spec, grid, n_paths, seed):
  """
  Exact-transition Ornstein-Uhlenbeck simulation on a uniform grid.
  """

  n_paths = _check_n_paths(n_paths)
  decay = np.exp(-spec.rate * grid.dt)
  step_std = spec.vol * np.sqrt((1.0 - np.exp(-2.0 * spec.rate * grid.dt)) / (2.0 * spec.rate))

  normals = _path_normals(seed, n_paths, grid.n_steps, 1)
  data = np.empty((n_paths, grid.n_steps+1, 1))
  data[:,0] = spec.x0

  for n in range(grid.n_steps):
    data[:,n+1] = spec.level + (data[:,n] - spec.level) * decay + step_std * normals[:,n]

  return PathSet(grid, data, [spec.x0])


def gbm_sqrt_corr(corr):
  """
  Lower-triangular square root of a correlation matrix, retrying with diagonal jitter.
  """

  corr = np.asarray(corr, float)

  try:
    return np.linalg.cholesky(corr)

  except np.linalg.LinAlgError:
    pass

  jittered = corr + CHOL_JITTER * np.eye(len(corr))

  try:
    return np.linalg.cholesky(jittered)

  except np.linalg.LinAlgError:
    min_eig = np.linalg.eigvalsh(corr).min()
    raise NumericError('Correlation matrix is not positive semidefinite after jitter (min eigenvalue %.3e)' % min_eig)


def simulate_gbm(spec, grid, n_paths, seed):
  """
  Exact log-normal stepping of a correlated multi-dimensional GBM.
  """

  n_paths = _check_n_paths(n_paths)
  d = spec.dim
  chol = gbm_sqrt_corr(spec.corr)

  normals = _path_normals(seed, n_paths, grid.n_steps, d) @ chol.T
  log_drift = (spec.drift - 0.5 * spec.vol**2) * grid.dt
  log_vol = spec.vol * np.sqrt(grid.dt)

  log_steps = log_drift + log_vol * normals
  log_paths = np.concatenate([np.zeros((n_paths, 1, d)), np.cumsum(log_steps, axis=1)], axis=1)
  data = spec.x0 * np.exp(log_paths)
  data[:,0] = spec.x0

  if np.any(data <= 0):
    raise NumericError('GBM simulation underflowed to non-positive values; reduce the horizon or volatility')

  return PathSet(grid, data, spec.x0)


def euler_maruyama(spec, grid, n_paths, substeps, seed):
  """
  Euler-Maruyama with internal step dt/substeps; only grid points are recorded.
  """

  n_paths = _check_n_paths(n_paths)

  if int(substeps) != substeps or substeps < 1:
    raise ValidationError('Number of substeps must be an integer >= 1 (%s given)' % substeps)

  substeps = int(substeps)
  d = spec.dim
  m = spec.brownian_dim
  h = grid.dt / substeps
  sqrt_h = np.sqrt(h)

  normals = _path_normals(seed, n_paths, grid.n_steps * substeps, m)
  data = np.empty((n_paths, grid.n_steps+1, d))
  data[:,0] = spec.x0
  x = np.array(data[:,0])

  for n in range(grid.n_steps):
    for s in range(substeps):
      t = grid.time(n) + s * h
      j = n * substeps + s
      drift = np.broadcast_to(np.asarray(spec.drift_fn(t, x), float), (n_paths, d))
      diff = np.broadcast_to(np.asarray(spec.diff_fn(t, x), float), (n_paths, d, m))
      bad = ~(np.isfinite(drift).all(axis=1) & np.isfinite(diff).all(axis=(1,2)))

      if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise NumericError('Non-finite drift/diffusion at t=%.6g for path %d' % (t, i))

      x = x + drift * h + np.einsum('ijk,ik->ij', diff, normals[:,j]) * sqrt_h

    if not np.all(np.isfinite(x)):
      i = int(np.flatnonzero(~np.isfinite(x).all(axis=1))[0])
      raise NumericError('Non-finite state at t=%.6g for path %d' % (grid.time(n+1), i))

    data[:,n+1] = x

  return PathSet(grid, data, spec.x0)


def ou_generic_spec(spec):

  drift_fn = lambda t, x: spec.rate * (spec.level - x)
  diff_fn = lambda t, x: np.full((len(x), 1, 1), spec.vol)

  return GenericSdeSpec(drift_fn, diff_fn, [spec.x0], 1)


def gbm_generic_spec(spec):

  chol = gbm_sqrt_corr(spec.corr)
  drift_fn = lambda t, x: spec.drift * x
  diff_fn = lambda t, x: x[:,:,None] * (spec.vol[:,None] * chol)[None]

  return GenericSdeSpec(drift_fn, diff_fn, spec.x0, spec.dim)


def random_gbm_spec(d, seed):

  if int(d) != d or d < 1:
    raise ValidationError('GBM dimension must be an integer >= 1 (%s given)' % d)

  d = int(d)
  rng = util.rng_stream(seed)
  drift = rng.uniform(*GBM_DRIFT_RANGE, size=d)
  vol = rng.uniform(*GBM_VOL_RANGE, size=d)
  mat_a = rng.standard_normal((d, d))

  gram = mat_a @ mat_a.T
  scale = 1.0 / np.sqrt(np.diag(gram))
  corr = gram * np.outer(scale, scale)
  corr = 0.5 * (corr + corr.T)
  np.fill_diagonal(corr, 1.0)

  return GbmSpec(drift, vol, corr, np.ones(d))


def slot_increments(paths, n):
  """
  Training pairs for slot n: states x(t_n) and increments x(t_{n+1}) - x(t_n),
  returned as two stacked H x d arrays (row i is pair i).
  """

  if int(n) != n or not (0 <= n < paths.grid.n_steps):
    raise SlotIndexError('Slot index %s outside 0..%d' % (n, paths.grid.n_steps-1))

  states = np.array(paths.data[:,n])
  increments = paths.data[:,n+1] - paths.data[:,n]

  return states, increments


def ou_moments(spec, grid):
  """
  Closed-form OU mean and standard deviation at every grid point.
  """

  s = grid.times - grid.t0
  mean = spec.level + (spec.x0 - spec.level) * np.exp(-spec.rate * s)
  std = spec.vol * np.sqrt((1.0 - np.exp(-2.0 * spec.rate * s)) / (2.0 * spec.rate))

  return mean, std


def gbm_moments(spec, grid):
  """
  Closed-form per-coordinate GBM mean and standard deviation, shape (N_T+1) x d.
  """

  s = (grid.times - grid.t0)[:,None]
  mean = spec.x0 * np.exp(spec.drift * s)
  std = mean * np.sqrt(np.expm1(spec.vol**2 * s))

  return mean, std


def _simulate_generic(spec, grid, n_paths, seed, substeps):

  return euler_maruyama(spec, grid, n_paths, substeps, seed)


def simulator_source(spec, grid, substeps=1):
  """
  Picklable (n_paths, seed) -> PathSet provider of real paths for a specification.
  """

  if isinstance(spec, OuSpec):
    return partial(simulate_ou, spec, grid)

  if isinstance(spec, GbmSpec):
    return partial(simulate_gbm, spec, grid)

  if isinstance(spec, GenericSdeSpec):
    return partial(_simulate_generic, spec, grid, substeps=substeps)

  raise ValidationError('Unknown SDE specification type %s' % type(spec).__name__)


def save_paths_csv(paths, file_path):

  header = ['path_id', 't_index'] + ['x_%d' % j for j in range(paths.dim)]

  with util.open_file(file_path, 'w') as file_obj:
    write = file_obj.write
    write(','.join(header) + '\n')

    for i, path in enumerate(paths.data):
      for n, row in enumerate(path):
        write('%d,%d,%s\n' % (i, n, ','.join(repr(float(v)) for v in row)))

  return file_path


def load_paths_csv(file_path, dt=1.0, t0=0.0):

  util.check_regular_file(file_path, critical=True)
  rows = {}

  with util.open_file(file_path) as file_obj:
    header = file_obj.readline().strip().split(',')

    if header[:2] != ['path_id', 't_index'] or len(header) < 3:
      raise DataIOError('File "%s" lacks a "path_id,t_index,x_0,..." header' % file_path)

    dim = len(header) - 2

    for line_no, line in enumerate(file_obj, 2):
      line = line.strip()

      if not line:
        continue

      fields = line.split(',')

      if len(fields) != dim + 2:
        raise DataIOError('Line %d of "%s" has %d fields, expected %d' % (line_no, file_path, len(fields), dim+2))

      try:
        key = int(fields[0]), int(fields[1])
        rows[key] = [float(v) for v in fields[2:]]

      except ValueError:
        raise DataIOError('Line %d of "%s" could not be parsed' % (line_no, file_path))

  if not rows:
    # A saved empty set keeps only its header; the grid length is not recoverable
    util.warn('File "%s" holds no path rows; loading an empty one-step path set' % file_path)
    return PathSet(TimeGrid(t0, dt, 1), np.zeros((0, 2, dim)), np.zeros(dim))

  n_paths = max(k[0] for k in rows) + 1
  n_points = max(k[1] for k in rows) + 1

  if len(rows) != n_paths * n_points:
    raise DataIOError('File "%s" does not hold a complete H x (N_T+1) table' % file_path)

  data = np.empty((n_paths, n_points, dim))

  for (i, n), row in rows.items():
    data[i, n] = row

  return PathSet(TimeGrid(t0, dt, n_points-1), data, data[0,0])


def write_binary_paths(file_path, data, t0, dt):

  data = np.ascontiguousarray(data, dtype='<f8')
  n_paths, n_points, dim = data.shape

  with open(file_path, 'wb') as file_obj:
    file_obj.write(struct.pack(BINARY_HEADER, BINARY_MAGIC, n_paths, n_points, dim, t0, dt))
    file_obj.write(data.tobytes())

  return file_path


def read_binary_paths(file_path):

  util.check_regular_file(file_path, critical=True)
  head_size = struct.calcsize(BINARY_HEADER)

  with open(file_path, 'rb') as file_obj:
    head = file_obj.read(head_size)

    if len(head) != head_size:
      raise DataIOError('File "%s" is too short for a path set header' % file_path)

    magic, n_paths, n_points, dim, t0, dt = struct.unpack(BINARY_HEADER, head)

    if magic != BINARY_MAGIC:
      raise DataIOError('File "%s" is not a binary path set (bad magic %r)' % (file_path, magic))

    blob = file_obj.read()

  n_vals = n_paths * n_points * dim

  if len(blob) != 8 * n_vals:
    raise DataIOError('File "%s" holds %d bytes of data, expected %d' % (file_path, len(blob), 8*n_vals))

  data = np.frombuffer(blob, dtype='<f8').astype(np.float64).reshape(n_paths, n_points, dim)

  return data, t0, dt


def save_paths_binary(paths, file_path):

  return write_binary_paths(file_path, paths.data, paths.grid.t0, paths.grid.dt)


def load_paths_binary(file_path):

  data, t0, dt = read_binary_paths(file_path)
  n_paths, n_points, dim = data.shape
  # Empty sets carry no initial row
  x0 = data[0,0] if n_paths else np.zeros(dim)

  return PathSet(TimeGrid(t0, dt, n_points-1), data, x0)


def save_paths(paths, file_path):

  if file_path.lower().endswith((CSV_EXT, CSV_EXT + '.gz')):
    return save_paths_csv(paths, file_path)

  return save_paths_binary(paths, file_path)


def load_paths(file_path, dt=1.0, t0=0.0):

  if file_path.lower().endswith((CSV_EXT, CSV_EXT + '.gz')):
    return load_paths_csv(file_path, dt, t0)

  return load_paths_binary(file_path)
