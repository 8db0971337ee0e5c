"""
Distributional comparison of real and synthetic path ensembles: k-nearest
neighbour KL divergence, moment curves and the repeated-experiment harness.
"""

import numpy as np

from dataclasses import dataclass, field
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from sde_core import util
from sde_core.pathgen import generate_paths
from sde_core.util import ValidationError, SdeError

DIST_FLOOR = 1e-12
FLOOR_WARN_FRAC = 0.01
BRUTE_FORCE_MAX = 2000
DEFAULT_K = 1


@dataclass(frozen=True)
class KlEstimate:

  mean: float
  std_error: float
  n_repeats: int
  k: int
  dim: int
  values: tuple = ()
  warnings: tuple = ()

  def __post_init__(self):
    if self.n_repeats < 1:
      raise ValidationError('KL estimate needs at least one repeat')

    if self.k < 1:
      raise ValidationError('Neighbour order k must be >= 1')

  @property
  def single_repeat(self):

    return self.n_repeats == 1

  def __str__(self):

    return '%.4f ± %.4f' % (self.mean, self.std_error)


@dataclass(frozen=True, eq=False)
class PathStatistics:

  mean_curve: np.ndarray
  std_curve: np.ndarray
  positivity_fraction: float


@dataclass
class KnnKlResult:

  estimate: float
  n_floored: int
  warnings: list = field(default_factory=list)


def paths_to_vectors(paths):
  """Drop the fixed t_0 row and flatten the rest time-major: H x (N_T*d)."""

  return np.ascontiguousarray(paths.data[:,1:]).reshape(paths.n_paths, -1)


def _kth_distances(points, queries, k, exclude_self):

  if len(points) <= BRUTE_FORCE_MAX and len(queries) <= BRUTE_FORCE_MAX:
    dists = cdist(queries, points)

    if exclude_self:
      np.fill_diagonal(dists, np.inf)

    return np.partition(dists, k-1, axis=1)[:,k-1]

  n_query = k+1 if exclude_self else k
  dists, _ = cKDTree(points).query(queries, k=n_query)
  dists = dists.reshape(len(queries), n_query)

  return dists[:,-1]


def knn_kl_details(samples_p, samples_q, k=DEFAULT_K):
  """
  k-nearest-neighbour estimate of KL(p||q) from samples with floored-distance
  diagnostics.
  """

  p = np.asarray(samples_p, float)
  q = np.asarray(samples_q, float)

  if p.ndim == 1:
    p = p[:,None]

  if q.ndim == 1:
    q = q[:,None]

  if p.ndim != 2 or q.ndim != 2 or p.shape[1] != q.shape[1] or p.shape[1] < 1:
    raise ValidationError('Sample sets must be n x D and m x D matrices (%s and %s given)' % (p.shape, q.shape))

  n, dim = p.shape
  m = len(q)

  if int(k) != k or k < 1:
    raise ValidationError('Neighbour order k must be an integer >= 1 (%s given)' % k)

  if n < k+1 or m < k:
    raise ValidationError('KL estimate with k=%d needs n >= %d and m >= %d (n=%d, m=%d given)' % (k, k+1, k, n, m))

  rho = _kth_distances(p, p, k, True)
  nu = _kth_distances(q, p, k, False)
  floored = (rho < DIST_FLOOR) | (nu < DIST_FLOOR)
  rho = np.maximum(rho, DIST_FLOOR)
  nu = np.maximum(nu, DIST_FLOOR)

  estimate = dim / float(n) * np.log(nu / rho).sum() + np.log(m / (n - 1.0))
  n_floored = int(floored.sum())
  warnings = []

  if n_floored > FLOOR_WARN_FRAC * n:
    warnings.append('%d of %d points hit the %g distance floor; data may contain many duplicates' % (n_floored, n, DIST_FLOOR))

  return KnnKlResult(float(estimate), n_floored, warnings)


def knn_kl(samples_p, samples_q, k=DEFAULT_K):

  return knn_kl_details(samples_p, samples_q, k).estimate


def path_statistics(paths):

  if paths.n_paths < 2:
    raise ValidationError('Path statistics need at least 2 paths (%d given)' % paths.n_paths)

  data = paths.data
  mean_curve = data.mean(axis=0)
  std_curve = data.std(axis=0, ddof=1)
  positive = float(np.count_nonzero(data > 0)) / data.size

  return PathStatistics(mean_curve, std_curve, positive)


def _draw(source, n_paths, seed):

  # Bundles and plain providers are both accepted
  if hasattr(source, 'slot_models'):
    return generate_paths(source, n_paths, seed)

  return source(n_paths, seed)


def _kl_repeat_job(r, real_source, generator, n_per_side, k, seed):

  try:
    real = _draw(real_source, n_per_side, util.derive_seed(seed, r, 0))
    synth = _draw(generator, n_per_side, util.derive_seed(seed, r, 1))

  except SdeError as err:
    raise type(err)('Repeat %d: %s' % (r, err))

  result = knn_kl_details(paths_to_vectors(real), paths_to_vectors(synth), k)

  return result.estimate, result.warnings, real.grid.n_steps * real.dim


def kl_experiment(real_source, generator, n_per_side, n_repeats, k=DEFAULT_K, seed=0, num_cpu=1):
  """
  Repeated KL(real||synthetic) estimates on fresh ensembles. real_source and
  generator are (n_paths, seed) -> PathSet providers, or a generator bundle.
  """

  if int(n_repeats) != n_repeats or n_repeats < 1:
    raise ValidationError('Number of repeats must be >= 1 (%s given)' % n_repeats)

  if n_per_side < k+1:
    raise ValidationError('Need more than k=%d paths per side (%d given)' % (k, n_per_side))

  util.info('KL experiment: %d repeats of %d real vs %d synthetic paths (k=%d)' % (n_repeats, n_per_side, n_per_side, k))
  results = util.parallel_split_job(_kl_repeat_job, range(int(n_repeats)),
                                    (real_source, generator, int(n_per_side), k, seed), num_cpu)

  values = np.array([r[0] for r in results])
  warnings = sorted({w for r in results for w in r[1]})
  mean = float(values.mean())

  if len(values) > 1:
    std_error = float(values.std(ddof=1) / np.sqrt(len(values)))

  else:
    std_error = 0.0
    warnings.append('Single repeat: standard error reported as 0')

  return KlEstimate(mean, std_error, len(values), int(k), int(results[0][2]), tuple(values.tolist()), tuple(warnings))


def write_metric_report(file_path, estimate, config=None):

  report = {'metric': 'knn_kl',
            'orientation': 'real||synthetic',
            'mean': estimate.mean,
            'std_error': estimate.std_error,
            'n_repeats': estimate.n_repeats,
            'k': estimate.k,
            'dim': estimate.dim,
            'single_repeat': estimate.single_repeat,
            'config': config or {},
            'warnings': list(estimate.warnings)}

  return util.write_json(file_path, report)


def write_moment_curves_csv(file_path, grid, real_stats, synth_stats):
  """
  Columns t, dim, real_mean, synth_mean, real_std, synth_std; one row per grid
  point and coordinate.
  """

  times = grid.times

  with util.open_file(file_path, 'w') as file_obj:
    write = file_obj.write
    write('t,dim,real_mean,synth_mean,real_std,synth_std\n')

    for n, t in enumerate(times):
      for j in range(real_stats.mean_curve.shape[1]):
        vals = (real_stats.mean_curve[n,j], synth_stats.mean_curve[n,j],
                real_stats.std_curve[n,j], synth_stats.std_curve[n,j])
        write('%r,%d,%s\n' % (float(t), j, ','.join(repr(float(v)) for v in vals)))

  return file_path


def max_relative_error(stats_a, stats_b, floor=1e-12):

  mean_err = np.abs(stats_b.mean_curve - stats_a.mean_curve) / np.maximum(np.abs(stats_a.mean_curve), floor)
  std_a = stats_a.std_curve[1:]
  std_err = np.abs(stats_b.std_curve[1:] - std_a) / np.maximum(std_a, floor)

  return float(mean_err.max()), float(std_err.max()) if std_err.size else 0.0
