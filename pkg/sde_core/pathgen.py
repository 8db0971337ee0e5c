"""
Per-slot generator training over a path set, autoregressive path generation,
and the baseline samplers (kernel-weighted Monte Carlo score, per-slot Gaussian).
"""

import os
import numpy as np

from dataclasses import dataclass, field, replace
from functools import partial
from scipy.special import softmax

from sde_core import util, nn_core, ddpm_core
from sde_core.sde_lab import PathSet, TimeGrid, slot_increments
from sde_core.util import ValidationError, NumericError, DegenerateDataError, DataIOError

FORMAT_VERSION = 1
BUNDLE_FILE = 'bundle.json'
SLOT_FILE_FMT = 'slot_%04d'
SHARED_NET_FILE = 'shared_net.json'
SAMPLE_CHUNK = 256
BASELINE_KINDS = ('sdm-mc', 'gaussian')


@dataclass(frozen=True)
class GeneratorConfig:

  diff_steps: int = ddpm_core.DEFAULT_DIFF_STEPS
  hidden: tuple = (128, 128, 128)
  activation: str = 'silu'
  train_steps: int = 4000
  batch_size: int = 64
  learning_rate: float = 1e-3
  shared_net: bool = False
  report_every: int = 1000
  log_increments: bool = False

  @property
  def net_config(self):

    return ddpm_core.NetConfig(tuple(self.hidden), self.activation)

  @property
  def train_config(self):

    return ddpm_core.TrainConfig(self.train_steps, self.batch_size, self.learning_rate, self.report_every)


@dataclass(frozen=True, eq=False)
class GeneratorBundle:

  slot_models: tuple
  grid: TimeGrid
  dim: int
  initial_state: np.ndarray
  report: dict = field(default_factory=dict)

  def __post_init__(self):
    models = tuple(self.slot_models)

    if len(models) != self.grid.n_steps:
      raise ValidationError('Bundle has %d slot models for %d grid slots' % (len(models), self.grid.n_steps))

    n_diff = {m.schedule.n_steps for m in models}

    if len(n_diff) > 1:
      raise ValidationError('Slot models use differing diffusion step counts %s' % sorted(n_diff))

    for n, model in enumerate(models):
      if model.slot != n or model.dim != self.dim:
        raise ValidationError('Slot model %d has slot index %d and dimension %d (bundle dimension %d)' % (n, model.slot, model.dim, self.dim))

    object.__setattr__(self, 'slot_models', models)
    object.__setattr__(self, 'initial_state', np.array(self.initial_state, float).ravel())


@dataclass(frozen=True)
class SdmMcConfig:

  bandwidth: object
  schedule: ddpm_core.NoiseSchedule

  def __post_init__(self):
    if not np.all(np.asarray(self.bandwidth, float) > 0):
      raise ValidationError('SDM-MC kernel bandwidth must be > 0')


def _check_dataset(dataset):

  if dataset.n_paths < 2:
    raise ValidationError('Training needs at least 2 paths (%d given)' % dataset.n_paths)


def _train_slot_job(n, dataset, config, seed):

  pairs = slot_increments(dataset, n)
  schedule = ddpm_core.make_schedule(config.diff_steps)

  try:
    return ddpm_core.train_slot_model(pairs, schedule, config.net_config, config.train_config, seed, n,
                                       config.log_increments)

  except DegenerateDataError as err:
    raise DegenerateDataError('Slot %d: %s' % (n, err))


def _train_shared(dataset, config, seed):

  schedule = ddpm_core.make_schedule(config.diff_steps)
  n_slots = dataset.grid.n_steps
  dim = dataset.dim
  net = nn_core.mlp_init(ddpm_core.net_dims(dim, config.net_config, ddpm_core.EMBED_DIM),
                         config.activation, util.derive_seed(seed, 0, 0))
  models = []
  batches = []

  for n in range(n_slots):
    states, increments = slot_increments(dataset, n)
    targets = ddpm_core.slot_targets(states, increments, config.log_increments)

    try:
      ddpm_core._check_degenerate(targets, n)

    except DegenerateDataError as err:
      raise DegenerateDataError('Slot %d: %s' % (n, err))

    t_feat = ddpm_core.step_embedding(n, n_slots)
    model = ddpm_core.make_slot_model(n, (states, increments), schedule, net, t_feat, config.log_increments)
    batches.append(((targets - model.inc_mean) / model.inc_std, model.norm_cond(states), t_feat))
    models.append(model)

  train_config = replace(config.train_config, n_steps=config.train_steps * n_slots)
  net, final_loss = ddpm_core.fit_noise_predictor(net, batches, schedule, train_config,
                                                  util.derive_seed(seed, 0, 1), 'shared net')

  return [replace(model, net=net, final_loss=final_loss) for model in models]


def train_generator(dataset, config=GeneratorConfig(), seed=0, num_cpu=1, stat_file_path=None):
  """
  Train one conditional diffusion model per source slot n = 0..N_T-1
  (or one shared network when config.shared_net is set).
  """

  _check_dataset(dataset)
  n_slots = dataset.grid.n_steps
  util.info('Training %d slot models on %d paths of dimension %d' % (n_slots, dataset.n_paths, dataset.dim))

  if config.shared_net:
    models = _train_shared(dataset, config, seed)

  else:
    models = util.parallel_split_job(_train_slot_job, range(n_slots), (dataset, config, seed), num_cpu)

  losses = [float(m.final_loss) for m in models]
  report = {'final_losses': losses,
            'n_paths': int(dataset.n_paths),
            'shared_net': bool(config.shared_net),
            'log_increments': bool(config.log_increments)}

  util.log_report('training', [('slots', n_slots), ('paths', dataset.n_paths),
                               ('mean_final_loss', float(np.mean(losses))),
                               ('max_final_loss', float(np.max(losses)))], stat_file_path)

  return GeneratorBundle(tuple(models), dataset.grid, dataset.dim, dataset.initial_state, report)


def autoregress(initial_state, grid, n_paths, seed, step_sampler, num_cpu=1):
  """
  Build paths x(t_n) = x(t_{n-1}) + Y_{n-1} where step_sampler(n, states, rngs)
  returns increments for source slot n given the current states and one
  generator per path. Paths that go non-finite are dropped.
  Returns (PathSet, increments of kept paths, number of dropped paths).
  """

  x0 = np.array(initial_state, float).ravel()
  dim = len(x0)

  if int(n_paths) != n_paths or n_paths < 0:
    raise ValidationError('Number of paths must be a non-negative integer (%s given)' % n_paths)

  n_paths = int(n_paths)

  if n_paths == 0:
    return PathSet(grid, np.zeros((0, grid.n_steps+1, dim)), x0), np.zeros((0, grid.n_steps, dim)), 0

  ranges = util.split_ranges(n_paths, num_cpu)
  results = util.parallel_split_job(_autoregress_chunk, ranges, (x0, grid, seed, step_sampler), num_cpu)

  data = np.concatenate([r[0] for r in results])
  incs = np.concatenate([r[1] for r in results])
  keep = np.all(np.isfinite(data), axis=(1, 2))
  n_failed = int(n_paths - keep.sum())

  if n_failed:
    util.warn('%d of %d generated paths went non-finite and were dropped' % (n_failed, n_paths))

  return PathSet(grid, data[keep], x0), incs[keep], n_failed


def _autoregress_chunk(span, x0, grid, seed, step_sampler):

  start, end = span
  rngs = [util.rng_stream(seed, i) for i in range(start, end)]
  n = end - start
  data = np.empty((n, grid.n_steps+1, len(x0)))
  incs = np.empty((n, grid.n_steps, len(x0)))
  data[:,0] = x0
  alive = np.ones(n, bool)

  for s in range(grid.n_steps):
    inc = np.full((n, len(x0)), np.nan)
    idx = np.flatnonzero(alive)

    if len(idx):
      inc[idx] = step_sampler(s, data[idx,s], [rngs[i] for i in idx])

    incs[:,s] = inc
    data[:,s+1] = data[:,s] + inc
    alive &= np.all(np.isfinite(data[:,s+1]), axis=1)

  return data, incs


def _ddpm_step(n, states, rngs, bundle):

  model = bundle.slot_models[n]
  noise = np.stack([ddpm_core.reverse_noise(rng, 1, model.schedule, model.dim)[0] for rng in rngs])
  out = np.empty(states.shape)

  for a in range(0, len(states), SAMPLE_CHUNK):
    b = a + SAMPLE_CHUNK
    samples, bad_step = ddpm_core.reverse_chain(model, states[a:b], noise[a:b])
    samples[bad_step > 0] = np.nan
    out[a:b] = samples

  return out


def generate_paths(bundle, n_paths, seed, num_cpu=1, return_report=False):
  """
  Autoregressive generation from the bundle's initial state. With return_report
  the sampled increments and the dropped-path count are returned as well.
  """

  paths, incs, n_failed = autoregress(bundle.initial_state, bundle.grid, n_paths, seed,
                                      partial(_ddpm_step, bundle=bundle), num_cpu)

  if return_report:
    return paths, {'increments': incs, 'n_failed': n_failed, 'n_requested': int(n_paths)}

  return paths


def bundle_source(bundle):
  """Picklable (n_paths, seed) -> PathSet provider for a trained bundle."""

  return partial(generate_paths, bundle)


def silverman_bandwidth(states):

  states = np.atleast_2d(np.asarray(states, float))
  n = len(states)
  std = states.std(axis=0, ddof=1) if n > 1 else np.zeros(states.shape[1])

  return np.maximum(1.06 * std * n ** (-0.2), ddpm_core.STD_FLOOR)


def _kernel_weights(states, x_cond, bandwidth):

  h = np.broadcast_to(np.asarray(bandwidth, float), (states.shape[1],))

  with np.errstate(divide='ignore', invalid='ignore', over='ignore'):
    scaled = np.where(np.isinf(h), 0.0, (states - x_cond) / h)

  weights = np.exp(-0.5 * (scaled * scaled).sum(axis=1))
  total = weights.sum()

  if not total > 0:
    raise NumericError('All SDM-MC kernel weights underflowed; use a larger bandwidth')

  return weights / total


def mixture_eps(y, k, schedule, centers, log_weights):
  """
  Exact noise prediction E[eps | y] for the forward marginal of a weighted
  point mixture at diffusion step k.
  """

  a_bar = schedule.alpha_bar[k-1]
  diff = y[:,None,:] - np.sqrt(a_bar) * centers[None,:,:]
  log_r = log_weights[None,:] - 0.5 * (diff * diff).sum(axis=2) / (1.0 - a_bar)
  resp = softmax(log_r, axis=1)

  # score = sum_i r_i (sqrt(a_bar) c_i - y) / (1 - a_bar); eps = -sqrt(1 - a_bar) score
  return (resp[:,:,None] * diff).sum(axis=1) / np.sqrt(1.0 - a_bar)


def _mixture_model(pairs, x_cond, cfg, slot=0):

  states, increments = (np.atleast_2d(np.asarray(a, float)) for a in pairs)

  if len(states) < 1:
    raise ValidationError('SDM-MC needs at least one training pair')

  weights = _kernel_weights(states, np.asarray(x_cond, float), cfg.bandwidth)
  inc_mean, inc_std = ddpm_core.normal_stats(increments)
  centers = (increments - inc_mean) / inc_std
  keep = weights > 0
  centers = centers[keep]

  with np.errstate(divide='ignore'):
    log_w = np.log(weights[keep])

  eps_fn = lambda y, k, c_norm: mixture_eps(y, k, cfg.schedule, centers, log_w)
  dim = states.shape[1]

  return ddpm_core.SlotModel(slot, None, np.zeros(dim), np.ones(dim), inc_mean, inc_std,
                             cfg.schedule, eps_fn=eps_fn)


def _sdm_mc_draw(train_pairs, x_cond, cfg, rng, n):

  model = _mixture_model(train_pairs, x_cond, cfg)
  out = np.empty((n, model.dim))

  for a in range(0, n, SAMPLE_CHUNK):
    b = min(n, a + SAMPLE_CHUNK)
    noise = ddpm_core.reverse_noise(rng, b-a, cfg.schedule, model.dim)
    samples, bad_step = ddpm_core.reverse_chain(model, np.broadcast_to(x_cond, (b-a, model.dim)), noise)
    samples[bad_step > 0] = np.nan
    out[a:b] = samples

  return out


def sdm_mc_sample(train_pairs, x_cond, cfg, rng, n_samples=None):
  """
  Monte Carlo score sampler: the reverse chain uses the exact score of the
  kernel-weighted mixture of noised training increments.
  """

  x_cond = np.asarray(x_cond, float).ravel()
  n = 1 if n_samples is None else int(n_samples)
  out = _sdm_mc_draw(train_pairs, x_cond, cfg, rng, n)

  if not np.all(np.isfinite(out)):
    raise NumericError('SDM-MC reverse sampling went non-finite')

  return out[0] if n_samples is None else out


def _sdm_mc_step(n, states, rngs, slot_pairs, configs):

  return np.stack([_sdm_mc_draw(slot_pairs[n], x, configs[n], rng, 1)[0] for x, rng in zip(states, rngs)])


def _gaussian_step(n, states, rngs, means, stds):

  return np.stack([means[n] + stds[n] * rng.standard_normal(len(means[n])) for rng in rngs])


def baseline_generate_paths(dataset, kind, n_paths, seed, diff_steps=ddpm_core.DEFAULT_DIFF_STEPS,
                            bandwidth=None, num_cpu=1):
  """
  Paths from a baseline generator fitted directly to the dataset:
  'sdm-mc' (kernel-weighted Monte Carlo score) or 'gaussian'
  (per-slot unconditional Gaussian increments).
  """

  _check_dataset(dataset)
  n_slots = dataset.grid.n_steps
  slot_pairs = [slot_increments(dataset, n) for n in range(n_slots)]

  if kind == 'sdm-mc':
    schedule = ddpm_core.make_schedule(diff_steps)
    configs = []

    for states, increments in slot_pairs:
      h = silverman_bandwidth(states) if bandwidth is None else bandwidth
      configs.append(SdmMcConfig(h, schedule))

    sampler = partial(_sdm_mc_step, slot_pairs=slot_pairs, configs=configs)

  elif kind == 'gaussian':
    means = [inc.mean(axis=0) for _, inc in slot_pairs]
    stds = [inc.std(axis=0, ddof=1) for _, inc in slot_pairs]
    sampler = partial(_gaussian_step, means=means, stds=stds)

  else:
    raise ValidationError('Unknown baseline "%s"; use one of %s' % (kind, ', '.join(BASELINE_KINDS)))

  return autoregress(dataset.initial_state, dataset.grid, n_paths, seed, sampler, num_cpu)[0]


def baseline_source(dataset, kind, **kw):

  return partial(baseline_generate_paths, dataset, kind, **kw)


def save_bundle(bundle, dir_path):

  os.makedirs(dir_path, exist_ok=True)
  shared = bundle.report.get('shared_net', False)
  net_file = None

  if shared:
    net_file = os.path.join(dir_path, SHARED_NET_FILE)
    nn_core.save_checkpoint(bundle.slot_models[0].net, net_file)

  slot_files = []

  for model in bundle.slot_models:
    file_root = os.path.join(dir_path, SLOT_FILE_FMT % model.slot)
    ddpm_core.save_slot_model(model, file_root, net_file)
    slot_files.append(os.path.basename(file_root) + '.json')

  grid = bundle.grid
  manifest = {'format_version': FORMAT_VERSION,
              'grid': {'t0': grid.t0, 'dt': grid.dt, 'n_steps': grid.n_steps},
              'd': int(bundle.dim),
              'x0': bundle.initial_state.tolist(),
              'K': int(bundle.slot_models[0].schedule.n_steps),
              'slots': slot_files,
              'report': bundle.report}

  util.write_json(os.path.join(dir_path, BUNDLE_FILE), manifest)

  return dir_path


def load_bundle(dir_path):

  manifest = util.read_json(os.path.join(dir_path, BUNDLE_FILE))

  try:
    if int(manifest['format_version']) != FORMAT_VERSION:
      raise DataIOError('Unsupported bundle version %s' % manifest['format_version'])

    grid = TimeGrid(**manifest['grid'])
    net_cache = {}
    models = [ddpm_core.load_slot_model(os.path.join(dir_path, name), net_cache) for name in manifest['slots']]
    bundle = GeneratorBundle(tuple(models), grid, int(manifest['d']), manifest['x0'], manifest.get('report', {}))

  except (KeyError, TypeError) as err:
    raise DataIOError('Malformed bundle manifest in "%s": %s' % (dir_path, err))

  if bundle.slot_models[0].schedule.n_steps != int(manifest['K']):
    raise DataIOError('Bundle manifest K does not match its slot models')

  return bundle
