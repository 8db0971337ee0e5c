"""
Conditional denoising diffusion model for one time slot: noise schedule,
forward noising, noise-prediction training and the ancestral reverse sampler.
"""

import os
import numpy as np

from dataclasses import dataclass, replace
from typing import Callable, Optional

from sde_core import util, nn_core
from sde_core.util import ValidationError, SlotIndexError, NumericError, DegenerateDataError, DataIOError

FORMAT_VERSION = 1
DEFAULT_DIFF_STEPS = 100
BETA_START = 1e-4
BETA_END = 0.02
BETA_MAX = 0.999
TERMINAL_ALPHA_BAR = 1e-3
STD_FLOOR = 1e-8
N_FREQS = 4
EMBED_DIM = 1 + 2 * N_FREQS


@dataclass(frozen=True, eq=False)
class NoiseSchedule:

  betas: np.ndarray

  def __post_init__(self):
    betas = np.array(self.betas, dtype=np.float64).ravel()

    if len(betas) < 1:
      raise ValidationError('Noise schedule needs at least one step')

    if not np.all((betas > 0) & (betas < 1)):
      raise ValidationError('Noise schedule betas must lie strictly inside (0, 1)')

    betas.setflags(write=False)
    object.__setattr__(self, 'betas', betas)

  @property
  def n_steps(self):

    return len(self.betas)

  @property
  def alpha(self):

    return 1.0 - self.betas

  @property
  def alpha_bar(self):

    return np.cumprod(1.0 - self.betas)


@dataclass(frozen=True)
class Condition:

  slot: int
  state: np.ndarray

  def __post_init__(self):
    if self.slot < 0:
      raise SlotIndexError('Condition slot must be >= 0 (%d given)' % self.slot)

    object.__setattr__(self, 'state', np.atleast_1d(np.asarray(self.state, float)))


@dataclass(frozen=True)
class NetConfig:

  hidden: tuple = (128, 128, 128)
  activation: str = 'silu'


@dataclass(frozen=True)
class TrainConfig:

  n_steps: int = 4000
  batch_size: int = 64
  learning_rate: float = 1e-3
  report_every: int = 1000


@dataclass(frozen=True, eq=False)
class SlotModel:

  slot: int
  net: nn_core.Mlp
  cond_mean: np.ndarray
  cond_std: np.ndarray
  inc_mean: np.ndarray
  inc_std: np.ndarray
  schedule: NoiseSchedule
  final_loss: float = float('nan')
  time_feature: Optional[np.ndarray] = None
  eps_fn: Optional[Callable] = None
  log_increments: bool = False

  @property
  def dim(self):

    return len(self.inc_mean)

  def norm_cond(self, x):

    x = np.asarray(x, float)

    if self.log_increments:
      with np.errstate(all='ignore'):
        x = np.log(x)

    return (x - self.cond_mean) / self.cond_std

  def predict_eps(self, y, k, c_norm):
    """Noise prediction for noised increments y (n x d) at diffusion step k."""

    if self.eps_fn is not None:
      return self.eps_fn(y, k, c_norm)

    n = len(y)
    feats = [y, c_norm, np.broadcast_to(step_embedding(k, self.schedule.n_steps), (n, EMBED_DIM))]

    if self.time_feature is not None:
      feats.append(np.broadcast_to(self.time_feature, (n, len(self.time_feature))))

    return nn_core.mlp_forward(self.net, np.concatenate(feats, axis=1))


def make_schedule(n_steps=DEFAULT_DIFF_STEPS):
  """
  Scaled-linear betas: 1e-4 to 0.02 for 1000 steps, rescaled by 1000/K.
  """

  if int(n_steps) != n_steps or n_steps < 1:
    raise ValidationError('Number of diffusion steps must be an integer >= 1 (%s given)' % n_steps)

  n_steps = int(n_steps)
  scale = 1000.0 / n_steps
  betas = np.linspace(BETA_START * scale, BETA_END * scale, n_steps)
  betas = np.clip(betas, 1e-12, BETA_MAX)
  schedule = NoiseSchedule(betas)

  if schedule.alpha_bar[-1] > TERMINAL_ALPHA_BAR:
    raise ValidationError('Schedule with K=%d ends at alpha_bar=%.3g > %g; use more diffusion steps' % (n_steps, schedule.alpha_bar[-1], TERMINAL_ALPHA_BAR))

  return schedule


def forward_noise(y0, k, eps, schedule):

  if not (1 <= k <= schedule.n_steps):
    raise ValidationError('Diffusion step %d outside 1..%d' % (k, schedule.n_steps))

  a_bar = schedule.alpha_bar[k-1]

  return np.sqrt(a_bar) * np.asarray(y0, float) + np.sqrt(1.0 - a_bar) * np.asarray(eps, float)


def step_embedding(k, n_steps):
  """
  Ratio k/K and its sinusoidal features; k may be a scalar or an array.
  """

  ratio = np.asarray(k, float) / float(n_steps)
  freqs = np.pi * 2.0 ** np.arange(N_FREQS)
  angles = ratio[...,None] * freqs

  return np.concatenate([ratio[...,None], np.sin(angles), np.cos(angles)], axis=-1)


def normal_stats(values):

  values = np.asarray(values, float)
  return values.mean(axis=0), np.maximum(values.std(axis=0), STD_FLOOR)


def _check_pairs(pairs):

  states, increments = (np.atleast_2d(np.asarray(a, float)) for a in pairs)

  if states.shape != increments.shape:
    raise ValidationError('States %s and increments %s differ in shape' % (states.shape, increments.shape))

  if len(states) < 2:
    raise ValidationError('At least 2 training pairs are needed (%d given)' % len(states))

  if not (np.all(np.isfinite(states)) and np.all(np.isfinite(increments))):
    raise NumericError('Training pairs contain non-finite values')

  return states, increments


def _check_degenerate(increments, slot):

  if np.all(increments.std(axis=0) < STD_FLOOR):
    raise DegenerateDataError('Slot %d increments have zero variance in every coordinate; '
                              'a constant increment cannot be diffusion-trained' % slot)


def slot_targets(states, increments, log_increments=False):
  """
  Diffusion targets for (state, increment) pairs: the increments themselves, or
  log returns log(x + dx) - log(x) for strictly positive paths.
  """

  if not log_increments:
    return increments

  ends = states + increments

  if np.any(states <= 0) or np.any(ends <= 0):
    raise ValidationError('Log increments need strictly positive states')

  return np.log(ends) - np.log(states)


def make_slot_model(slot, pairs, schedule, net, time_feature=None, log_increments=False):

  states, increments = _check_pairs(pairs)
  targets = slot_targets(states, increments, log_increments)
  cond_mean, cond_std = normal_stats(np.log(states) if log_increments else states)
  inc_mean, inc_std = normal_stats(targets)

  return SlotModel(slot, net, cond_mean, cond_std, inc_mean, inc_std, schedule,
                   time_feature=time_feature, log_increments=log_increments)


def net_dims(dim, net_config, time_dim=0):

  return [2*dim + EMBED_DIM + time_dim] + list(net_config.hidden) + [dim]


def fit_noise_predictor(net, batches, schedule, train_config, seed, label=''):
  """
  Adam on the noise-prediction loss. batches is a list of (normalised increments,
  normalised conditions, extra features or None) tables sampled with equal weight.
  """

  rng = util.rng_stream(seed)
  n_diff = schedule.n_steps
  a_bar = schedule.alpha_bar
  params = net.params()
  state = nn_core.adam_init(params, train_config.learning_rate)
  recent = []
  n_tables = len(batches)

  for step in range(train_config.n_steps):
    t = rng.integers(n_tables) if n_tables > 1 else 0
    z_inc, z_cond, extra = batches[t]
    n = len(z_inc)
    b = min(n, train_config.batch_size)

    idx = rng.integers(0, n, size=b)
    k = rng.integers(1, n_diff+1, size=b)
    eps = rng.standard_normal((b, z_inc.shape[1]))
    ab = a_bar[k-1][:,None]
    y_k = np.sqrt(ab) * z_inc[idx] + np.sqrt(1.0 - ab) * eps

    feats = [y_k, z_cond[idx], step_embedding(k, n_diff)]

    if extra is not None:
      feats.append(np.broadcast_to(extra, (b, len(extra))))

    loss, grads = nn_core.mlp_loss_grad(net, np.concatenate(feats, axis=1), eps)

    if not np.isfinite(loss):
      raise NumericError('Training loss became non-finite at step %d %s' % (step, label))

    params, state = nn_core.adam_step(params, grads, state)
    net = nn_core.mlp_with_params(net, params)
    recent.append(loss)

    if len(recent) > 100:
      recent.pop(0)

    if train_config.report_every and (step+1) % train_config.report_every == 0:
      util.info(' .. %s step %d/%d loss %.4f' % (label, step+1, train_config.n_steps, np.mean(recent)))

  return net, float(np.mean(recent)) if recent else float('nan')


def train_slot_model(pairs, schedule, net_config=NetConfig(), train_config=TrainConfig(), seed=0, slot=0,
                     log_increments=False):
  """
  Train one slot's conditional noise predictor on (state, increment) pairs.
  With log_increments the network learns log returns conditioned on log states,
  which keeps multiplicative (GBM-like) paths on a unit scale at every slot.
  """

  states, increments = _check_pairs(pairs)
  targets = slot_targets(states, increments, log_increments)
  _check_degenerate(targets, slot)

  dim = states.shape[1]
  net = nn_core.mlp_init(net_dims(dim, net_config), net_config.activation, util.derive_seed(seed, slot, 0))
  model = make_slot_model(slot, (states, increments), schedule, net, log_increments=log_increments)

  z_inc = (targets - model.inc_mean) / model.inc_std
  z_cond = model.norm_cond(states)
  net, final_loss = fit_noise_predictor(net, [(z_inc, z_cond, None)], schedule, train_config,
                                        util.derive_seed(seed, slot, 1), 'slot %d' % slot)

  return replace(model, net=net, final_loss=final_loss)


def reverse_noise(rng, n_samples, schedule, dim):
  """
  Gaussian draws for one reverse chain per sample: [:,0] starts the chain and
  [:,k] is the noise added at step k (k > 1).
  """

  return rng.standard_normal((n_samples, schedule.n_steps+1, dim))


def reverse_chain(model, x_cond, noise):
  """
  Ancestral sampling without finiteness checks; returns de-normalised
  increments (n x d) and the first step index that went non-finite per sample (0 if none).
  """

  schedule = model.schedule
  alpha = schedule.alpha
  a_bar = schedule.alpha_bar
  x_cond = np.atleast_2d(np.asarray(x_cond, float))
  c_norm = model.norm_cond(x_cond)
  y = np.array(noise[:,0])
  bad_step = np.zeros(len(y), int)

  with np.errstate(all='ignore'):
    for k in range(schedule.n_steps, 0, -1):
      eps_hat = model.predict_eps(y, k, c_norm)
      y = (y - (1.0 - alpha[k-1]) / np.sqrt(1.0 - a_bar[k-1]) * eps_hat) / np.sqrt(alpha[k-1])

      if k > 1:
        y = y + np.sqrt(1.0 - alpha[k-1]) * noise[:,k]

      newly_bad = (bad_step == 0) & ~np.all(np.isfinite(y), axis=1)
      bad_step[newly_bad] = k

  out = y * model.inc_std + model.inc_mean

  if model.log_increments:
    with np.errstate(all='ignore'):
      out = x_cond * np.expm1(out)

  return out, bad_step


def reverse_sample(model, x_cond, rng=None, noise=None):
  """
  Draw increment samples given raw condition states; x_cond may be one state
  (d,), a batch (n x d) or a Condition for the model's slot.
  """

  if isinstance(x_cond, Condition):
    if x_cond.slot != model.slot:
      raise SlotIndexError('Condition is for slot %d but the model serves slot %d' % (x_cond.slot, model.slot))

    x_cond = x_cond.state

  x = np.asarray(x_cond, float)
  single = x.ndim == 1
  x = np.atleast_2d(x)

  if x.shape[1] != model.dim:
    raise ValidationError('Condition state has dimension %d; model expects %d' % (x.shape[1], model.dim))

  if model.log_increments and np.any(x <= 0):
    raise ValidationError('Log-increment models need strictly positive condition states')

  if noise is None:
    if rng is None:
      raise ValidationError('reverse_sample needs a random generator or pre-drawn noise')

    noise = reverse_noise(rng, len(x), model.schedule, model.dim)

  samples, bad_step = reverse_chain(model, x, noise)

  if np.any(bad_step):
    i = int(np.flatnonzero(bad_step)[0])
    raise NumericError('Reverse sampling went non-finite at diffusion step %d (sample %d)' % (bad_step[i], i))

  return samples[0] if single else samples


def slot_model_meta(model):

  meta = {'format_version': FORMAT_VERSION,
          'slot': int(model.slot),
          'd': int(model.dim),
          'K': int(model.schedule.n_steps),
          'betas': model.schedule.betas.tolist(),
          'cond_mean': model.cond_mean.tolist(),
          'cond_std': model.cond_std.tolist(),
          'inc_mean': model.inc_mean.tolist(),
          'inc_std': model.inc_std.tolist(),
          'final_loss': model.final_loss,
          'log_increments': bool(model.log_increments)}

  if model.time_feature is not None:
    meta['time_feature'] = np.asarray(model.time_feature).tolist()

  return meta


def save_slot_model(model, file_root, net_file=None):
  """
  Writes <file_root>.json (normalisation sidecar) and the network checkpoint
  (<file_root>_net.json unless a shared net_file is given).
  """

  if model.eps_fn is not None:
    raise ValidationError('Slot models with a plug-in predictor cannot be saved')

  meta = slot_model_meta(model)

  if net_file is None:
    net_file = file_root + '_net.json'
    nn_core.save_checkpoint(model.net, net_file)

  meta['net_file'] = os.path.basename(net_file)
  util.write_json(file_root + '.json', meta)

  return file_root + '.json'


def load_slot_model(meta_file, net_cache=None):

  meta = util.read_json(meta_file)
  dir_name = os.path.dirname(meta_file)

  try:
    if int(meta['format_version']) != FORMAT_VERSION:
      raise DataIOError('Unsupported slot model version %s in "%s"' % (meta['format_version'], meta_file))

    net_file = os.path.join(dir_name, meta['net_file'])

    if net_cache is not None and net_file in net_cache:
      net = net_cache[net_file]

    else:
      net = nn_core.load_checkpoint(net_file)

      if net_cache is not None:
        net_cache[net_file] = net

    time_feature = meta.get('time_feature')

    if time_feature is not None:
      time_feature = np.array(time_feature, float)

    model = SlotModel(int(meta['slot']), net,
                      np.array(meta['cond_mean'], float), np.array(meta['cond_std'], float),
                      np.array(meta['inc_mean'], float), np.array(meta['inc_std'], float),
                      NoiseSchedule(meta['betas']), float(meta['final_loss']), time_feature,
                      log_increments=bool(meta.get('log_increments', False)))

  except (KeyError, TypeError) as err:
    raise DataIOError('Malformed slot model file "%s": %s' % (meta_file, err))

  if model.dim != int(meta['d']) or model.schedule.n_steps != int(meta['K']):
    raise DataIOError('Slot model file "%s" is internally inconsistent' % meta_file)

  return model
