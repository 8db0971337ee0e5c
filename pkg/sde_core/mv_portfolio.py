"""
Mean-variance portfolio experiment over market path pools: index CSV windows,
bootstrap and generator-synthetic pools, the plug-in GBM policy, an exploratory
actor-critic policy and terminal-wealth evaluation.
"""

import csv, math, datetime
import numpy as np

from dataclasses import dataclass, replace

from sde_core import util, sde_lab
from sde_core.pathgen import generate_paths
from sde_core.sde_lab import PathSet, TimeGrid, GbmSpec
from sde_core.util import ValidationError, NumericError, DataIOError

TRADING_DAYS = 252
DAY_YEARS = 1.0 / TRADING_DAYS
DEFAULT_WINDOW = 126
SIGMA_FLOOR = 1e-6
WEALTH_LIMIT = 1e6
MAX_ABORT_FRAC = 0.5
MAX_REJECT_FRAC = 0.5
LOG_VAR_RANGE = (-12.0, 2.0)
POOL_KINDS = ('split', 'bootstrap', 'synthetic', 'mixed')
LOG_2PI_E = math.log(2.0 * math.pi * math.e)
POOL_PATH_EXT = '.spg'
POOL_META_EXT = '.json'


@dataclass(frozen=True, eq=False)
class MarketPathPool:

  kind: str
  paths: np.ndarray
  dt_years: float = DAY_YEARS
  horizon_years: float = None
  tags: tuple = ()

  def __post_init__(self):
    if self.kind not in POOL_KINDS:
      raise ValidationError('Unknown pool kind "%s"; use one of %s' % (self.kind, ', '.join(POOL_KINDS)))

    paths = np.array(self.paths, dtype=np.float64)

    if paths.ndim != 2 or paths.shape[0] < 1 or paths.shape[1] < 2:
      raise ValidationError('Market pool needs a P x (L+1) price matrix with P >= 1 and L >= 1 (shape %s given)' % (paths.shape,))

    if not np.all(np.isfinite(paths)) or np.any(paths <= 0):
      raise ValidationError('Market pool prices must be finite and strictly positive')

    n_steps = paths.shape[1] - 1
    horizon = n_steps * self.dt_years if self.horizon_years is None else float(self.horizon_years)

    if abs(n_steps * self.dt_years - horizon) > 1e-9:
      raise ValidationError('Pool horizon %g does not equal %d steps of %g years' % (horizon, n_steps, self.dt_years))

    tags = tuple(self.tags) or (self.kind,) * len(paths)

    if len(tags) != len(paths):
      raise ValidationError('Pool has %d paths but %d provenance tags' % (len(paths), len(tags)))

    paths.setflags(write=False)
    object.__setattr__(self, 'paths', paths)
    object.__setattr__(self, 'horizon_years', horizon)
    object.__setattr__(self, 'tags', tags)

  @property
  def n_paths(self):

    return self.paths.shape[0]

  @property
  def window_len(self):

    return self.paths.shape[1] - 1

  def returns(self):
    """Simple one-step returns, P x L."""

    return self.paths[:,1:] / self.paths[:,:-1] - 1.0


@dataclass(frozen=True)
class MvProblem:

  x0: float = 1.0
  rate: float = 0.02
  horizon: float = 0.5
  target: float = 1.1

  def __post_init__(self):
    if not self.horizon > 0:
      raise ValidationError('Investment horizon must be > 0 (%s given)' % self.horizon)

    if not np.all(np.isfinite([self.x0, self.rate, self.horizon, self.target])):
      raise ValidationError('Mean-variance problem parameters must be finite')

    if self.target <= self.riskless_wealth:
      util.warn('Target %g does not exceed riskless terminal wealth %g; the risky allocation will be ~0' % (self.target, self.riskless_wealth))

  @property
  def riskless_wealth(self):

    return self.x0 * math.exp(self.rate * self.horizon)


@dataclass(frozen=True)
class PluginPolicy:

  mu_hat: float
  sigma_hat: float
  lagrange_w: float
  rate: float
  horizon: float

  def __post_init__(self):
    if not self.sigma_hat > 0:
      raise ValidationError('Plug-in volatility must be > 0')

  def __call__(self, t, x):

    slope = (self.mu_hat - self.rate) / self.sigma_hat**2
    return slope * (self.lagrange_w * np.exp(-self.rate * (self.horizon - t)) - x)


@dataclass(frozen=True)
class EmvPolicy:

  phi1: float
  phi2: float
  phi3: float
  theta1: float
  theta2: float
  lagrange_w: float
  temperature: float
  rate: float
  horizon: float

  def __post_init__(self):
    if self.phi3 < 0:
      raise ValidationError('Policy variance slope phi3 must be >= 0')

    if not self.temperature > 0:
      raise ValidationError('Exploration temperature must be > 0')

  def mean(self, t, x):

    return self.phi1 * (self.lagrange_w * np.exp(-self.rate * (self.horizon - t)) - x)

  def variance(self, t):

    return np.exp(self.phi2 + self.phi3 * (self.horizon - t))

  def __call__(self, t, x):

    return self.mean(t, x)


@dataclass(frozen=True)
class EmvHyper:

  n_episodes: int = 20000
  lr_critic: float = 1e-3
  lr_actor: float = 2e-3
  lr_lagrange: float = 0.05
  lagrange_every: int = 50
  batch_episodes: int = 10
  temp_start: float = 2.0
  temp_decay: float = 0.9995
  init_phi1: float = 1.0
  init_variance: float = 0.1
  explore: bool = True

  def __post_init__(self):
    if self.n_episodes < 1 or self.batch_episodes < 1 or self.lagrange_every < 1:
      raise ValidationError('Episode counts must be >= 1')

    if min(self.lr_critic, self.lr_actor, self.lr_lagrange) < 0:
      raise ValidationError('Learning rates must be >= 0')

    if not (self.temp_start > 0 and 0 < self.temp_decay <= 1):
      raise ValidationError('Temperature must start > 0 and decay by a factor in (0, 1]')

    if not self.init_variance > 0:
      raise ValidationError('Initial policy variance must be > 0')


@dataclass(frozen=True)
class PolicyReport:

  mean: float
  variance: float
  sharpe: float
  n_episodes: int
  sharpe_undefined: bool = False
  policy: str = ''
  pool: str = ''

  def __post_init__(self):
    if self.variance < 0:
      raise ValidationError('Policy report variance cannot be negative')


def split_series(prices, window_len=DEFAULT_WINDOW, normalize=True):
  """
  Consecutive windows of window_len returns (window_len+1 prices, adjacent
  windows share their boundary price); a trailing partial window is dropped.
  With window_len=126, 253 prices give 2 windows with one price unused, while
  20*252 prices give only 39 windows: forty half-year windows need 20*252 + 1.
  """

  prices = np.asarray(prices, float)
  n_windows = (len(prices) - 1) // window_len

  if n_windows < 1:
    raise ValidationError('Need at least %d prices for one window (%d given)' % (window_len+1, len(prices)))

  windows = np.stack([prices[w*window_len:(w+1)*window_len+1] for w in range(n_windows)])

  if normalize:
    windows = windows / windows[:,:1]

  return windows


def ingest_index_csv(file_path, window_len=DEFAULT_WINDOW, normalize=True, dt_years=DAY_YEARS):
  """
  Read a date,close index CSV (ISO dates, optionally gzipped) into a split pool.
  """

  util.check_regular_file(file_path, critical=True)

  if int(window_len) != window_len or window_len < 1:
    raise ValidationError('Window length must be an integer >= 1 (%s given)' % window_len)

  window_len = int(window_len)
  dates = []
  prices = []

  with util.open_file(file_path) as file_obj:
    reader = csv.DictReader(file_obj)
    fields = {f.strip().lower(): f for f in (reader.fieldnames or [])}

    if 'date' not in fields or 'close' not in fields:
      raise DataIOError('File "%s" needs "date" and "close" columns' % file_path)

    for row in reader:
      line_no = reader.line_num
      date_txt = (row[fields['date']] or '').strip()
      close_txt = (row[fields['close']] or '').strip()

      try:
        date = datetime.date.fromisoformat(date_txt)

      except ValueError:
        raise ValidationError('Row %d of "%s": cannot parse date "%s"' % (line_no, file_path, date_txt))

      try:
        close = float(close_txt)

      except ValueError:
        raise ValidationError('Row %d of "%s": cannot parse close price "%s"' % (line_no, file_path, close_txt))

      if not (np.isfinite(close) and close > 0):
        raise ValidationError('Row %d of "%s": close price %s is not positive' % (line_no, file_path, close_txt))

      dates.append(date)
      prices.append(close)

  if len(prices) < window_len + 1:
    raise ValidationError('File "%s" has %d prices; need >= %d for window length %d' % (file_path, len(prices), window_len+1, window_len))

  order = sorted(range(len(dates)), key=dates.__getitem__)

  if order != list(range(len(dates))):
    util.warn('Rows of "%s" are not in date order; sorting' % file_path)

  dates = [dates[i] for i in order]
  prices = [prices[i] for i in order]

  if len(set(dates)) != len(dates):
    raise ValidationError('File "%s" has duplicate dates' % file_path)

  windows = split_series(prices, window_len, normalize)
  tags = tuple('split:%s' % dates[w*window_len].isoformat() for w in range(len(windows)))
  n_unused = len(prices) - (len(windows) * window_len + 1)

  util.info('Read %d prices from %s into %d windows of %d steps (%d trailing rows unused)' % (len(prices), file_path, len(windows), window_len, n_unused))

  return MarketPathPool('split', windows, dt_years, tags=tags)


def bootstrap_pool(source, n_paths, seed):
  """
  Paths built from i.i.d. draws of the source pool's pooled one-step returns.
  """

  if int(n_paths) != n_paths or n_paths < 1:
    raise ValidationError('Number of bootstrap paths must be >= 1 (%s given)' % n_paths)

  returns = source.returns().ravel()
  n_steps = source.window_len
  paths = np.ones((int(n_paths), n_steps+1))

  for i in range(int(n_paths)):
    rng = util.rng_stream(seed, i)
    draws = returns[rng.integers(0, len(returns), size=n_steps)]
    paths[i,1:] = np.cumprod(1.0 + draws)

  return MarketPathPool('bootstrap', paths, source.dt_years)


def gbm_market_pool(mu, sigma, n_paths, window_len=DEFAULT_WINDOW, seed=0, dt_years=DAY_YEARS):
  """
  Ground-truth market: one simulated GBM index series split into windows.
  """

  spec = GbmSpec([mu], [sigma], [[1.0]], [1.0])
  grid = TimeGrid(0.0, dt_years, int(n_paths) * int(window_len))
  series = sde_lab.simulate_gbm(spec, grid, 1, seed).data[0,:,0]

  return MarketPathPool('split', split_series(series, window_len), dt_years)


def mix_pools(*pools):

  if not pools:
    raise ValidationError('No pools to mix')

  base = pools[0]

  for pool in pools[1:]:
    if pool.window_len != base.window_len or abs(pool.dt_years - base.dt_years) > 1e-15:
      raise ValidationError('Pools with different window lengths or steps cannot be mixed')

  paths = np.concatenate([p.paths for p in pools])
  tags = tuple(t for p in pools for t in p.tags)

  return MarketPathPool('mixed', paths, base.dt_years, tags=tags)


def pool_to_paths(pool):

  grid = TimeGrid(0.0, pool.dt_years, pool.window_len)

  return PathSet(grid, pool.paths[:,:,None], pool.paths[0,:1])


def save_pool(pool, file_root):

  sde_lab.save_paths_binary(pool_to_paths(pool), file_root + POOL_PATH_EXT)
  meta = {'kind': pool.kind,
          'dt_years': pool.dt_years,
          'horizon_years': pool.horizon_years,
          'tags': list(pool.tags)}
  util.write_json(file_root + POOL_META_EXT, meta)

  return file_root + POOL_PATH_EXT


def load_pool(file_root):

  if file_root.endswith(POOL_PATH_EXT):
    file_root = file_root[:-len(POOL_PATH_EXT)]

  data, t0, dt = sde_lab.read_binary_paths(file_root + POOL_PATH_EXT)
  meta = util.read_json(file_root + POOL_META_EXT)

  if data.shape[2] != 1:
    raise DataIOError('Pool file "%s" holds %d-dimensional paths' % (file_root, data.shape[2]))

  try:
    return MarketPathPool(meta['kind'], data[:,:,0], float(meta['dt_years']), float(meta['horizon_years']), tuple(meta['tags']))

  except KeyError as err:
    raise DataIOError('Pool sidecar "%s%s" lacks %s' % (file_root, POOL_META_EXT, err))


def estimate_gbm_params(pool):
  """
  Annualised GBM drift and volatility from pooled one-step log returns.
  """

  log_ret = np.log(pool.paths[:,1:] / pool.paths[:,:-1]).ravel()
  var = log_ret.var(ddof=1) if len(log_ret) > 1 else 0.0
  sigma_hat = math.sqrt(var / pool.dt_years)

  if sigma_hat < SIGMA_FLOOR:
    util.warn('Estimated volatility %.3g below floor; using %g' % (sigma_hat, SIGMA_FLOOR))
    sigma_hat = SIGMA_FLOOR
    var = 0.0

  mu_hat = log_ret.mean() / pool.dt_years + 0.5 * var / pool.dt_years

  return float(mu_hat), float(sigma_hat)


def plugin_policy(mu_hat, sigma_hat, problem):

  if not sigma_hat > 0:
    raise ValidationError('Plug-in volatility must be > 0 (%s given)' % sigma_hat)

  rate = problem.rate
  horizon = problem.horizon
  sharpe_sq = ((mu_hat - rate) / sigma_hat) ** 2

  if sharpe_sq == 0:
    raise ValidationError('Estimated drift equals the riskless rate; no risky allocation is optimal')

  w = (problem.target - problem.x0 * math.exp((rate - sharpe_sq) * horizon)) / -math.expm1(-sharpe_sq * horizon)

  return PluginPolicy(float(mu_hat), float(sigma_hat), float(w), rate, horizon)


def simulate_wealth(policy, paths, problem, record=False, dt_years=DAY_YEARS, bounds=None):
  """
  Self-financing wealth under allocation policy(t, x) (dollars in the risky
  asset) along one price path or a P x (L+1) batch. Returns terminal wealth,
  plus the wealth trajectory when record is set.
  """

  prices = np.asarray(paths, float)
  single = prices.ndim == 1
  prices = np.atleast_2d(prices)

  if not np.all(prices > 0):
    raise ValidationError('Price paths must be strictly positive')

  n_paths, n_points = prices.shape
  rate_step = problem.rate * dt_years
  wealth = np.full(n_paths, float(problem.x0))
  traj = np.empty((n_paths, n_points)) if record else None

  if record:
    traj[:,0] = wealth

  for k in range(n_points-1):
    alloc = np.broadcast_to(policy(k * dt_years, wealth), wealth.shape)

    if bounds is not None:
      alloc = np.clip(alloc, bounds[0], bounds[1])

    ret = prices[:,k+1] / prices[:,k] - 1.0
    wealth = wealth + alloc * ret + (wealth - alloc) * rate_step

    if not np.all(np.isfinite(wealth)):
      i = int(np.flatnonzero(~np.isfinite(wealth))[0])
      raise NumericError('Wealth became non-finite at step %d (path %d)' % (k+1, i))

    if record:
      traj[:,k+1] = wealth

  if single:
    return (wealth[0], traj[0]) if record else wealth[0]

  return (wealth, traj) if record else wealth


def _check_horizon(pool, problem):

  if abs(pool.horizon_years - problem.horizon) > 1e-9:
    raise ValidationError('Pool horizon %g years differs from problem horizon %g' % (pool.horizon_years, problem.horizon))


def evaluate_policy(policy, test_pool, problem, bounds=None, name=''):
  """
  Terminal-wealth mean, variance and Sharpe ratio of a policy in mean mode
  over every test path.
  """

  _check_horizon(test_pool, problem)
  terminal = np.sort(simulate_wealth(policy, test_pool.paths, problem, dt_years=test_pool.dt_years, bounds=bounds))
  mean = float(terminal.mean())
  variance = float(terminal.var(ddof=1)) if len(terminal) > 1 else 0.0
  std = math.sqrt(variance)

  if std <= 1e-12 * max(1.0, abs(mean)):
    sharpe = float('nan')
    undefined = True

  else:
    sharpe = (mean - problem.riskless_wealth) / std
    undefined = False

  return PolicyReport(mean, variance, sharpe, len(terminal), undefined, name, test_pool.kind)


def _terminal_affine(pool, phi1, problem):
  """
  Pool-mean terminal wealth under the mean policy is A + B*w; returns (A, B).
  """

  def rollout(w):
    policy = EmvPolicy(phi1, 0.0, 0.0, 0.0, 0.0, w, 1.0, problem.rate, problem.horizon)
    return simulate_wealth(policy, pool.paths, problem, dt_years=pool.dt_years).mean()

  a = rollout(0.0)

  return a, rollout(1.0) - a


def _calibrated_w(pool, phi1, problem, fallback):

  a, b = _terminal_affine(pool, phi1, problem)

  if abs(b) < 1e-12:
    util.warn('Terminal wealth does not respond to the multiplier; keeping w=%g' % fallback)
    return fallback

  return (problem.target - a) / b


def init_emv_policy(pool, problem, hyper=EmvHyper()):

  _check_horizon(pool, problem)
  w = _calibrated_w(pool, hyper.init_phi1, problem, problem.target)

  return EmvPolicy(hyper.init_phi1, math.log(hyper.init_variance), 0.0, 0.0, 0.0, w,
                   hyper.temp_start, problem.rate, problem.horizon)


def _critic(t_left, x, w, theta1, theta2):

  return (x - w)**2 * np.exp(-theta1 * t_left) - theta2 * t_left


def _emv_batch(prices, noise, temps, params, problem, dt_years, explore):
  """
  Roll one batch of episodes; returns per-episode terminal wealth, abort flags
  and summed critic and actor gradients over the kept episodes.
  """

  phi1, phi2, phi3, theta1, theta2, w = params
  n_eps, n_points = prices.shape
  n_steps = n_points - 1
  horizon = problem.horizon
  rate_step = problem.rate * dt_years
  x = np.full(n_eps, float(problem.x0))
  alive = np.ones(n_eps, bool)
  g_theta = np.zeros((n_eps, 2))
  g_phi = np.zeros((n_eps, 3))

  for k in range(n_steps):
    t_left = horizon - k * dt_years
    t_next = 0.0 if k == n_steps-1 else horizon - (k+1) * dt_years
    target = w * math.exp(-problem.rate * t_left) - x
    mean = phi1 * target
    log_var = phi2 + phi3 * t_left
    var = math.exp(log_var)
    ent = 0.5 * (LOG_2PI_E + log_var)

    if explore:
      act = mean + math.sqrt(var) * noise[:,k]

    else:
      act = mean

    ret = prices[:,k+1] / prices[:,k] - 1.0
    x_next = x + act * ret + (x - act) * rate_step

    j_now = _critic(t_left, x, w, theta1, theta2)
    j_next = _critic(t_next, x_next, w, theta1, theta2)
    delta = j_next - j_now - temps * ent * dt_years

    d_theta1 = -t_next * (x_next - w)**2 * math.exp(-theta1 * t_next) + t_left * (x - w)**2 * math.exp(-theta1 * t_left)
    g_theta[:,0] += 2.0 * delta * d_theta1 / n_steps
    g_theta[:,1] += 2.0 * delta * (t_left - t_next) / n_steps

    if explore:
      # delta * grad log pi(act | t, x) for the Gaussian policy
      resid = act - mean
      score_var = -0.5 + 0.5 * resid * resid / var
      g_phi[:,0] += delta * resid / var * target
      g_phi[:,1] += delta * score_var
      g_phi[:,2] += delta * score_var * t_left

    alive &= np.isfinite(x_next) & (np.abs(x_next) <= WEALTH_LIMIT)
    x = np.where(alive, x_next, problem.x0)

  return x, ~alive, g_theta[alive].sum(axis=0), g_phi[alive].sum(axis=0)


def train_emv(pool, problem, hyper=EmvHyper(), seed=0, init=None, stat_file_path=None):
  """
  Episodic actor-critic training of the exploratory mean-variance policy on
  paths drawn uniformly from the pool. Evaluation uses the policy mean.
  The critic descends the summed squared TD errors, the actor steps against
  sum(delta * grad log pi) and every lagrange_every episodes the multiplier
  moves by lr_lagrange * (target - mean of the recent terminal wealths).
  """

  policy = init or init_emv_policy(pool, problem, hyper)
  _check_horizon(pool, problem)

  phi1, phi2, phi3 = policy.phi1, policy.phi2, policy.phi3
  theta1, theta2, w = policy.theta1, policy.theta2, policy.lagrange_w
  rng = util.rng_stream(seed)
  dt_years = pool.dt_years
  n_steps = pool.window_len

  terminal = []
  n_aborted = 0
  n_done = 0
  next_w_update = hyper.lagrange_every

  util.info('Training exploratory policy for %d episodes on a %s pool of %d paths' % (hyper.n_episodes, pool.kind, pool.n_paths))

  while n_done < hyper.n_episodes:
    n_eps = min(hyper.batch_episodes, hyper.n_episodes - n_done)
    idx = rng.integers(0, pool.n_paths, size=n_eps)
    noise = rng.standard_normal((n_eps, n_steps))
    temps = hyper.temp_start * hyper.temp_decay ** np.arange(n_done, n_done + n_eps)
    params = (phi1, phi2, phi3, theta1, theta2, w)

    x_end, aborted, g_theta, g_phi = _emv_batch(pool.paths[idx], noise, temps, params, problem, dt_years, hyper.explore)
    n_aborted += int(aborted.sum())
    terminal.extend(x_end[~aborted].tolist())
    n_done += n_eps

    theta1 -= hyper.lr_critic * g_theta[0]
    theta2 -= hyper.lr_critic * g_theta[1]

    if hyper.explore and hyper.lr_actor > 0:
      phi1 -= hyper.lr_actor * g_phi[0]
      phi2 = min(max(phi2 - hyper.lr_actor * g_phi[1], LOG_VAR_RANGE[0]), LOG_VAR_RANGE[1])
      phi3 = max(phi3 - hyper.lr_actor * g_phi[2], 0.0)

    if n_done >= next_w_update and hyper.lr_lagrange > 0 and terminal:
      recent = np.mean(terminal[-hyper.lagrange_every:])
      w += hyper.lr_lagrange * (problem.target - recent)

      next_w_update += hyper.lagrange_every

    if not np.all(np.isfinite([phi1, phi2, phi3, theta1, theta2, w])):
      raise NumericError('Policy parameters became non-finite after %d episodes' % n_done)

    if n_done % 1000 < n_eps:
      util.info(' .. episode %d/%d phi1=%.4f w=%.4f' % (n_done, hyper.n_episodes, phi1, w), line_return=True)

  if n_aborted > MAX_ABORT_FRAC * hyper.n_episodes:
    raise NumericError('%d of %d training episodes diverged' % (n_aborted, hyper.n_episodes))

  temperature = hyper.temp_start * hyper.temp_decay ** hyper.n_episodes
  policy = EmvPolicy(float(phi1), float(phi2), float(phi3), float(theta1), float(theta2), float(w),
                     float(temperature), problem.rate, problem.horizon)

  util.log_report('emv_training', [('episodes', hyper.n_episodes), ('aborted', (n_aborted, hyper.n_episodes)),
                                   ('phi1', policy.phi1), ('phi2', policy.phi2), ('phi3', policy.phi3),
                                   ('theta1', policy.theta1), ('lagrange_w', policy.lagrange_w)], stat_file_path)

  return policy


def build_synthetic_market_pool(bundle, n_paths, seed, num_cpu=1, max_rounds=10):
  """
  Generator-synthetic pool; paths with non-positive prices are rejected and
  replaced by fresh draws.
  """

  if bundle.dim != 1:
    raise ValidationError('Synthetic market pools need a one-dimensional generator (d=%d)' % bundle.dim)

  n_paths = int(n_paths)
  kept = []
  n_drawn = 0
  n_rejected = 0

  for r in range(max_rounds):
    need = n_paths - len(kept)

    if need <= 0:
      break

    n_draw = need if r == 0 else 2 * need
    paths, report = generate_paths(bundle, n_draw, util.derive_seed(seed, r), num_cpu, return_report=True)
    prices = paths.data[:,:,0]
    good = np.all(prices > 0, axis=1)
    n_drawn += n_draw
    n_rejected += report['n_failed'] + int((~good).sum())
    kept.extend(prices[good])

    if n_rejected > MAX_REJECT_FRAC * n_drawn:
      raise NumericError('%d of %d synthetic paths were rejected; retrain the generator' % (n_rejected, n_drawn))

  if len(kept) < n_paths:
    raise NumericError('Only %d of %d synthetic paths were accepted' % (len(kept), n_paths))

  prices = np.array(kept[:n_paths])
  util.info('Synthetic pool: %d paths, %d rejected' % (n_paths, n_rejected))

  return MarketPathPool('synthetic', prices / prices[:,:1], bundle.grid.dt)


def policy_rows(reports):

  return [{'policy': r.policy, 'pool': r.pool, 'mean': r.mean, 'variance': r.variance,
           'sharpe': r.sharpe, 'sharpe_undefined': r.sharpe_undefined, 'n_episodes': r.n_episodes}
          for r in reports]


def write_policy_table(file_path, reports):

  with util.open_file(file_path, 'w') as file_obj:
    file_obj.write('policy,pool,mean,variance,sharpe\n')

    for r in reports:
      file_obj.write('%s,%s,%r,%r,%r\n' % (r.policy, r.pool, r.mean, r.variance, r.sharpe))

  return file_path


def run_mv_experiment(train_pool, test_pool, problem, hyper=EmvHyper(), seed=0, synthetic_pool=None,
                      n_bootstrap=None, stat_file_path=None):
  """
  Train plug-in and exploratory policies on the split, bootstrap and (when
  given) split+synthetic pools, and evaluate each on the test pool.
  """

  n_bootstrap = train_pool.n_paths if n_bootstrap is None else n_bootstrap
  pools = [('split', train_pool),
           ('bootstrap', bootstrap_pool(train_pool, n_bootstrap, util.derive_seed(seed, 0)))]

  if synthetic_pool is not None:
    pools.append(('split+synthetic', mix_pools(train_pool, synthetic_pool)))

  reports = []
  mu_hat, sigma_hat = estimate_gbm_params(train_pool)
  plugin = plugin_policy(mu_hat, sigma_hat, problem)
  reports.append(replace(evaluate_policy(plugin, test_pool, problem, name='plugin'), pool='split', n_episodes=0))

  for i, (label, pool) in enumerate(pools, 1):
    policy = train_emv(pool, problem, hyper, util.derive_seed(seed, i), stat_file_path=stat_file_path)
    report = evaluate_policy(policy, test_pool, problem, name='emv')
    reports.append(replace(report, pool=label, n_episodes=hyper.n_episodes))

  for r in reports:
    util.info('%-8s %-16s mean=%.5f var=%.6f sharpe=%.4f' % (r.policy, r.pool, r.mean, r.variance, r.sharpe))

  return reports
