import os, sys, json, shutil, string, platform, importlib, importlib.util
import scipy
import numpy as np

from argparse import ArgumentParser
from dataclasses import asdict, replace

from sde_core import util, sde_lab, pathgen, eval_metrics, mv_portfolio
from sde_core.util import SdeError, ValidationError, DataIOError

PROG_NAME = 'sde_gen'
VERSION = '1.0.0'
DESCRIPTION = 'Diffusion-model path generation for stochastic differential equations: ' \
              'simulation, per-slot training, autoregressive generation, evaluation and ' \
              'a mean-variance portfolio experiment'

SESSION_KEY = ''.join(np.random.choice(tuple(string.ascii_letters), 8))
TEMP_EXT = '_temp_%s' % SESSION_KEY
LOG_FILE_NAME = 'sde_gen.log'
STAT_FILE_NAME = 'sde_gen_stats.json'
MANIFEST_FILE = 'manifest.json'
PATHS_FILE = 'paths.spg'
SYNTH_FILE = 'synthetic.spg'
BUNDLE_DIR = 'bundle'
KL_REPORT = 'kl_report.json'
KL_BASELINE_REPORT = 'kl_baseline_report.json'
MOMENTS_CSV = 'moments.csv'
MOMENTS_REPORT = 'moments_report.json'
POLICY_TABLE = 'policy_table.csv'
POLICY_REPORT = 'policy_report.json'

COMMANDS = ('simulate', 'train', 'generate', 'eval-kl', 'eval-moments', 'mv', 'repro-ou', 'repro-gbm')
MV_ACTIONS = ('ingest', 'pool', 'train', 'evaluate', 'run')
KINDS = ('ou', 'gbm', 'custom-sde', 'mv')
INCREMENT_MODES = ('auto', 'absolute', 'log')
LOG_INCREMENT_KINDS = ('gbm', 'mv')
MV_POOL_KINDS = ('bootstrap', 'synthetic', 'gbm', 'mixed')
REPRO_OU_SYNTH = 1000
NO_REPORT_KEYS = ('num_cpu', 'out_dir')


def _int_list(text):

  return tuple(int(x) for x in str(text).replace(' ', '').split(',') if x)


def _float_list(text):

  return tuple(float(x) for x in str(text).replace(' ', '').split(',') if x)


def _bool(text):

  val = str(text).strip().lower()

  if val in ('1', 'true', 'yes', 'on'):
    return True

  if val in ('0', 'false', 'no', 'off'):
    return False

  raise ValueError('not a boolean: %s' % text)


# Key: (parser, default, help)
CONFIG_KEYS = {
  'kind':          (str,         'ou',          'Experiment kind: %s' % ', '.join(KINDS)),
  'seed':          (int,         None,          'Master random seed (mandatory)'),
  'out_dir':       (str,         None,          'Output directory for artifacts'),
  't0':            (float,       0.0,           'Grid origin time'),
  'dt':            (float,       0.05,          'Grid time step'),
  'n_steps':       (int,         20,            'Number of grid steps N_T'),
  'n_paths':       (int,         100,           'Number of paths to simulate, train on or generate'),
  'x0':            (_float_list, None,          'Initial state, comma separated'),
  'ou_rate':       (float,       1.0,           'OU mean-reversion rate'),
  'ou_level':      (float,       1.2,           'OU long-run level'),
  'ou_vol':        (float,       0.3,           'OU volatility'),
  'gbm_dim':       (int,         10,            'Dimension of the random GBM'),
  'gbm_spec_seed': (int,         0,             'Seed used to draw the random GBM parameters'),
  'sde_module':    (str,         None,          'Python file or module defining drift(t, x), diffusion(t, x) and x0'),
  'substeps':      (int,         10,            'Euler-Maruyama substeps per grid step'),
  'diff_steps':    (int,         100,           'Number of diffusion steps K'),
  'hidden':        (_int_list,   (128,128,128), 'Hidden layer widths, comma separated'),
  'activation':    (str,         'silu',        'Network activation: silu or relu'),
  'learning_rate': (float,       1e-3,          'Adam learning rate'),
  'train_steps':   (int,         4000,          'Training steps per slot'),
  'batch_size':    (int,         64,            'Training batch size'),
  'shared_net':    (_bool,       False,         'Train one network shared across slots'),
  'increments':    (str,         'auto',        'Slot training target: absolute, log (log returns of positive paths) or auto (log for kinds gbm and mv)'),
  'knn_k':         (int,         1,             'Neighbour order of the KL estimator'),
  'n_repeats':     (int,         20,            'Repeats of the KL experiment'),
  'n_per_side':    (int,         100,           'Real and synthetic paths per KL repeat'),
  'mv_target':     (float,       1.1,           'Mean-variance target terminal wealth z'),
  'mv_rate':       (float,       0.02,          'Annual riskless rate'),
  'mv_mu':         (float,       0.08,          'Drift of a ground-truth GBM market pool'),
  'mv_sigma':      (float,       0.2,           'Volatility of a ground-truth GBM market pool'),
  'pool_kind':     (str,         'bootstrap',   'Pool to build with "mv pool": %s' % ', '.join(MV_POOL_KINDS)),
  'window_len':    (int,         126,           'Trading days per market window'),
  'n_episodes':    (int,         20000,         'Training episodes of the exploratory policy'),
  'n_synthetic':   (int,         40,            'Synthetic market paths to generate'),
  'num_cpu':       (int,         None,          'Number of parallel worker processes'),
}

COMMAND_DEFAULTS = {'repro-gbm': {'kind': 'gbm', 'dt': 1.0, 'n_steps': 7, 'n_paths': 2000},
                    'repro-ou': {'kind': 'ou'}}


def _parse_value(key, text, where):

  parser = CONFIG_KEYS[key][0]

  try:
    return parser(text)

  except (TypeError, ValueError):
    raise ValidationError('Bad value "%s" for %s %s' % (text, key, where))


def read_config_file(file_path):
  """
  Whitespace separated "key value" lines; # starts a comment.
  """

  util.check_regular_file(file_path, critical=True)
  config = {}

  with util.open_file(file_path) as file_obj:
    for line_no, line in enumerate(file_obj, 1):
      line = line.split('#', 1)[0].strip()

      if not line:
        continue

      parts = line.split(None, 1)

      if len(parts) != 2:
        raise ValidationError('Line %d of config "%s" is not a "key value" pair' % (line_no, file_path))

      key, text = parts

      if key not in CONFIG_KEYS:
        raise ValidationError('Unknown config key "%s" on line %d of "%s"' % (key, line_no, file_path))

      config[key] = _parse_value(key, text, 'on line %d of "%s"' % (line_no, file_path))

  return config


def resolve_config(command, config_file=None, flag_values=None):

  config = {key: val[1] for key, val in CONFIG_KEYS.items()}
  config.update(COMMAND_DEFAULTS.get(command, {}))

  if config_file:
    config.update(read_config_file(config_file))

  for key, text in (flag_values or {}).items():
    if text is not None:
      config[key] = _parse_value(key, text, 'given on the command line')

  if config['seed'] is None:
    raise ValidationError('A random seed is required (-s/--seed or "seed" in the config file)')

  if config['seed'] < 0:
    raise ValidationError('Random seed must be non-negative')

  if config['kind'] not in KINDS:
    raise ValidationError('Unknown kind "%s"; use one of %s' % (config['kind'], ', '.join(KINDS)))

  if config['increments'] not in INCREMENT_MODES:
    raise ValidationError('Unknown increments mode "%s"; use one of %s' % (config['increments'], ', '.join(INCREMENT_MODES)))

  if not config['num_cpu']:
    config['num_cpu'] = util.MAX_CPU

  return config


def report_config(config, inputs=None):

  report = {key: (list(val) if isinstance(val, tuple) else val) for key, val in config.items() if key not in NO_REPORT_KEYS}

  if inputs:
    report['inputs'] = inputs

  return report


def _load_sde_module(module_ref):

  if not module_ref:
    raise ValidationError('Kind custom-sde needs "sde_module"')

  try:
    if module_ref.endswith('.py'):
      spec = importlib.util.spec_from_file_location('custom_sde', module_ref)
      module = importlib.util.module_from_spec(spec)
      spec.loader.exec_module(module)

    else:
      module = importlib.import_module(module_ref)

  except (ImportError, OSError) as err:
    raise DataIOError('Could not load SDE module "%s": %s' % (module_ref, err))

  for name in ('drift', 'diffusion', 'x0'):
    if not hasattr(module, name):
      raise ValidationError('SDE module "%s" does not define "%s"' % (module_ref, name))

  x0 = np.atleast_1d(np.asarray(module.x0, float))

  return sde_lab.GenericSdeSpec(module.drift, module.diffusion, x0, getattr(module, 'brownian_dim', len(x0)))


def build_sde_spec(config):

  kind = config['kind']
  x0 = config['x0']

  if kind == 'ou':
    return sde_lab.OuSpec(config['ou_rate'], config['ou_level'], config['ou_vol'], x0[0] if x0 else 1.5)

  if kind == 'gbm':
    spec = sde_lab.random_gbm_spec(config['gbm_dim'], config['gbm_spec_seed'])

    if x0:
      spec = replace(spec, x0=np.broadcast_to(x0, (spec.dim,)))

    return spec

  if kind == 'custom-sde':
    return _load_sde_module(config['sde_module'])

  raise ValidationError('Kind "%s" does not define an SDE' % kind)


def build_grid(config):

  return sde_lab.TimeGrid(config['t0'], config['dt'], config['n_steps'])


def log_increments(config):

  mode = config['increments']

  if mode == 'auto':
    return config['kind'] in LOG_INCREMENT_KINDS

  return mode == 'log'


def generator_config(config):

  return pathgen.GeneratorConfig(diff_steps=config['diff_steps'], hidden=tuple(config['hidden']),
                                 activation=config['activation'], train_steps=config['train_steps'],
                                 batch_size=config['batch_size'], learning_rate=config['learning_rate'],
                                 shared_net=config['shared_net'], log_increments=log_increments(config))


def _source_cpu(config, spec):

  if isinstance(spec, sde_lab.GenericSdeSpec) and config['num_cpu'] > 1:
    util.warn('Custom SDE functions cannot be sent to worker processes; using one CPU')
    return 1

  return config['num_cpu']


def _need(value, flag, command):

  if not value:
    raise ValidationError('Command "%s" needs %s' % (command, flag))

  return value


def run_simulate(config, args, work_dir):

  spec = build_sde_spec(config)
  grid = build_grid(config)
  paths = sde_lab.simulator_source(spec, grid, config['substeps'])(config['n_paths'], config['seed'])
  sde_lab.save_paths(paths, os.path.join(work_dir, PATHS_FILE))

  util.log_report('simulation', [('kind', config['kind']), ('paths', paths.n_paths),
                                 ('slots', grid.n_steps), ('dim', paths.dim)],
                  os.path.join(work_dir, STAT_FILE_NAME))


def run_train(config, args, work_dir):

  dataset = sde_lab.load_paths(_need(args['i'], '-i PATH_FILE', 'train'), config['dt'], config['t0'])
  bundle = pathgen.train_generator(dataset, generator_config(config), config['seed'], config['num_cpu'],
                                   os.path.join(work_dir, STAT_FILE_NAME))
  pathgen.save_bundle(bundle, os.path.join(work_dir, BUNDLE_DIR))


def run_generate(config, args, work_dir):

  bundle = pathgen.load_bundle(_need(args['b'] or args['i'], '-b BUNDLE_DIR', 'generate'))
  paths, report = pathgen.generate_paths(bundle, config['n_paths'], config['seed'], config['num_cpu'], return_report=True)
  sde_lab.save_paths(paths, os.path.join(work_dir, SYNTH_FILE))

  util.log_report('generation', [('requested', report['n_requested']),
                                 ('failed', (report['n_failed'], report['n_requested']))],
                  os.path.join(work_dir, STAT_FILE_NAME))


def _kl_generator(config, args):

  if args['baseline']:
    dataset = sde_lab.load_paths(_need(args['i'], '-i TRAIN_PATHS', 'eval-kl --baseline'), config['dt'], config['t0'])
    return pathgen.baseline_source(dataset, args['baseline'], diff_steps=config['diff_steps'])

  if not args['b']:
    raise ValidationError('Command "eval-kl" needs -b BUNDLE_DIR or --baseline')

  return pathgen.load_bundle(args['b'])


def run_eval_kl(config, args, work_dir):

  spec = build_sde_spec(config)
  real_source = sde_lab.simulator_source(spec, build_grid(config), config['substeps'])
  generator = _kl_generator(config, args)
  estimate = eval_metrics.kl_experiment(real_source, generator, config['n_per_side'], config['n_repeats'],
                                        config['knn_k'], config['seed'], _source_cpu(config, spec))

  eval_metrics.write_metric_report(os.path.join(work_dir, KL_REPORT), estimate,
                                   report_config(config, _inputs(args)))


def _moments_report(real_stats, synth_stats):

  mean_err, std_err = eval_metrics.max_relative_error(real_stats, synth_stats)

  return {'max_mean_rel_error': mean_err,
          'max_std_rel_error': std_err,
          'real_positivity': real_stats.positivity_fraction,
          'synthetic_positivity': synth_stats.positivity_fraction}


def run_eval_moments(config, args, work_dir):

  real = sde_lab.load_paths(_need(args['i'], '-i REAL_PATHS', 'eval-moments'), config['dt'], config['t0'])
  synth = sde_lab.load_paths(_need(args['j'], '-j SYNTHETIC_PATHS', 'eval-moments'), config['dt'], config['t0'])
  real_stats = eval_metrics.path_statistics(real)
  synth_stats = eval_metrics.path_statistics(synth)

  eval_metrics.write_moment_curves_csv(os.path.join(work_dir, MOMENTS_CSV), real.grid, real_stats, synth_stats)
  util.write_json(os.path.join(work_dir, MOMENTS_REPORT), _moments_report(real_stats, synth_stats))


def _mv_problem(config):

  horizon = config['window_len'] * mv_portfolio.DAY_YEARS

  return mv_portfolio.MvProblem(1.0, config['mv_rate'], horizon, config['mv_target'])


def _emv_hyper(config):

  return mv_portfolio.EmvHyper(n_episodes=config['n_episodes'])


def _load_policy(file_path):

  data = util.read_json(file_path)

  try:
    if 'phi1' in data:
      return mv_portfolio.EmvPolicy(**data)

    return mv_portfolio.PluginPolicy(**data)

  except TypeError as err:
    raise DataIOError('File "%s" is not a saved policy: %s' % (file_path, err))


def run_mv(config, args, work_dir):

  action = args['action']
  problem = _mv_problem(config)
  stat_file = os.path.join(work_dir, STAT_FILE_NAME)

  if action == 'ingest':
    pool = mv_portfolio.ingest_index_csv(_need(args['i'], '-i INDEX_CSV', 'mv ingest'), config['window_len'])
    mv_portfolio.save_pool(pool, os.path.join(work_dir, 'pool_split'))

  elif action == 'pool':
    kind = config['pool_kind']

    if kind == 'bootstrap':
      source = mv_portfolio.load_pool(_need(args['i'], '-i POOL', 'mv pool'))
      pool = mv_portfolio.bootstrap_pool(source, config['n_paths'], config['seed'])

    elif kind == 'synthetic':
      bundle = pathgen.load_bundle(_need(args['b'], '-b BUNDLE_DIR', 'mv pool'))
      pool = mv_portfolio.build_synthetic_market_pool(bundle, config['n_synthetic'], config['seed'], config['num_cpu'])

    elif kind == 'gbm':
      pool = mv_portfolio.gbm_market_pool(config['mv_mu'], config['mv_sigma'], config['n_paths'],
                                          config['window_len'], config['seed'])

    elif kind == 'mixed':
      pool = mv_portfolio.mix_pools(mv_portfolio.load_pool(_need(args['i'], '-i POOL', 'mv pool')),
                                    mv_portfolio.load_pool(_need(args['j'], '-j POOL', 'mv pool')))

    else:
      raise ValidationError('Unknown pool kind "%s"; use one of %s' % (kind, ', '.join(MV_POOL_KINDS)))

    mv_portfolio.save_pool(pool, os.path.join(work_dir, 'pool_%s' % kind))

  elif action == 'train':
    pool = mv_portfolio.load_pool(_need(args['i'], '-i POOL', 'mv train'))
    mu_hat, sigma_hat = mv_portfolio.estimate_gbm_params(pool)
    plugin = mv_portfolio.plugin_policy(mu_hat, sigma_hat, problem)
    emv = mv_portfolio.train_emv(pool, problem, _emv_hyper(config), config['seed'], stat_file_path=stat_file)
    util.write_json(os.path.join(work_dir, 'plugin_policy.json'), asdict(plugin))
    util.write_json(os.path.join(work_dir, 'emv_policy.json'), asdict(emv))

  elif action == 'evaluate':
    policy = _load_policy(_need(args['i'], '-i POLICY_JSON', 'mv evaluate'))
    test_pool = mv_portfolio.load_pool(_need(args['j'], '-j TEST_POOL', 'mv evaluate'))
    name = 'emv' if isinstance(policy, mv_portfolio.EmvPolicy) else 'plugin'
    report = mv_portfolio.evaluate_policy(policy, test_pool, problem, name=name)
    util.write_json(os.path.join(work_dir, POLICY_REPORT), mv_portfolio.policy_rows([report])[0])
    mv_portfolio.write_policy_table(os.path.join(work_dir, POLICY_TABLE), [report])

  else:
    train_pool = mv_portfolio.load_pool(_need(args['i'], '-i TRAIN_POOL', 'mv run'))
    test_pool = mv_portfolio.load_pool(_need(args['j'], '-j TEST_POOL', 'mv run'))
    synth_pool = None

    if args['b']:
      bundle = pathgen.load_bundle(args['b'])
      synth_pool = mv_portfolio.build_synthetic_market_pool(bundle, config['n_synthetic'],
                                                            util.derive_seed(config['seed'], 100), config['num_cpu'])

    reports = mv_portfolio.run_mv_experiment(train_pool, test_pool, problem, _emv_hyper(config), config['seed'],
                                             synth_pool, stat_file_path=stat_file)
    util.write_json(os.path.join(work_dir, POLICY_REPORT), {'config': report_config(config, _inputs(args)),
                                                            'policies': mv_portfolio.policy_rows(reports)})
    mv_portfolio.write_policy_table(os.path.join(work_dir, POLICY_TABLE), reports)


def _repro(config, work_dir, spec, n_synth):

  seed = config['seed']
  num_cpu = _source_cpu(config, spec)
  grid = build_grid(config)
  stat_file = os.path.join(work_dir, STAT_FILE_NAME)
  source = sde_lab.simulator_source(spec, grid, config['substeps'])

  dataset = source(config['n_paths'], util.derive_seed(seed, 0))
  sde_lab.save_paths(dataset, os.path.join(work_dir, PATHS_FILE))

  bundle = pathgen.train_generator(dataset, generator_config(config), util.derive_seed(seed, 1), num_cpu, stat_file)
  pathgen.save_bundle(bundle, os.path.join(work_dir, BUNDLE_DIR))

  synth = pathgen.generate_paths(bundle, n_synth, util.derive_seed(seed, 2), num_cpu)
  sde_lab.save_paths(synth, os.path.join(work_dir, SYNTH_FILE))

  real_stats = eval_metrics.path_statistics(dataset)
  synth_stats = eval_metrics.path_statistics(synth)
  eval_metrics.write_moment_curves_csv(os.path.join(work_dir, MOMENTS_CSV), grid, real_stats, synth_stats)

  kl_args = (config['n_per_side'], config['n_repeats'], config['knn_k'], util.derive_seed(seed, 3), num_cpu)
  cfg = report_config(config)
  estimate = eval_metrics.kl_experiment(source, bundle, *kl_args)
  eval_metrics.write_metric_report(os.path.join(work_dir, KL_REPORT), estimate, cfg)

  baseline = eval_metrics.kl_experiment(source, pathgen.baseline_source(dataset, 'gaussian'), *kl_args)
  eval_metrics.write_metric_report(os.path.join(work_dir, KL_BASELINE_REPORT), baseline, dict(cfg, baseline='gaussian'))

  util.info('KL(real||synthetic) = %s; Gaussian baseline %s' % (estimate, baseline))

  return synth, _moments_report(real_stats, synth_stats)


def run_repro_ou(config, args, work_dir):

  config = dict(config, kind='ou')
  spec = build_sde_spec(config)
  synth, report = _repro(config, work_dir, spec, REPRO_OU_SYNTH)
  mean, std = sde_lab.ou_moments(spec, synth.grid)
  synth_mean = synth.data[:,:,0].mean(axis=0)
  synth_std = synth.data[:,:,0].std(axis=0, ddof=1)

  report['max_abs_mean_error_closed_form'] = float(np.abs(synth_mean - mean).max())
  report['max_std_ratio_error_closed_form'] = float(np.abs(synth_std[1:] / std[1:] - 1.0).max())
  util.write_json(os.path.join(work_dir, MOMENTS_REPORT), report)


def run_repro_gbm(config, args, work_dir):

  config = dict(config, kind='gbm')
  spec = build_sde_spec(config)
  synth, report = _repro(config, work_dir, spec, config['n_paths'])
  util.write_json(os.path.join(work_dir, MOMENTS_REPORT), report)


RUNNERS = {'simulate': run_simulate,
           'train': run_train,
           'generate': run_generate,
           'eval-kl': run_eval_kl,
           'eval-moments': run_eval_moments,
           'mv': run_mv,
           'repro-ou': run_repro_ou,
           'repro-gbm': run_repro_gbm}


def _inputs(args):

  return {key: args[key] for key in ('i', 'j', 'b', 'baseline', 'action') if args.get(key)}


def _versions():

  return {PROG_NAME: VERSION,
          'numpy': np.__version__,
          'scipy': scipy.__version__,
          'python': platform.python_version()}


def write_manifest(work_dir, command, config, inputs):

  cfg = report_config(config, inputs)
  manifest = {'prog': PROG_NAME,
              'version': VERSION,
              'command': command,
              'config': cfg,
              'config_hash': util.config_hash(cfg),
              'seed': config['seed'],
              'versions': _versions()}

  return util.write_json(os.path.join(work_dir, MANIFEST_FILE), manifest)


def _move_outputs(work_dir, out_dir):

  os.makedirs(out_dir, exist_ok=True)

  for name in sorted(os.listdir(work_dir)):
    dest = os.path.join(out_dir, name)

    if os.path.isdir(dest):
      shutil.rmtree(dest)

    shutil.move(os.path.join(work_dir, name), dest)

  os.rmdir(work_dir)


def sde_gen(command, config, args):
  """
  Run one command with artifacts built in a temporary directory beside
  out_dir and moved into place only on success.
  """

  out_dir = os.path.abspath(config['out_dir'] or '.')
  work_dir = out_dir.rstrip(os.sep) + TEMP_EXT
  os.makedirs(out_dir, exist_ok=True)
  os.makedirs(work_dir)
  util.set_log_file(os.path.join(out_dir, LOG_FILE_NAME))
  util.info('%s %s: %s (seed %d)' % (PROG_NAME, VERSION, command, config['seed']))

  try:
    RUNNERS[command](config, args, work_dir)
    write_manifest(work_dir, command, config, _inputs(args))

  except BaseException:
    shutil.rmtree(work_dir, ignore_errors=True)
    raise

  _move_outputs(work_dir, out_dir)
  util.info('Outputs written to %s' % out_dir)

  return out_dir


def _error_exit(err):

  exit_code = getattr(err, 'exit_code', DataIOError.exit_code)
  sys.stderr.write(json.dumps({'error': type(err).__name__, 'message': str(err), 'exit_code': exit_code}) + '\n')
  sys.exit(exit_code)


class JsonArgumentParser(ArgumentParser):
  """Reports command line usage errors in the same JSON shape as run failures."""

  def error(self, message):

    self.print_usage(sys.stderr)
    _error_exit(ValidationError('%s: %s' % (self.prog, message)))


def main(argv=None):

  if argv is None:
    argv = sys.argv[1:]

  epilog = 'Settings may be given in a config file of "key value" lines (-c); command line flags override it. '
  epilog += 'Exit codes: 0 success, 2 invalid input, 3 numeric failure, 4 file or unexpected error.'

  arg_parse = JsonArgumentParser(prog=PROG_NAME, description=DESCRIPTION,
                                 epilog=epilog, prefix_chars='-', add_help=True)

  arg_parse.add_argument('command', choices=COMMANDS, metavar='COMMAND',
                         help='Operation to run. Available: ' + ', '.join(COMMANDS))

  arg_parse.add_argument('action', nargs='?', default=None, choices=MV_ACTIONS, metavar='MV_ACTION',
                         help='Step of the "mv" portfolio pipeline. Available: ' + ', '.join(MV_ACTIONS))

  arg_parse.add_argument('-c', '--config', metavar='CONFIG_FILE', dest='c', default=None,
                         help='Config file of whitespace separated "key value" lines')

  arg_parse.add_argument('-i', '--input', metavar='INPUT', dest='i', default=None,
                         help='Primary input: path set file, pool file root, index CSV or policy JSON')

  arg_parse.add_argument('-j', '--input-2', metavar='INPUT_2', dest='j', default=None,
                         help='Secondary input: synthetic path set or test pool file root')

  arg_parse.add_argument('-b', '--bundle', metavar='BUNDLE_DIR', dest='b', default=None,
                         help='Trained generator bundle directory')

  arg_parse.add_argument('--baseline', metavar='BASELINE', dest='baseline', default=None,
                         choices=('sdm-mc', 'gaussian'),
                         help='Evaluate a baseline sampler fitted to -i instead of a bundle: sdm-mc or gaussian')

  arg_parse.add_argument('-s', '--seed', metavar='SEED', dest='seed', default=None,
                         help='Master random seed. Mandatory here or in the config file')

  arg_parse.add_argument('-o', '--out-dir', metavar='OUT_DIR', dest='out_dir', default=None,
                         help='Output directory. Default: current directory')

  arg_parse.add_argument('-n', '--num-cpu', '--threads', metavar='CPU_COUNT', dest='num_cpu', default=None,
                         help='Number of parallel workers. Default: all %d available' % util.MAX_CPU)

  arg_parse.add_argument('-q', '--quiet', default=False, action='store_true', dest='q',
                         help='Do not print log messages to the terminal')

  for key, (parser, default, help_text) in CONFIG_KEYS.items():
    if key in ('seed', 'out_dir', 'num_cpu'):
      continue

    flag = '--' + key.replace('_', '-')
    arg_parse.add_argument(flag, metavar=key.upper(), dest=key, default=None,
                           help='%s. Default: %s' % (help_text, default))

  args = vars(arg_parse.parse_args(argv))
  command = args['command']
  util.set_verbose(not args['q'])

  try:
    if command == 'mv' and not args['action']:
      raise ValidationError('Command "mv" needs an action: %s' % ', '.join(MV_ACTIONS))

    flag_values = {key: args[key] for key in CONFIG_KEYS}
    config = resolve_config(command, args['c'], flag_values)
    sde_gen(command, config, args)

  except SdeError as err:
    _error_exit(err)

  except OSError as err:
    _error_exit(DataIOError(str(err)))

  except Exception as err:
    util.warn('Unexpected %s: %s' % (type(err).__name__, err))
    _error_exit(err)

  finally:
    util.set_log_file(None)

  return 0


if __name__ == '__main__':

  sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
  sys.exit(main())
