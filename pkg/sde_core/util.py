"""
Shared plumbing for the SDE path generation modules: logging, error types,
random number substreams, parallel job execution, file checks and JSON reports.
"""

import os, sys, gzip, io, json, hashlib
import numpy as np

from multiprocessing import Pool, cpu_count
from multiprocessing.pool import ThreadPool

LOG_FILE_PATH = None
VERBOSE = True
READ_BUFFER = 2**16
MAX_CPU = cpu_count()


class SdeError(Exception):

  exit_code = 1


class ValidationError(SdeError, ValueError):

  exit_code = 2


class SlotIndexError(ValidationError, IndexError):

  pass


class NumericError(SdeError, ArithmeticError):

  exit_code = 3


class DegenerateDataError(NumericError):

  pass


class DataIOError(SdeError, IOError):

  exit_code = 4


def set_log_file(file_path):

  global LOG_FILE_PATH
  LOG_FILE_PATH = file_path


def set_verbose(verbose):

  global VERBOSE
  VERBOSE = bool(verbose)


def _write_log_lines(lines, verbose=None, line_return=False):

  if verbose is None:
    verbose = VERBOSE

  if LOG_FILE_PATH:
    with open(LOG_FILE_PATH, 'a') as file_obj:
      file_obj.write('\n'.join(lines) + '\n')

  if verbose:
    if line_return:
      sys.stdout.write('\r' + lines[-1])
      sys.stdout.flush()

    else:
      for line in lines:
        print(line)


def info(msg, prefix='INFO', line_return=False):

  line = '%s: %s' % (prefix, msg)
  _write_log_lines([line], line_return=line_return)


def warn(msg, prefix='WARNING'):

  line = '%s: %s' % (prefix, msg)
  _write_log_lines([line])


def critical(msg, prefix='FAILURE', exit_code=1):

  lines = ['%s: %s' % (prefix, msg)]
  _write_log_lines(lines, verbose=True)
  sys.exit(exit_code)


def rng_stream(seed, *keys):
  """
  Counter-based random stream for a (seed, keys...) address; independent of how
  many other streams exist.
  """

  seed = int(seed)

  if seed < 0:
    raise ValidationError('Random seed must be non-negative (%d given)' % seed)

  seq = np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in keys))
  key = seq.generate_state(2, np.uint64)

  return np.random.Generator(np.random.Philox(key=key))


def derive_seed(seed, *keys):

  seed = int(seed)

  if seed < 0:
    raise ValidationError('Random seed must be non-negative (%d given)' % seed)

  seq = np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in keys))

  return int(seq.generate_state(1, np.uint32)[0])


def path_streams(seed, n_paths, *keys):

  return [rng_stream(seed, *keys, i) for i in range(n_paths)]


def split_ranges(n_items, num_cpu):

  num_cpu = max(1, min(int(num_cpu), n_items))
  split_idx = np.linspace(0, n_items, num_cpu+1).astype(int)

  return [(int(split_idx[i]), int(split_idx[i+1])) for i in range(num_cpu) if split_idx[i+1] > split_idx[i]]


def parallel_split_job(job_func, job_data, common_args=(), num_cpu=1, threads=False):
  """
  Run job_func(item, *common_args) for each item in job_data, results in job order.
  Processes need a picklable job_func; threads=True accepts closures.
  """

  job_data = list(job_data)
  num_cpu = max(1, min(int(num_cpu or 1), len(job_data) or 1))

  if num_cpu == 1:
    return [job_func(item, *common_args) for item in job_data]

  args = [(item,) + tuple(common_args) for item in job_data]
  pool_class = ThreadPool if threads else Pool

  with pool_class(num_cpu) as pool:
    results = pool.starmap(job_func, args)

  return results


def open_file(file_path, mode='r', gzip_exts=('.gz','.gzip'), buffer_size=READ_BUFFER):
  """
  GZIP agnostic text file opening
  """

  if os.path.splitext(file_path)[1].lower() in gzip_exts:
    if 'r' in mode:
      return io.TextIOWrapper(io.BufferedReader(gzip.open(file_path, 'rb'), buffer_size), encoding='utf-8')

    return gzip.open(file_path, 'wt', encoding='utf-8')

  return open(file_path, mode, buffer_size, encoding='utf-8', newline='')


def check_regular_file(file_path, critical=False):

  msg = ''

  if not os.path.exists(file_path):
    msg = 'File "%s" does not exist' % file_path

  elif not os.path.isfile(file_path):
    msg = 'Location "%s" is not a regular file' % file_path

  elif os.stat(file_path).st_size == 0:
    msg = 'File "%s" is of zero size ' % file_path

  elif not os.access(file_path, os.R_OK):
    msg = 'File "%s" is not readable' % file_path

  is_ok = not msg

  if critical and not is_ok:
    raise DataIOError(msg)

  return is_ok, msg


def json_text(obj):

  return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + '\n'


def write_json(file_path, obj):

  with open(file_path, 'w') as file_obj:
    file_obj.write(json_text(obj))

  return file_path


def read_json(file_path):

  check_regular_file(file_path, critical=True)

  try:
    with open(file_path) as file_obj:
      return json.load(file_obj)

  except ValueError as err:
    raise DataIOError('File "%s" is not valid JSON: %s' % (file_path, err))


def config_hash(config):

  return hashlib.sha256(json.dumps(config, sort_keys=True).encode('utf-8')).hexdigest()


def format_val(val):

  if isinstance(val, (bool, np.bool_)):
    return '{}'.format(bool(val))

  if isinstance(val, (int, np.integer)):
    return '{:,}'.format(int(val))

  if isinstance(val, (float, np.floating)):
    return '{:.5g}'.format(float(val))

  return '{}'.format(val)


def log_report(section, data_pairs, stat_file_path=None, title=None):

  lines = [title or section.replace('_', ' ').capitalize()]
  data_pairs = [(key, val.tolist() if isinstance(val, np.ndarray) else val) for key, val in data_pairs]

  for key, val in data_pairs:

    if isinstance(val, (tuple, list)) and len(val) == 2 and not isinstance(val[0], (list, tuple)):
      num, total = val
      percent = 100.0 * num/float(total or 1.0)
      lines.append('  {} : {} ({:.2f}%)'.format(key, format_val(num), percent))

    else:
      lines.append('  {} : {}'.format(key, format_val(val)))

  for line in lines:
    info(line)

  if stat_file_path:
    if os.path.exists(stat_file_path):
      stat_dict = read_json(stat_file_path)

    else:
      stat_dict = {}

    stat_dict[section] = [list(pair) for pair in data_pairs]
    write_json(stat_file_path, stat_dict) # Overwrite
