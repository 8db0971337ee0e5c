import os, sys

import numpy as np

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from sde_core import util

PROG_NAME = 'report_stats'
VERSION = '1.0.0'
DESCRIPTION = 'Script to aggregate KL and portfolio report JSON files from several runs into one table'

KL_COLS = ('Run', 'Metric', 'Mean', 'Std error', 'Repeats')
POLICY_COLS = ('Run', 'Policy', 'Pool', 'Mean', 'Variance', 'Sharpe')


def _run_name(json_path):

  dir_name = os.path.basename(os.path.dirname(os.path.abspath(json_path)))
  file_root = os.path.splitext(os.path.basename(json_path))[0]

  return '%s/%s' % (dir_name, file_root)


def collect_rows(json_paths):
  """
  Reads kl_report style ({"metric", "mean", ...}) and policy report style
  ({"policies": [...]}) files; returns KL rows and policy rows.
  """

  kl_rows = []
  policy_rows = []

  for json_path in json_paths:
    data = util.read_json(json_path)
    run = _run_name(json_path)

    if 'metric' in data:
      kl_rows.append((run, data['metric'], data['mean'], data['std_error'], data['n_repeats']))

    elif 'policies' in data or 'policy' in data:
      for row in data.get('policies', [data]):
        policy_rows.append((run, row['policy'], row['pool'], row['mean'], row['variance'], row['sharpe']))

    else:
      util.warn('File "%s" is not a recognised report and will be ignored' % json_path)

  return kl_rows, policy_rows


def summarise(rows, key_cols, val_cols):
  """Median and mean of each value column over rows grouped by key columns."""

  groups = {}

  for row in rows:
    key = tuple(row[i] for i in key_cols)
    groups.setdefault(key, []).append([row[i] for i in val_cols])

  summary = []

  for key in sorted(groups):
    vals = np.array(groups[key], float)
    summary.append((key, len(vals), np.nanmedian(vals, axis=0), np.nanmean(vals, axis=0)))

  return summary


def _table_lines(title, cols, rows, summary, val_names):

  lines = [title, '\t'.join(cols)]

  for row in rows:
    lines.append('\t'.join(util.format_val(x) for x in row))

  for key, n, median, mean in summary:
    label = '/'.join(str(x) for x in key)
    med_txt = ' '.join('%s=%s' % (v, util.format_val(x)) for v, x in zip(val_names, median))
    mean_txt = ' '.join('%s=%s' % (v, util.format_val(x)) for v, x in zip(val_names, mean))
    lines.append('# %s (n=%d) median: %s; mean: %s' % (label, n, med_txt, mean_txt))

  return lines


def report_stats(json_paths, quiet=False, tsv_file_path=None):

  kl_rows, policy_rows = collect_rows(json_paths)
  lines = []

  if kl_rows:
    summary = summarise(kl_rows, (1,), (2, 3))
    lines += _table_lines('KL divergence', KL_COLS, kl_rows, summary, ('mean', 'std_error'))

  if policy_rows:
    summary = summarise(policy_rows, (1, 2), (3, 4, 5))
    lines += _table_lines('Portfolio policies', POLICY_COLS, policy_rows, summary, ('mean', 'variance', 'sharpe'))

  if not lines:
    util.critical('No report rows found in %d files' % len(json_paths))

  if not quiet:
    for line in lines:
      util.info(line, prefix='STATS')

  if tsv_file_path:
    with open(tsv_file_path, 'w') as file_obj:
      file_obj.write('\n'.join(lines) + '\n')

  return kl_rows, policy_rows


def main(argv=None):

  from argparse import ArgumentParser

  if argv is None:
    argv = sys.argv[1:]

  arg_parse = ArgumentParser(prog=PROG_NAME, description=DESCRIPTION,
                             prefix_chars='-', add_help=True)

  arg_parse.add_argument(nargs='+', metavar='JSON_FILE', dest='i',
                         help='Report JSON files (kl_report.json, policy_report.json) from one or more runs')

  arg_parse.add_argument('-o', metavar='TSV_FILE', default=None,
                         help='Output tab-separated table file')

  arg_parse.add_argument('-q', default=False, action='store_true',
                         help='Do not print the table to the terminal')

  args = vars(arg_parse.parse_args(argv))

  for json_path in args['i']:
    is_ok, msg = util.check_regular_file(json_path)

    if not is_ok:
      util.critical(msg, exit_code=4)

  report_stats(args['i'], args['q'], args['o'])

  return 0


if __name__ == '__main__':

  main()
