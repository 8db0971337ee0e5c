import sys, os

PROG_NAME = 'sde_path_convert'
VERSION = '1.0.0'
DESCRIPTION = 'Convert path set files between the binary (.spg) and CSV (.csv, .csv.gz) formats'

FORMATS = ('SPG', 'CSV', 'CSV.GZ')
AVAIL_FORMATS = ', '.join(FORMATS)
FORMAT_EXTS = {'SPG': '.spg', 'CSV': '.csv', 'CSV.GZ': '.csv.gz'}
TEMP_TAG = '_path_conv_temp'


def _file_root(file_path):

  for ext in ('.csv.gz', '.csv', '.spg'):
    if file_path.lower().endswith(ext):
      return file_path[:-len(ext)]

  return os.path.splitext(file_path)[0]


def convert_paths(path_in, out_fmt, file_out=None, dt=1.0, t0=0.0):
  """
  CSV input has no grid metadata, so dt and t0 are taken from the arguments.
  """

  from sde_core import util, sde_lab

  if not file_out:
    file_out = _file_root(path_in) + FORMAT_EXTS[out_fmt]

  if os.path.abspath(file_out) == os.path.abspath(path_in):
    raise util.ValidationError('Output file would overwrite input "%s"' % path_in)

  util.info(f'Reading {path_in}')
  paths = sde_lab.load_paths(path_in, dt, t0)

  temp_file_out = _file_root(file_out) + TEMP_TAG + FORMAT_EXTS[out_fmt]

  if out_fmt == 'SPG':
    sde_lab.save_paths_binary(paths, temp_file_out)

  else:
    sde_lab.save_paths_csv(paths, temp_file_out)

  os.replace(temp_file_out, file_out)
  util.info('Converted {:,} paths of {:,} steps in {:,} dimensions to file {}'.format(paths.n_paths, paths.grid.n_steps, paths.dim, file_out))

  return file_out


def main(argv=None):

  from argparse import ArgumentParser
  from sde_core import util

  if argv is None:
    argv = sys.argv[1:]

  epilog = 'Binary files keep the time grid; CSV files need --dt and --t0 when read back.'
  arg_parse = ArgumentParser(prog=PROG_NAME, description=DESCRIPTION,
                             epilog=epilog, prefix_chars='-', add_help=True)

  arg_parse.add_argument(nargs=1, metavar='IN_PATH_FILE', dest='i',
                         help='Input path set file (.spg, .csv or .csv.gz)')

  arg_parse.add_argument(nargs=1, metavar='OUT_FORMAT', dest='f',
                         help=f'Output file format. Must be one of {AVAIL_FORMATS}.')

  arg_parse.add_argument('-o', metavar='OUT_FILE', default=None,
                         help='Output file path. Default: input file root with the format extension')

  arg_parse.add_argument('--dt', default=1.0, type=float, metavar='TIME_STEP',
                         help='Grid time step for CSV input. Default: 1.0')

  arg_parse.add_argument('--t0', default=0.0, type=float, metavar='START_TIME',
                         help='Grid origin for CSV input. Default: 0.0')

  args = vars(arg_parse.parse_args(argv))

  path_in = args['i'][0]
  out_fmt = args['f'][0].upper()

  is_ok, msg = util.check_regular_file(path_in)

  if not is_ok:
    util.critical(msg, exit_code=4)

  if out_fmt not in FORMATS:
    util.critical(f'Output format {out_fmt} is not one of {AVAIL_FORMATS}', exit_code=2)

  try:
    convert_paths(path_in, out_fmt, args['o'], args['dt'], args['t0'])

  except util.SdeError as err:
    util.critical(str(err), exit_code=err.exit_code)

  return 0


if __name__ == '__main__':

  sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

  main()
