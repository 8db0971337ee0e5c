from tools.path_convert import *

import os
import numpy as np
import pytest

from sde_core import sde_lab, util


def _paths():
    spec = sde_lab.OuSpec(1.0, 1.2, 0.3, 1.5)
    return sde_lab.simulate_ou(spec, sde_lab.TimeGrid(0.5, 0.25, 4), 6, 1)


def test_help():
    with pytest.raises(SystemExit) as e:
        main(["--help"])

    assert e.value.code == 0


def test_binary_to_csv_and_back(tmpdir):
    paths = _paths()
    spg_file = str(tmpdir.join("ou.spg"))
    sde_lab.save_paths_binary(paths, spg_file)

    assert main([spg_file, 'csv.gz']) == 0
    csv_file = str(tmpdir.join("ou.csv.gz"))
    assert os.path.exists(csv_file)

    back_file = str(tmpdir.join("back.spg"))
    assert convert_paths(csv_file, 'SPG', back_file, dt=0.25, t0=0.5) == back_file

    back = sde_lab.load_paths(back_file)
    assert back.grid == paths.grid
    assert np.array_equal(back.data, paths.data)
    assert not any(TEMP_TAG in name for name in os.listdir(str(tmpdir)))


def test_refuses_overwrite(tmpdir):
    csv_file = str(tmpdir.join("ou.csv"))
    sde_lab.save_paths_csv(_paths(), csv_file)

    with pytest.raises(util.ValidationError):
        convert_paths(csv_file, 'CSV')


def test_bad_arguments(tmpdir):
    with pytest.raises(SystemExit) as e:
        main([str(tmpdir.join("missing.spg")), 'CSV'])

    assert e.value.code == 4

    spg_file = str(tmpdir.join("ou.spg"))
    sde_lab.save_paths_binary(_paths(), spg_file)

    with pytest.raises(SystemExit) as e:
        main([spg_file, 'XLSX'])

    assert e.value.code == 2
