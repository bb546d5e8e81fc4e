"Utilities for reading and writing configs, manifests, matrices and vectors"
import csv
import json
import os

import numpy as np
import scipy.io
import scipy.sparse
import yaml

from .exceptions import DataIOError
from .sparse import csr_from_arrays

MTX_PRECISION = 17


def read_yaml(path):
    """
    Return the contents of a yaml file.
    """
    try:
        with open(path, 'r') as f:
            return yaml.safe_load(f)
    except (IOError, OSError, yaml.YAMLError) as e:
        raise DataIOError("could not read yaml file %s: %s" % (path, e))


def read_json(path):
    """
    Return the contents of a json file, assuming utf-8 encoding
    """
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except (IOError, OSError, ValueError) as e:
        raise DataIOError("could not read json file %s: %s" % (path, e))


def json_string(content, compact=False):
    """
    Write `content` as json. Keys are sorted so equal content always gives
    equal bytes.
    """
    indent = (None if compact else 2)
    return json.dumps(content, indent=indent, sort_keys=True)


def write_json(content, path, compact=False, overwrite=False):
    """
    Write `content` to a json file at `path` with utf-8 encoding.

    Unless `overwrite` is True the file must not currently exist.
    If `compact` is True, we write with no whitespace, otherwise we use json
    pretty printing, with indent of 2.

    """
    _raise_if_exists(path, overwrite)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(json_string(content, compact))
        f.write('\n')


def write_content(content, path, overwrite=False):
    """
    Write string content to a file at `path`.
    """
    _raise_if_exists(path, overwrite)
    with open(path, 'w') as f:
        f.write(content)


def write_figure(fig, path, overwrite=False, **savefig_kwargs):
    """
    Save a matplotlib figure to `path`; the format follows the suffix
    unless `format` is passed through `savefig_kwargs`.
    """
    _raise_if_exists(path, overwrite)
    try:
        fig.savefig(path, **savefig_kwargs)
    except (IOError, OSError, ValueError) as e:
        raise DataIOError("could not write figure %s: %s" % (path, e))


def ensure_directory(path):
    "Create `path` (and parents) if needed and return it."
    os.makedirs(path, exist_ok=True)
    return path


# matrices and vectors ------------------

def write_matrix_market(A, path, overwrite=False):
    """
    Write a `CsrMatrix` in Matrix Market coordinate format
    (`%%MatrixMarket matrix coordinate real general`, 1-based on disk).

    Stored zeros are written, so the pattern survives a round trip.
    """
    _raise_if_exists(path, overwrite)
    coo = scipy.sparse.coo_matrix(
        (A.values, (A.row_idx, A.col_idx)), shape=(A.n, A.n))
    if not str(path).endswith('.mtx'):
        raise DataIOError("matrix market files must end in .mtx: %s" % path)
    scipy.io.mmwrite(str(path), coo, field='real', precision=MTX_PRECISION,
                     symmetry='general')


def read_matrix_market(path):
    """
    Read a square Matrix Market coordinate file into a `CsrMatrix`.
    """
    try:
        coo = scipy.sparse.coo_matrix(scipy.io.mmread(path))
    except (IOError, OSError, ValueError) as e:
        raise DataIOError("could not read matrix market file %s: %s"
                          % (path, e))
    if coo.shape[0] != coo.shape[1]:
        raise DataIOError("matrix in %s is not square: shape %r"
                          % (path, coo.shape))
    return csr_from_arrays(coo.row, coo.col, coo.data, coo.shape[0])


def write_vector(v, path, overwrite=False):
    """
    Write a vector as text, one value per line, using the shortest
    representation that reads back to the same float.
    """
    _raise_if_exists(path, overwrite)
    with open(path, 'w') as f:
        for value in np.asarray(v, dtype=np.float64).tolist():
            f.write('%r\n' % value)


def read_vector(path):
    try:
        with open(path, 'r') as f:
            return np.array([float(line) for line in f if line.strip()])
    except (IOError, OSError, ValueError) as e:
        raise DataIOError("could not read vector file %s: %s" % (path, e))


def write_csv(header, rows, path, overwrite=False):
    """
    Write `rows` (iterables aligned with `header`) as csv. `None` cells are
    written empty; floats use their round-trip representation.
    """
    _raise_if_exists(path, overwrite)
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_csv_cell(cell) for cell in row])


def _csv_cell(cell):
    if cell is None:
        return ''
    if isinstance(cell, (float, np.floating)):
        return repr(float(cell))
    if isinstance(cell, (bool, np.bool_)):
        return 'true' if cell else 'false'
    return cell


# utilities ------------------

def _raise_if_exists(path, overwrite=False):
    if not overwrite and os.path.exists(path):
        raise DataIOError(
            "refusing to overwrite existing file %s" % path
        )
