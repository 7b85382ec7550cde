"""Readers and writers for Matrix Market coordinate files and dense CSV."""
import csv
import math

import numpy as np
import scipy.sparse as sp

from .errors import MatrixFormatError
from .matrix import SparseColumnsMatrix

MM_HEADER = "%%MatrixMarket matrix coordinate real general"
MAX_DIM = 2**31 - 1


def _parse_float(token, line, col):
    try:
        value = float(token)
    except ValueError:
        raise MatrixFormatError(f"cannot parse number {token!r}", line, col) from None
    if not math.isfinite(value):
        raise MatrixFormatError(f"non-finite value {token!r}", line, col)
    return value


def _parse_int(token, line, col):
    try:
        return int(token)
    except ValueError:
        raise MatrixFormatError(f"cannot parse integer {token!r}", line, col) from None


def read_matrix_market(path):
    """Read a ``coordinate real general`` Matrix Market file.

    Entries are 1-based in the file. Repeated coordinates are summed, as
    the format prescribes.
    """
    with open(path, "r") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise MatrixFormatError("empty file", 1, 1)
    header = lines[0].strip().lower().split()
    if header != MM_HEADER.lower().split():
        raise MatrixFormatError(f"unsupported header {lines[0]!r}, expected {MM_HEADER!r}", 1, 1)

    i = 1
    while i < len(lines) and (not lines[i].strip() or lines[i].lstrip().startswith("%")):
        i += 1
    if i == len(lines):
        raise MatrixFormatError("missing size line", i + 1, 1)
    size = lines[i].split()
    if len(size) != 3:
        raise MatrixFormatError("size line must hold 'rows cols nnz'", i + 1, 1)
    d, n, nnz = (_parse_int(tok, i + 1, k + 1) for k, tok in enumerate(size))
    if not (0 < d <= MAX_DIM and 0 < n <= MAX_DIM and nnz >= 0):
        raise MatrixFormatError(f"invalid dimensions {d} x {n} with {nnz} entries", i + 1, 1)

    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz, dtype=np.float64)
    count = 0
    for lineno in range(i + 2, len(lines) + 1):
        text = lines[lineno - 1]
        if not text.strip() or text.lstrip().startswith("%"):
            continue
        parts = text.split()
        if len(parts) != 3:
            raise MatrixFormatError("expected 'row col value'", lineno, 1)
        if count >= nnz:
            raise MatrixFormatError(f"more than the declared {nnz} entries", lineno, 1)
        r = _parse_int(parts[0], lineno, 1)
        c = _parse_int(parts[1], lineno, 2)
        if not 1 <= r <= d:
            raise MatrixFormatError(f"row index {r} outside [1, {d}]", lineno, 1)
        if not 1 <= c <= n:
            raise MatrixFormatError(f"column index {c} outside [1, {n}]", lineno, 2)
        rows[count], cols[count] = r - 1, c - 1
        vals[count] = _parse_float(parts[2], lineno, 3)
        count += 1
    if count != nnz:
        raise MatrixFormatError(f"declared {nnz} entries, found {count}", len(lines), 1)
    return SparseColumnsMatrix(sp.coo_matrix((vals, (rows, cols)), shape=(d, n)))


def write_matrix_market(path, X):
    """Write X as ``coordinate real general``, column by column."""
    coo = X.csc.tocoo()
    order = np.lexsort((coo.row, coo.col))
    with open(path, "w") as fh:
        fh.write(MM_HEADER + "\n")
        fh.write(f"{X.d} {X.n} {coo.nnz}\n")
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{r + 1} {c + 1} {float(v)!r}\n")


def read_csv_dense(path):
    """Read a dense matrix, one row per line, comma separated."""
    rows = []
    with open(path, newline="") as fh:
        for lineno, record in enumerate(csv.reader(fh), start=1):
            if not record or all(not tok.strip() for tok in record):
                continue
            rows.append([_parse_float(tok.strip(), lineno, k + 1) for k, tok in enumerate(record)])
            if len(rows[-1]) != len(rows[0]):
                raise MatrixFormatError(
                    f"row has {len(rows[-1])} fields, expected {len(rows[0])}", lineno, 1
                )
    if not rows:
        raise MatrixFormatError("empty CSV matrix", 1, 1)
    return SparseColumnsMatrix(np.array(rows))


def write_csv_dense(path, X):
    dense = X.toarray() if isinstance(X, SparseColumnsMatrix) else np.asarray(X)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in dense:
            writer.writerow([repr(float(v)) for v in row])


def read_matrix(path):
    """Dispatch on extension: ``.mtx``/``.mm`` -> Matrix Market, anything else -> CSV."""
    if str(path).lower().endswith((".mtx", ".mm")):
        return read_matrix_market(path)
    return read_csv_dense(path)
