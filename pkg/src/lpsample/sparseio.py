"""Sparse coordinate matrix loading and synthetic generation.

Two on-disk formats are accepted:

* Matrix Market coordinate files (``%%MatrixMarket matrix coordinate real
  general`` header, ``%`` comments, a ``m n nnz`` size line, then 1-based
  ``row col value`` triplets).
* ``csv-coo``: a ``m,n`` header line followed by 1-based ``row,col,value``
  lines; ``#`` comments and blank lines are skipped.

Duplicate coordinates are summed on load.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .randkit import DistributionSpec

__all__ = ["SparseFormatError", "SparseMatrix", "load_matrix", "synthetic_sparse"]


class SparseFormatError(ValueError):
    """A sparse matrix file failed validation; the message names the line."""


@dataclass
class SparseMatrix:
    """COO triplets with 0-based indices and duplicates already summed."""

    m: int
    n: int
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray

    @property
    def nnz(self) -> int:
        return self.vals.size

    @property
    def density(self) -> float:
        return self.nnz / (self.m * self.n)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.m, self.n))
        np.add.at(out, (self.rows, self.cols), self.vals)
        return out


def _sum_duplicates(m, n, rows, cols, vals) -> SparseMatrix:
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=np.float64)
    flat = rows * n + cols
    order = np.argsort(flat, kind="stable")
    flat = flat[order]
    vals = vals[order]
    unique_flat, starts = np.unique(flat, return_index=True)
    summed = np.add.reduceat(vals, starts) if vals.size else vals
    return SparseMatrix(m, n, unique_flat // n, unique_flat % n, summed)


def _parse_entry(line: str, lineno: int, sep: str, m: int, n: int):
    parts = [tok for tok in (line.split(sep) if sep else line.split())]
    if len(parts) != 3:
        raise SparseFormatError(f"line {lineno}: expected 'row{sep or ' '}col{sep or ' '}value'")
    try:
        i, j = int(parts[0]), int(parts[1])
        v = float(parts[2])
    except ValueError:
        raise SparseFormatError(f"line {lineno}: non-numeric field") from None
    if not 1 <= i <= m:
        raise SparseFormatError(f"line {lineno}: row index {i} outside 1..{m}")
    if not 1 <= j <= n:
        raise SparseFormatError(f"line {lineno}: column index {j} outside 1..{n}")
    if not np.isfinite(v):
        raise SparseFormatError(f"line {lineno}: non-finite value")
    return i - 1, j - 1, v


def _load_matrix_market(lines) -> SparseMatrix:
    header = None
    body_start = 0
    for k, line in enumerate(lines):
        if line.strip():
            header = line.strip()
            body_start = k + 1
            break
    if header is None or not header.startswith("%%MatrixMarket"):
        raise SparseFormatError("line 1: missing %%MatrixMarket header")
    fields = header.lower().split()
    if len(fields) < 5 or fields[1] != "matrix" or fields[2] != "coordinate":
        raise SparseFormatError("line 1: only 'matrix coordinate' files are supported")
    if fields[3] not in ("real", "integer") or fields[4] != "general":
        raise SparseFormatError("line 1: only 'real general' or 'integer general' supported")

    size_line = None
    entries_start = 0
    for k in range(body_start, len(lines)):
        stripped = lines[k].strip()
        if not stripped or stripped.startswith("%"):
            continue
        size_line = (k + 1, stripped)
        entries_start = k + 1
        break
    if size_line is None:
        raise SparseFormatError("truncated file: no size line")
    lineno, text = size_line
    parts = text.split()
    if len(parts) != 3:
        raise SparseFormatError(f"line {lineno}: expected 'm n nnz'")
    try:
        m, n, nnz = (int(tok) for tok in parts)
    except ValueError:
        raise SparseFormatError(f"line {lineno}: non-integer size field") from None
    if m < 1 or n < 1 or nnz < 0:
        raise SparseFormatError(f"line {lineno}: sizes must be positive")

    rows, cols, vals = [], [], []
    for k in range(entries_start, len(lines)):
        stripped = lines[k].strip()
        if not stripped or stripped.startswith("%"):
            continue
        i, j, v = _parse_entry(stripped, k + 1, "", m, n)
        rows.append(i)
        cols.append(j)
        vals.append(v)
    if len(vals) != nnz:
        raise SparseFormatError(f"truncated file: header promised {nnz} entries, found {len(vals)}")
    return _sum_duplicates(m, n, rows, cols, vals)


def _load_csv_coo(lines) -> SparseMatrix:
    dims = None
    entries = []
    for k, raw in enumerate(lines):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if dims is None:
            parts = stripped.split(",")
            if len(parts) != 2:
                raise SparseFormatError(f"line {k + 1}: expected the 'm,n' header line")
            try:
                dims = (int(parts[0]), int(parts[1]))
            except ValueError:
                raise SparseFormatError(f"line {k + 1}: non-integer dimension") from None
            if dims[0] < 1 or dims[1] < 1:
                raise SparseFormatError(f"line {k + 1}: dimensions must be positive")
            continue
        entries.append(_parse_entry(stripped, k + 1, ",", dims[0], dims[1]))
    if dims is None:
        raise SparseFormatError("truncated file: no dimension header")
    rows = [e[0] for e in entries]
    cols = [e[1] for e in entries]
    vals = [e[2] for e in entries]
    return _sum_duplicates(dims[0], dims[1], rows, cols, vals)


def load_matrix(path, fmt: str = "auto") -> SparseMatrix:
    """Load a sparse matrix file, summing duplicate coordinates."""
    with open(path, "r", encoding="utf-8") as handle:
        lines = handle.read().splitlines()
    if fmt == "auto":
        first = next((ln for ln in lines if ln.strip()), "")
        fmt = "matrix-market" if first.startswith("%%MatrixMarket") else "csv-coo"
    if fmt == "matrix-market":
        return _load_matrix_market(lines)
    if fmt == "csv-coo":
        return _load_csv_coo(lines)
    raise ValueError(f"unknown format {fmt!r}")


def synthetic_sparse(
    m: int, n: int, density: float, spec: DistributionSpec, rng: np.random.Generator
) -> SparseMatrix:
    """Bernoulli(density) mask with values drawn from ``spec``."""
    if not 0.0 < density <= 1.0:
        raise ValueError("density must lie in (0, 1]")
    mask = rng.random((m, n)) < density
    rows, cols = np.nonzero(mask)
    vals = spec.sample(rng, rows.size)
    return SparseMatrix(m, n, rows.astype(np.int64), cols.astype(np.int64), np.asarray(vals))
