"""Sparse 0/1 routing matrices with row- and column-oriented kernels.

A routing matrix has one row per link and one column per demand; entry
(i, j) is 1 when demand j crosses link i.  Values are implicit ones, so
only the index structure is stored -- in both row-major and column-major
order, because demand-space (column) methods and link-space (row) methods
need opposite access patterns.  Matrices are immutable after construction.
"""

from dataclasses import dataclass

import numpy as np
from numba import njit


class PatternFormatError(ValueError):
    """Malformed pattern file.  ``line`` is the 1-based offending line."""

    def __init__(self, message, line=None):
        if line is not None:
            message = "line %d: %s" % (line, message)
        super().__init__(message)
        self.line = line


@njit(cache=True)
def _gather_sum(indptr, indices, v, out):
    # out[i] = sum of v over slot i's index list; left-to-right order is
    # fixed so results are bitwise reproducible.
    for i in range(out.shape[0]):
        acc = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            acc += v[indices[p]]
        out[i] = acc


class RouteMatrix:
    """m x n matrix of 0/1 entries stored as sorted row and column indices."""

    def __init__(self, m, n, rows, cols, _skip_checks=False):
        m = int(m)
        n = int(n)
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        if m < 1 or n < 1:
            raise ValueError("matrix must have at least one row and one column")
        if rows.shape != cols.shape or rows.ndim != 1:
            raise ValueError("rows and cols must be 1-d arrays of equal length")
        if not _skip_checks and rows.size:
            if rows.min() < 0 or rows.max() >= m:
                raise ValueError("row index out of range")
            if cols.min() < 0 or cols.max() >= n:
                raise ValueError("column index out of range")
        self.m = m
        self.n = n
        self.nnz = rows.size

        order = np.lexsort((cols, rows))
        r_sorted = rows[order]
        c_sorted = cols[order]
        if not _skip_checks and rows.size > 1:
            dup = (r_sorted[1:] == r_sorted[:-1]) & (c_sorted[1:] == c_sorted[:-1])
            if dup.any():
                k = int(np.flatnonzero(dup)[0])
                raise ValueError(
                    "duplicate entry (%d, %d)" % (r_sorted[k], c_sorted[k])
                )
        self.row_ptr = np.zeros(m + 1, dtype=np.int64)
        np.cumsum(np.bincount(r_sorted, minlength=m), out=self.row_ptr[1:])
        self.row_cols = c_sorted

        order = np.lexsort((rows, cols))
        self.col_ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(cols[order], minlength=n), out=self.col_ptr[1:])
        self.col_rows = rows[order]

        for a in (self.row_ptr, self.row_cols, self.col_ptr, self.col_rows):
            a.setflags(write=False)

    @classmethod
    def from_dense(cls, dense):
        dense = np.asarray(dense)
        if not np.isin(dense, (0, 1)).all():
            raise ValueError("entries must be 0 or 1")
        rows, cols = np.nonzero(dense)
        return cls(dense.shape[0], dense.shape[1], rows, cols)

    @classmethod
    def identity(cls, n):
        idx = np.arange(n)
        return cls(n, n, idx, idx)

    def to_dense(self):
        out = np.zeros((self.m, self.n))
        for i in range(self.m):
            out[i, self.row_cols_of(i)] = 1.0
        return out

    def entries(self):
        """All (row, col) pairs in row-major order, shape (nnz, 2)."""
        rows = np.repeat(np.arange(self.m), np.diff(self.row_ptr))
        return np.column_stack([rows, self.row_cols])

    def row_cols_of(self, i):
        return self.row_cols[self.row_ptr[i]:self.row_ptr[i + 1]]

    def col_rows_of(self, k):
        return self.col_rows[self.col_ptr[k]:self.col_ptr[k + 1]]

    @property
    def row_nnz(self):
        return np.diff(self.row_ptr)

    @property
    def col_nnz(self):
        return np.diff(self.col_ptr)

    def matvec(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n,):
            raise ValueError("expected vector of length %d, got %s" % (self.n, x.shape))
        out = np.empty(self.m)
        _gather_sum(self.row_ptr, self.row_cols, x, out)
        return out

    def rmatvec(self, y):
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (self.m,):
            raise ValueError("expected vector of length %d, got %s" % (self.m, y.shape))
        out = np.empty(self.n)
        _gather_sum(self.col_ptr, self.col_rows, y, out)
        return out

    def column_axpy(self, k, t, r):
        """r += t * (column k), touching only that column's rows."""
        if not 0 <= k < self.n:
            raise IndexError("column %d out of range" % k)
        if r.shape != (self.m,):
            raise ValueError("expected vector of length %d" % self.m)
        if t != 0.0:
            r[self.col_rows_of(k)] += t


@dataclass(frozen=True)
class MatrixStats:
    """Structural statistics used to size solver step lengths.

    ``sigma_max_est`` estimates the largest eigenvalue of the Gram matrix
    A^T A by power iteration; ``trace_bound`` (= nnz, since entries are
    0/1) always dominates it and is the safe fallback.
    """

    nnz: int
    s: float            # nnz / n, average column density
    s_tilde: float      # nnz / m, average row density
    max_col_sq: int     # max column nnz = max squared column norm
    trace_bound: int    # nnz, upper bound on the top Gram eigenvalue
    sigma_max_est: float


def stats(A, power_iters=100, seed=0):
    """Exact counts plus a seeded power-iteration eigenvalue estimate."""
    nnz = A.nnz
    max_col_sq = int(A.col_nnz.max()) if A.n else 0
    sigma = 0.0
    if nnz:
        rng = np.random.Generator(np.random.PCG64(seed))
        v = rng.standard_normal(A.n)
        v /= np.linalg.norm(v)
        for _ in range(power_iters):
            w = A.rmatvec(A.matvec(v))
            nw = np.linalg.norm(w)
            if nw == 0.0:
                break
            v = w / nw
        sigma = float(np.linalg.norm(A.matvec(v)) ** 2 / (np.linalg.norm(v) ** 2))
    return MatrixStats(
        nnz=nnz,
        s=nnz / A.n,
        s_tilde=nnz / A.m,
        max_col_sq=max_col_sq,
        trace_bound=nnz,
        sigma_max_est=sigma,
    )


_HEADER = "%%MatrixMarket matrix coordinate pattern general"


def store_pattern(A, path):
    """Write the canonical coordinate-pattern form (1-based, row-major)."""
    with open(path, "w") as fh:
        fh.write(_HEADER + "\n")
        fh.write("%d %d %d\n" % (A.m, A.n, A.nnz))
        for i, j in A.entries():
            fh.write("%d %d\n" % (i + 1, j + 1))


def load_pattern(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise PatternFormatError("empty file", line=1)
    header = lines[0].split()
    want = _HEADER.split()
    if len(header) != len(want) or header[0] != want[0] or [
        t.lower() for t in header[1:]
    ] != want[1:]:
        raise PatternFormatError("expected header %r" % _HEADER, line=1)

    pos = 1
    while pos < len(lines) and lines[pos].lstrip().startswith("%"):
        pos += 1
    if pos >= len(lines):
        raise PatternFormatError("missing size line", line=len(lines))
    parts = lines[pos].split()
    if len(parts) != 3:
        raise PatternFormatError("size line needs 'm n nnz'", line=pos + 1)
    try:
        m, n, nnz = (int(p) for p in parts)
    except ValueError:
        raise PatternFormatError("size line needs integers", line=pos + 1) from None
    if m < 1 or n < 1 or nnz < 0:
        raise PatternFormatError("invalid sizes %d %d %d" % (m, n, nnz), line=pos + 1)

    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    k = 0
    for lineno in range(pos + 1, len(lines)):
        text = lines[lineno].strip()
        if not text:
            continue
        if k >= nnz:
            raise PatternFormatError(
                "more than the declared %d entries" % nnz, line=lineno + 1
            )
        parts = text.split()
        if len(parts) != 2:
            raise PatternFormatError("entry line needs 'i j'", line=lineno + 1)
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError:
            raise PatternFormatError(
                "entry line needs integers", line=lineno + 1
            ) from None
        if not (1 <= i <= m and 1 <= j <= n):
            raise PatternFormatError(
                "entry (%d, %d) outside %dx%d" % (i, j, m, n), line=lineno + 1
            )
        rows[k] = i - 1
        cols[k] = j - 1
        k += 1
    if k != nnz:
        raise PatternFormatError(
            "header declares %d entries, found %d" % (nnz, k), line=len(lines)
        )
    try:
        return RouteMatrix(m, n, rows, cols)
    except ValueError as exc:
        raise PatternFormatError(str(exc)) from None
