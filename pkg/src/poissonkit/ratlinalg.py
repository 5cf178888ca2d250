"""Exact rational linear algebra for the constant matrices of the family.

Everything here runs over ``fractions.Fraction`` so that rank decisions,
kernel bases, and the skew congruence canonical form are exact — no float
thresholds.  Matrices are immutable row-major tuples; all operations return
new matrices.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from .errors import SingularMatrixError, SkewnessError

__all__ = [
    "RatMat", "invert", "kernel_basis", "skew_canonicalize",
    "canonical_skew_pattern",
]

_ZERO = Fraction(0)
_ONE = Fraction(1)


def _as_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, str)):
        return Fraction(value)
    if isinstance(value, float):
        # floats arrive from generated presets; store their exact value
        return Fraction(value)
    raise TypeError(f"cannot build an exact rational from {value!r}")


class RatMat:
    """Immutable dense matrix over exact rationals."""

    __slots__ = ("rows", "cols", "data")

    def __init__(self, data: Tuple[Tuple[Fraction, ...], ...]):
        self.data = data
        self.rows = len(data)
        self.cols = len(data[0]) if data else 0

    @classmethod
    def from_rows(cls, rows: Iterable[Iterable]) -> "RatMat":
        data = tuple(tuple(_as_fraction(v) for v in row) for row in rows)
        if not data:
            raise ValueError("matrix needs at least one row")
        width = len(data[0])
        if width == 0 or any(len(row) != width for row in data):
            raise ValueError("matrix rows must be non-empty and equal length")
        return cls(data)

    @classmethod
    def identity(cls, n: int) -> "RatMat":
        return cls(tuple(tuple(_ONE if i == j else _ZERO for j in range(n))
                         for i in range(n)))

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "RatMat":
        return cls(tuple(tuple(_ZERO for _ in range(cols))
                         for _ in range(rows)))

    def __getitem__(self, key):
        i, j = key
        return self.data[i][j]

    def __eq__(self, other):
        return isinstance(other, RatMat) and self.data == other.data

    def __hash__(self):
        return hash(self.data)

    def __repr__(self):
        body = "; ".join(" ".join(str(v) for v in row) for row in self.data)
        return f"RatMat({self.rows}x{self.cols}: {body})"

    @property
    def is_square(self) -> bool:
        return self.rows == self.cols

    def is_skew(self) -> bool:
        if not self.is_square:
            return False
        return all(self.data[i][j] == -self.data[j][i]
                   for i in range(self.rows) for j in range(i, self.cols))

    def transpose(self) -> "RatMat":
        return RatMat(tuple(tuple(self.data[i][j] for i in range(self.rows))
                            for j in range(self.cols)))

    def __neg__(self) -> "RatMat":
        return RatMat(tuple(tuple(-v for v in row) for row in self.data))

    def __add__(self, other: "RatMat") -> "RatMat":
        if (self.rows, self.cols) != (other.rows, other.cols):
            raise ValueError("shape mismatch in addition")
        return RatMat(tuple(
            tuple(a + b for a, b in zip(ra, rb))
            for ra, rb in zip(self.data, other.data)))

    def __sub__(self, other: "RatMat") -> "RatMat":
        return self + (-other)

    def __matmul__(self, other: "RatMat") -> "RatMat":
        if self.cols != other.rows:
            raise ValueError("shape mismatch in multiplication")
        tdata = other.transpose().data
        return RatMat(tuple(
            tuple(sum((a * b for a, b in zip(row, col)), _ZERO)
                  for col in tdata)
            for row in self.data))

    def matvec(self, vector: Sequence[Fraction]) -> Tuple[Fraction, ...]:
        if len(vector) != self.cols:
            raise ValueError("shape mismatch in matrix-vector product")
        return tuple(sum((a * b for a, b in zip(row, vector)), _ZERO)
                     for row in self.data)

    def to_float(self) -> np.ndarray:
        return np.array([[float(v) for v in row] for row in self.data],
                        dtype=np.float64)

    def entries_str(self) -> List[List[str]]:
        return [[str(v) for v in row] for row in self.data]


def _mutable(m: RatMat) -> List[List[Fraction]]:
    return [list(row) for row in m.data]


def invert(matrix: RatMat) -> RatMat:
    """Exact inverse by Gauss-Jordan elimination.

    Raises :class:`SingularMatrixError` when the matrix is rank deficient.
    """
    if not matrix.is_square:
        raise ValueError("only square matrices can be inverted")
    n = matrix.rows
    a = _mutable(matrix)
    inv = _mutable(RatMat.identity(n))
    for col in range(n):
        pivot_row = next((r for r in range(col, n) if a[r][col] != 0), None)
        if pivot_row is None:
            raise SingularMatrixError(
                f"matrix is singular (no pivot in column {col})")
        a[col], a[pivot_row] = a[pivot_row], a[col]
        inv[col], inv[pivot_row] = inv[pivot_row], inv[col]
        pivot = a[col][col]
        a[col] = [v / pivot for v in a[col]]
        inv[col] = [v / pivot for v in inv[col]]
        for r in range(n):
            if r == col or a[r][col] == 0:
                continue
            factor = a[r][col]
            a[r] = [v - factor * p for v, p in zip(a[r], a[col])]
            inv[r] = [v - factor * p for v, p in zip(inv[r], inv[col])]
    return RatMat.from_rows(inv)


def _rref(matrix: RatMat) -> Tuple[List[List[Fraction]], List[int]]:
    """Reduced row echelon form and pivot column indices (exact)."""
    a = _mutable(matrix)
    rows, cols = matrix.rows, matrix.cols
    pivots: List[int] = []
    row = 0
    for col in range(cols):
        pivot_row = next((r for r in range(row, rows) if a[r][col] != 0), None)
        if pivot_row is None:
            continue
        a[row], a[pivot_row] = a[pivot_row], a[row]
        pivot = a[row][col]
        a[row] = [v / pivot for v in a[row]]
        for r in range(rows):
            if r != row and a[r][col] != 0:
                factor = a[r][col]
                a[r] = [v - factor * p for v, p in zip(a[r], a[row])]
        pivots.append(col)
        row += 1
        if row == rows:
            break
    return a, pivots


def rank(matrix: RatMat) -> int:
    """Exact rank via row reduction."""
    return len(_rref(matrix)[1])


def kernel_basis(matrix: RatMat) -> Tuple[List[Tuple[Fraction, ...]], int]:
    """Exact basis of the right null space of a skew matrix.

    Returns ``(vectors, rank)`` with ``len(vectors) == n - rank``.  The input
    must be exactly skew-symmetric (its rank is then even, which is asserted).
    """
    if not matrix.is_skew():
        raise SkewnessError("kernel_basis requires an exactly skew matrix")
    n = matrix.rows
    rref_rows, pivots = _rref(matrix)
    r = len(pivots)
    assert r % 2 == 0, "skew-symmetric matrices have even rank"
    free_cols = [c for c in range(n) if c not in pivots]
    basis: List[Tuple[Fraction, ...]] = []
    for free in free_cols:
        vec = [_ZERO] * n
        vec[free] = _ONE
        for prow, pcol in enumerate(pivots):
            vec[pcol] = -rref_rows[prow][free]
        basis.append(tuple(vec))
    return basis, r


def canonical_skew_pattern(n: int, r: int) -> RatMat:
    """Block-diagonal pattern: r/2 blocks [[0,1],[-1,0]], then zeros."""
    if r % 2 != 0 or not 0 <= r <= n:
        raise ValueError("rank must be even and between 0 and n")
    rows = [[_ZERO] * n for _ in range(n)]
    for b in range(r // 2):
        rows[2 * b][2 * b + 1] = _ONE
        rows[2 * b + 1][2 * b] = -_ONE
    return RatMat.from_rows(rows)


def skew_canonicalize(matrix: RatMat) -> Tuple[RatMat, int]:
    """Invertible P with P @ S @ P.T in canonical block form, plus rank.

    Skew Gaussian elimination by congruence: hunt a nonzero entry, move it to
    the leading 2x2 block, scale it to 1, clear its two rows/columns against
    the rest, recurse on the trailing submatrix.  Every row operation is
    mirrored by the matching column operation, so the accumulated row
    operations P satisfy P S P^T = A at each stage.
    """
    if not matrix.is_skew():
        raise SkewnessError("skew_canonicalize requires an exactly skew matrix")
    n = matrix.rows
    a = _mutable(matrix)
    p = _mutable(RatMat.identity(n))

    def swap(i, j):
        if i == j:
            return
        a[i], a[j] = a[j], a[i]
        for row in a:
            row[i], row[j] = row[j], row[i]
        p[i], p[j] = p[j], p[i]

    def scale(i, factor):
        a[i] = [v * factor for v in a[i]]
        for row in a:
            row[i] = row[i] * factor
        p[i] = [v * factor for v in p[i]]

    def add_multiple(dst, src, factor):
        # row_dst += factor * row_src, then the mirrored column operation
        a[dst] = [v + factor * s for v, s in zip(a[dst], a[src])]
        for row in a:
            row[dst] = row[dst] + factor * row[src]
        p[dst] = [v + factor * s for v, s in zip(p[dst], p[src])]

    pos = 0
    while pos + 1 < n:
        found = next(((i, j) for i in range(pos, n) for j in range(i + 1, n)
                      if a[i][j] != 0), None)
        if found is None:
            break
        i, j = found
        # pos <= i < j, so the first swap leaves the pivot entry at (pos, j)
        swap(i, pos)
        swap(j, pos + 1)
        pivot = a[pos][pos + 1]
        scale(pos, 1 / pivot)
        for m in range(pos + 2, n):
            if a[m][pos + 1] != 0:
                add_multiple(m, pos, -a[m][pos + 1])
            if a[m][pos] != 0:
                add_multiple(m, pos + 1, a[m][pos])
        pos += 2

    return RatMat.from_rows(p), pos
