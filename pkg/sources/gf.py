"""
Finite-field arithmetic and linear algebra over F_q.

Elements are identified by their integer index in the polynomial basis:
for q = p^e the index of c_{e-1} x^{e-1} + ... + c_0 is sum_k c_k p^k.
Arithmetic and elimination are delegated to the galois package; this module
fixes the field representation (lowest-lexicographic irreducible modulus by
default) and the empty-matrix conventions the rank-based oracles rely on.
"""

import itertools
from functools import lru_cache
from typing import Iterator, List, Sequence

import numpy as np
import galois

from sources.errors import PreconditionError, FieldMismatchError
from sources.logger import Logger

logger = Logger("gf.log")

MAX_EXTENSION_DEGREE = 16

@lru_cache(maxsize=None)
def _field_class(p: int, e: int, modulus: tuple):
    if e == 1:
        return galois.GF(p)
    poly = galois.Poly(list(modulus), field=galois.GF(p))
    return galois.GF(p ** e, irreducible_poly=poly)

class FieldParams:
    """
    Parameters of F_q, q = p^e.
    The modulus is a coefficient list, highest degree first, over F_p (e > 1 only).
    """
    def __init__(self, q: int, modulus: Sequence[int] | None = None):
        if q < 2 or not galois.is_prime_power(q):
            raise PreconditionError(f"q={q} is not a prime power")
        primes, exponents = galois.factors(q)
        self.q = int(q)
        self.p = int(primes[0])
        self.e = int(exponents[0])
        if self.e > MAX_EXTENSION_DEGREE:
            raise PreconditionError(f"extension degree {self.e} > {MAX_EXTENSION_DEGREE} is not supported")
        self.modulus = None
        if self.e > 1:
            self.modulus = self.resolve_modulus(modulus)
        elif modulus is not None:
            raise PreconditionError("a modulus is only meaningful for extension fields (e > 1)")
        self.GF = _field_class(self.p, self.e, self.modulus or ())

    def resolve_modulus(self, modulus: Sequence[int] | None) -> tuple:
        """Lowest-lexicographic monic irreducible by default, validated otherwise."""
        if modulus is None:
            poly = galois.irreducible_poly(self.p, self.e, method="min")
            return tuple(int(c) for c in poly.coeffs)
        coeffs = [int(c) for c in modulus]
        if len(coeffs) != self.e + 1 or any(c < 0 or c >= self.p for c in coeffs):
            raise PreconditionError(f"modulus {coeffs} is not a degree-{self.e} polynomial over F_{self.p}")
        poly = galois.Poly(coeffs, field=galois.GF(self.p))
        if not poly.is_irreducible():
            raise PreconditionError(f"modulus {coeffs} is reducible over F_{self.p}")
        return tuple(coeffs)

    def element(self, index: int) -> "FieldElement":
        return FieldElement(index, self)

    @property
    def zero(self) -> "FieldElement":
        return FieldElement(0, self)

    @property
    def one(self) -> "FieldElement":
        return FieldElement(1, self)

    def elements(self) -> List["FieldElement"]:
        return [FieldElement(i, self) for i in range(self.q)]

    def __eq__(self, other):
        return isinstance(other, FieldParams) and (self.q, self.modulus) == (other.q, other.modulus)

    def __hash__(self):
        return hash((self.q, self.modulus))

    def __repr__(self):
        if self.modulus is None:
            return f"FieldParams(q={self.q})"
        return f"FieldParams(q={self.q}, modulus={list(self.modulus)})"

def _check_same_field(a: FieldParams, b: FieldParams) -> None:
    if a != b:
        raise FieldMismatchError(f"operands live in different fields: {a} vs {b}")

class FieldElement:
    """Immutable element of F_q identified by its index in [0, q)."""
    __slots__ = ("index", "params")

    def __init__(self, index: int, params: FieldParams):
        if not 0 <= int(index) < params.q:
            raise PreconditionError(f"index {index} outside [0, {params.q})")
        object.__setattr__(self, "index", int(index))
        object.__setattr__(self, "params", params)

    def __setattr__(self, name, value):
        raise AttributeError("FieldElement is immutable")

    def _wrap(self):
        return self.params.GF(self.index)

    def _binary(self, other: "FieldElement", op) -> "FieldElement":
        _check_same_field(self.params, other.params)
        return FieldElement(int(op(self._wrap(), other._wrap())), self.params)

    def __add__(self, other):
        return self._binary(other, lambda a, b: a + b)

    def __sub__(self, other):
        return self._binary(other, lambda a, b: a - b)

    def __mul__(self, other):
        return self._binary(other, lambda a, b: a * b)

    def __truediv__(self, other):
        _check_same_field(self.params, other.params)
        if other.index == 0:
            raise ZeroDivisionError("division by the zero element")
        return self._binary(other, lambda a, b: a / b)

    def __neg__(self):
        return FieldElement(int(-self._wrap()), self.params)

    def inv(self) -> "FieldElement":
        if self.index == 0:
            raise ZeroDivisionError("the zero element has no inverse")
        return FieldElement(int(np.reciprocal(self._wrap())), self.params)

    def __eq__(self, other):
        return isinstance(other, FieldElement) and self.index == other.index and self.params == other.params

    def __hash__(self):
        return hash((self.index, self.params))

    def __repr__(self):
        return f"F{self.params.q}({self.index})"

def add(a: FieldElement, b: FieldElement) -> FieldElement:
    return a + b

def sub(a: FieldElement, b: FieldElement) -> FieldElement:
    return a - b

def mul(a: FieldElement, b: FieldElement) -> FieldElement:
    return a * b

def div(a: FieldElement, b: FieldElement) -> FieldElement:
    return a / b

def inv(a: FieldElement) -> FieldElement:
    return a.inv()

class Matrix:
    """
    rows x cols matrix over F_q backed by a galois FieldArray.
    Zero-row and zero-column matrices are allowed.
    """
    def __init__(self, params: FieldParams, data):
        array = params.GF(np.asarray(data, dtype=np.int64).reshape(np.shape(data)))
        if array.ndim != 2:
            raise PreconditionError(f"matrix data must be 2-D, got shape {array.shape}")
        self.params = params
        self.data = array

    @classmethod
    def from_rows(cls, params: FieldParams, rows: Sequence[Sequence[int]]) -> "Matrix":
        rows = [list(r) for r in rows]
        width = len(rows[0]) if rows else 0
        if any(len(r) != width for r in rows):
            raise PreconditionError("ragged rows")
        return cls(params, np.array(rows, dtype=np.int64).reshape(len(rows), width))

    @classmethod
    def zeros(cls, params: FieldParams, rows: int, cols: int) -> "Matrix":
        return cls(params, np.zeros((rows, cols), dtype=np.int64))

    @classmethod
    def identity(cls, params: FieldParams, size: int) -> "Matrix":
        return cls(params, np.eye(size, dtype=np.int64))

    @property
    def rows(self) -> int:
        return int(self.data.shape[0])

    @property
    def cols(self) -> int:
        return int(self.data.shape[1])

    @property
    def entries(self) -> List[FieldElement]:
        """Row-major list of FieldElement."""
        return [FieldElement(int(v), self.params) for v in np.asarray(self.data).ravel()]

    def to_lists(self) -> List[List[int]]:
        return np.asarray(self.data, dtype=np.int64).tolist()

    def column(self, c: int) -> np.ndarray:
        return np.asarray(self.data[:, c], dtype=np.int64)

    def submatrix(self, rows: Sequence[int] | None = None, cols: Sequence[int] | None = None) -> "Matrix":
        row_idx = list(range(self.rows)) if rows is None else list(rows)
        col_idx = list(range(self.cols)) if cols is None else list(cols)
        block = np.asarray(self.data, dtype=np.int64)[np.ix_(row_idx, col_idx)] if row_idx and col_idx \
            else np.zeros((len(row_idx), len(col_idx)), dtype=np.int64)
        return Matrix(self.params, block)

    def __eq__(self, other):
        return isinstance(other, Matrix) and self.params == other.params \
            and self.data.shape == other.data.shape and bool(np.all(self.data == other.data))

    def __repr__(self):
        return f"Matrix(q={self.params.q}, {self.to_lists()})"

def transpose(M: Matrix) -> Matrix:
    return Matrix(M.params, np.asarray(M.data, dtype=np.int64).T)

def hstack(A: Matrix, B: Matrix) -> Matrix:
    _check_same_field(A.params, B.params)
    if A.rows != B.rows:
        raise PreconditionError(f"row mismatch {A.rows} vs {B.rows}")
    return Matrix(A.params, np.hstack([np.asarray(A.data, dtype=np.int64), np.asarray(B.data, dtype=np.int64)]))

def rank(M: Matrix) -> int:
    """Rank over F_q; empty matrices have rank 0."""
    if M.rows == 0 or M.cols == 0:
        return 0
    return int(np.linalg.matrix_rank(M.data))

def _as_column(v, params: FieldParams) -> np.ndarray:
    values = []
    for entry in v:
        if isinstance(entry, FieldElement):
            _check_same_field(entry.params, params)
            values.append(entry.index)
        else:
            values.append(int(entry))
    return np.array(values, dtype=np.int64).reshape(len(values), 1)

def in_colspace(v, M: Matrix) -> bool:
    """True iff M w = v has a solution, i.e. rank([v M]) = rank(M)."""
    column = _as_column(v, M.params)
    if column.shape[0] != M.rows:
        raise PreconditionError(f"vector length {column.shape[0]} != matrix rows {M.rows}")
    if M.cols == 0:
        return not np.any(column)
    return rank(hstack(Matrix(M.params, column), M)) == rank(M)

def sample_full_rank(rows: int, cols: int, params: FieldParams, rng: np.random.Generator) -> Matrix:
    """
    Uniform full-rank rows x cols matrix by rejection sampling of uniform matrices.
    The acceptance probability is at least prod_l (1 - q^-l) > 0.288.
    """
    if rows > cols:
        raise PreconditionError(f"full row rank needs rows <= cols, got {rows} x {cols}")
    if rows == 0:
        return Matrix.zeros(params, 0, cols)
    while True:
        candidate = params.GF.Random((rows, cols), seed=rng)
        if int(np.linalg.matrix_rank(candidate)) == rows:
            return Matrix(params, np.asarray(candidate, dtype=np.int64))

def all_full_rank(rows: int, cols: int, params: FieldParams) -> Iterator[Matrix]:
    """Exhaustive enumeration of full-row-rank matrices (test oracle, tiny sizes only)."""
    for values in itertools.product(range(params.q), repeat=rows * cols):
        candidate = Matrix(params, np.array(values, dtype=np.int64).reshape(rows, cols))
        if rank(candidate) == rows:
            yield candidate

def kronecker(A: Matrix, B: Matrix) -> Matrix:
    """Kronecker product over F_q."""
    _check_same_field(A.params, B.params)
    GF = A.params.GF
    out = GF.Zeros((A.rows * B.rows, A.cols * B.cols))
    for i in range(A.rows):
        for j in range(A.cols):
            out[i * B.rows:(i + 1) * B.rows, j * B.cols:(j + 1) * B.cols] = A.data[i, j] * B.data
    return Matrix(A.params, np.asarray(out, dtype=np.int64))
