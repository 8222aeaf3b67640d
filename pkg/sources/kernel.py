"""
Fixed-kernel analysis on erasure channels.

Codewords are c = u G for an invertible m x m kernel G over F_q. Under
successive cancellation, input symbol i is erased given the correctly received
positions S iff e_1 is outside the column space of G_S restricted to rows i..m-1.
Equivalently: reduce the columns of G_S to an echelon basis whose vectors have
distinct last nonzero rows (pivots); symbol i is recovered iff i is a pivot.
Column positions and rows are 0-based throughout.
"""

import csv
import math
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np
from scipy.stats import binom

from sources.config import get_int, default_workers
from sources.errors import PreconditionError, CapExceededError, InvariantError
from sources.gf import FieldParams, Matrix, rank, in_colspace, kronecker
from sources.logger import Logger
from sources.lyapunov import PowerFn, lambda_sup
from sources.operators import FixedOperator
from sources.schemas import LambdaReport, MonteCarloEstimate, RsCandidateReport
from sources.utility import timer_decorator

logger = Logger("kernel.log")

SPLIT_COLUMNS = 4

class Kernel:
    """Invertible m x m matrix over F_q."""
    def __init__(self, G: Matrix, name: str | None = None):
        if G.rows != G.cols:
            raise PreconditionError(f"kernel must be square, got {G.rows} x {G.cols}")
        if rank(G) != G.rows:
            raise PreconditionError(f"kernel {name or '(unnamed)'} is not invertible over F_{G.params.q}")
        self.G = G
        self.name = name

    @property
    def m(self) -> int:
        return self.G.rows

    @property
    def q(self) -> int:
        return self.G.params.q

    @property
    def params(self) -> FieldParams:
        return self.G.params

    def __repr__(self):
        return f"Kernel(m={self.m}, q={self.q}, name={self.name})"

class ProfilePolynomial:
    """
    Exact erasure polynomials of a kernel: a[i][d] counts the received sets S with
    |S| = d that leave symbol i erased, so phi_i(x) = sum_d a[i][d] x^(m-d) (1-x)^d.
    """
    def __init__(self, m: int, q: int, coeffs: List[List[int]]):
        self.m = m
        self.q = q
        self.coeffs = [list(map(int, row)) for row in coeffs]
        self.validate()
        binoms = np.array([math.comb(m, d) for d in range(m + 1)], dtype=float)
        self.weights = np.array(self.coeffs, dtype=float) / binoms[np.newaxis, :]

    def validate(self) -> None:
        if len(self.coeffs) != self.m or any(len(row) != self.m + 1 for row in self.coeffs):
            raise InvariantError(f"coefficient table must be {self.m} x {self.m + 1}")
        for i, row in enumerate(self.coeffs):
            if row[0] != 1 or row[self.m] != 0:
                raise InvariantError(f"row {i}: a[i][0] must be 1 and a[i][m] must be 0, got {row}")
            for d, value in enumerate(row):
                if not 0 <= value <= math.comb(self.m, d):
                    raise InvariantError(f"a[{i}][{d}] = {value} outside [0, C({self.m},{d})]")

    def evaluate_all(self, x) -> np.ndarray:
        """All phi_i at x; shape (m,) + shape(x)."""
        x = np.asarray(x, dtype=float)
        d = np.arange(self.m + 1).reshape((self.m + 1,) + (1,) * x.ndim)
        pmf = binom.pmf(d, self.m, 1.0 - x[np.newaxis, ...])
        return np.tensordot(self.weights, pmf, axes=([1], [0]))

    def evaluate(self, i: int, x):
        value = self.evaluate_all(x)[i]
        return float(value) if np.ndim(value) == 0 else value

    def evaluate_exact(self, i: int, x) -> Fraction:
        x = Fraction(x)
        return sum((a * x ** (self.m - d) * (1 - x) ** d for d, a in enumerate(self.coeffs[i])), Fraction(0))

    def mean_identity_holds(self) -> bool:
        """sum_i a[i][d] = (m - d) C(m, d), i.e. (1/m) sum_i phi_i(x) = x as polynomials."""
        return all(sum(row[d] for row in self.coeffs) == (self.m - d) * math.comb(self.m, d)
                   for d in range(self.m + 1))

    def multiset(self) -> List[Tuple[int, ...]]:
        """Row-order independent form used to compare kernels."""
        return sorted(tuple(row) for row in self.coeffs)

    def to_csv(self, handle) -> None:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["i", "d", "a_id"])
        for i, row in enumerate(self.coeffs):
            for d, value in enumerate(row):
                writer.writerow([i, d, value])

    def __eq__(self, other):
        return isinstance(other, ProfilePolynomial) and (self.m, self.q, self.coeffs) == (other.m, other.q, other.coeffs)

    def __repr__(self):
        return f"ProfilePolynomial(m={self.m}, q={self.q}, coeffs={self.coeffs})"

def _check_subset(m: int, S: Iterable[int]) -> List[int]:
    S = sorted(set(int(c) for c in S))
    if S and (S[0] < 0 or S[-1] >= m):
        raise PreconditionError(f"subset {S} not within [0, {m})")
    return S

def erasure_indicator(K: Kernel, i: int, S: Iterable[int]) -> int:
    """1 if symbol i stays erased when exactly the positions in S are received."""
    if not 0 <= i < K.m:
        raise PreconditionError(f"symbol index {i} outside [0, {K.m})")
    S = _check_subset(K.m, S)
    lower = K.G.submatrix(rows=range(i, K.m), cols=S)
    e1 = [1] + [0] * (K.m - i - 1)
    return 0 if in_colspace(e1, lower) else 1

def field_tables(params: FieldParams):
    """Addition, negation, multiplication and inverse tables as nested lists of indices."""
    GF = params.GF
    elements = GF(np.arange(params.q))
    sub = np.asarray(elements[:, np.newaxis] - elements[np.newaxis, :], dtype=np.int64).tolist()
    mul = np.asarray(elements[:, np.newaxis] * elements[np.newaxis, :], dtype=np.int64).tolist()
    inv = [0] + [int(np.reciprocal(GF(k))) for k in range(1, params.q)]
    return sub, mul, inv

def _insert_binary(basis: Dict[int, int], v: int):
    while v:
        pivot = v.bit_length() - 1
        if pivot not in basis:
            extended = dict(basis)
            extended[pivot] = v
            return extended, pivot
        v ^= basis[pivot]
    return basis, None

def _insert_general(basis: Dict[int, list], v: list, tables):
    sub, mul, inv = tables
    v = list(v)
    while True:
        nonzero = [r for r, value in enumerate(v) if value]
        if not nonzero:
            return basis, None
        pivot = nonzero[-1]
        if pivot not in basis:
            extended = dict(basis)
            extended[pivot] = v
            return extended, pivot
        b = basis[pivot]
        factor = mul[v[pivot]][inv[b[pivot]]]
        v = [sub[a][mul[factor][c]] for a, c in zip(v, b)]

def insert_column(basis, v, tables=None):
    """
    Reduce v against an echelon basis keyed by last nonzero row. Returns the
    (possibly extended) basis and the new pivot, or None when v is dependent.
    Binary vectors are int bitmasks (bit r = row r) and use tables=None.
    """
    if tables is None:
        return _insert_binary(basis, v)
    return _insert_general(basis, v, tables)

def _count_branch(columns: list, m: int, tables, prefix: int, split: int):
    """
    Count (size, pivot set) over all subsets whose membership among the first
    `split` columns is fixed by the bitmask `prefix`.
    """
    insert = lambda basis, v: insert_column(basis, v, tables)
    full = (1 << m) - 1
    counts = [defaultdict(int) for _ in range(m + 1)]
    basis, pivots, size = {}, 0, 0
    for c in range(split):
        if prefix >> c & 1:
            basis, pivot = insert(basis, columns[c])
            size += 1
            if pivot is not None:
                pivots |= 1 << pivot

    def visit(c: int, d: int, basis, pivots: int) -> None:
        if pivots == full:
            remaining = m - c
            for t in range(remaining + 1):
                counts[d + t][full] += math.comb(remaining, t)
            return
        if c == m:
            counts[d][pivots] += 1
            return
        visit(c + 1, d, basis, pivots)
        extended, pivot = insert(basis, columns[c])
        visit(c + 1, d + 1, extended, pivots if pivot is None else pivots | (1 << pivot))

    visit(split, size, basis, pivots)
    return [dict(level) for level in counts]

def matrix_columns(M: Matrix, tables=None):
    """Columns in the form insert_column expects, plus the tables to pass along."""
    data = np.asarray(M.data, dtype=np.int64)
    if M.params.q == 2:
        return [sum(int(data[r, c]) << r for r in range(M.rows)) for c in range(M.cols)], None
    return [data[:, c].tolist() for c in range(M.cols)], tables or field_tables(M.params)

def column_vectors(K: Kernel):
    return matrix_columns(K.G)

@timer_decorator
def profile_poly(K: Kernel, subset_cap: int | None = None, workers: int | None = None) -> ProfilePolynomial:
    """
    Exact erasure polynomials by one pass over all 2^m received sets.
    Each include step adds one column to the parent's echelon basis; once the
    basis is complete every superset is counted in closed form.
    """
    subset_cap = subset_cap or get_int("KERNEL", "subset_cap")
    if K.m > subset_cap:
        raise CapExceededError(f"m = {K.m} exceeds subset_cap = {subset_cap}; use phi_mc for Monte Carlo estimates")
    workers = workers or default_workers()
    columns, tables = column_vectors(K)
    split = min(SPLIT_COLUMNS, K.m)
    prefixes = list(range(1 << split))
    logger.info(f"enumerating 2^{K.m} received sets for {K} with {workers} workers")
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_count_branch, [columns] * len(prefixes), [K.m] * len(prefixes),
                                  [tables] * len(prefixes), prefixes, [split] * len(prefixes)))
    else:
        parts = [_count_branch(columns, K.m, tables, prefix, split) for prefix in prefixes]
    coeffs = [[0] * (K.m + 1) for _ in range(K.m)]
    for part in parts:
        for d, level in enumerate(part):
            for pivots, count in level.items():
                for i in range(K.m):
                    if not pivots >> i & 1:
                        coeffs[i][d] += count
    result = ProfilePolynomial(K.m, K.q, coeffs)
    if not result.mean_identity_holds():
        logger.error(f"mean identity fails for {K}")
        raise InvariantError(f"erasure polynomials of {K} do not preserve the mean")
    return result

def profile_poly_reference(K: Kernel) -> ProfilePolynomial:
    """Re-eliminates every received set from scratch. Slow, for cross-checks only."""
    coeffs = [[0] * (K.m + 1) for _ in range(K.m)]
    for mask in range(1 << K.m):
        S = [c for c in range(K.m) if mask >> c & 1]
        for i in range(K.m):
            coeffs[i][len(S)] += erasure_indicator(K, i, S)
    return ProfilePolynomial(K.m, K.q, coeffs)

def phi_mc(K: Kernel, i: int, x: float, trials: int, rng: np.random.Generator) -> MonteCarloEstimate:
    """Monte Carlo estimate of phi_i(x) with each position erased independently with probability x."""
    if trials < 1:
        raise PreconditionError(f"trials must be >= 1, got {trials}")
    if not 0 <= i < K.m:
        raise PreconditionError(f"symbol index {i} outside [0, {K.m})")
    columns, tables = column_vectors(K)
    insert = lambda basis, v: insert_column(basis, v, tables)
    received = rng.random((trials, K.m)) >= x
    erased = 0
    for row in received:
        basis, pivots = {}, 0
        for c in np.flatnonzero(row):
            basis, pivot = insert(basis, columns[c])
            if pivot is not None:
                pivots |= 1 << pivot
        erased += 0 if pivots >> i & 1 else 1
    estimate = erased / trials
    return MonteCarloEstimate(estimate=estimate,
                              stderr=math.sqrt(estimate * (1.0 - estimate) / trials),
                              trials=trials)

def lambda_kernel(K: Kernel, beta: float, grid_points: int | None = None,
                  refine_tol: float | None = None) -> LambdaReport:
    """Contraction constant of the fixed-kernel operator for V = Power(beta)."""
    op = FixedOperator(profile_poly(K), name=K.name)
    return lambda_sup(op, PowerFn(beta), grid_points, refine_tol)

def arikan_tensor(levels: int) -> Kernel:
    """F^(x levels) over F_2 with F = [[1, 0], [1, 1]]."""
    if levels < 1:
        raise PreconditionError(f"levels must be >= 1, got {levels}")
    params = FieldParams(2)
    F = Matrix.from_rows(params, [[1, 0], [1, 1]])
    G = F
    for _ in range(levels - 1):
        G = kronecker(G, F)
    return Kernel(G, name=f"arikan^{levels}")

def vandermonde(q: int, modulus: Sequence[int] | None = None, order: str = "descending") -> Kernel:
    """
    Reed-Solomon style candidate kernel on the q field elements in index order,
    with 0^0 = 1. Row r holds the powers element^(q-1-r) ("descending"), so that
    the last row is all ones, or element^r ("ascending").

    order="ascending" is the textbook form V[r][c] = element_c^r. For q = 2 it
    gives the profile {x, x}, while "descending" reproduces the psi family.
    """
    if order not in ("descending", "ascending"):
        raise PreconditionError(f"order must be 'descending' or 'ascending', got {order}")
    params = FieldParams(q, modulus)
    GF = params.GF
    nodes = GF(np.arange(q))
    rows = [GF.Ones(q)]
    for _ in range(q - 1):
        rows.append(rows[-1] * nodes)
    if order == "descending":
        rows.reverse()
    data = np.array([np.asarray(row, dtype=np.int64) for row in rows])
    return Kernel(Matrix(params, data), name=f"vandermonde({q},{order})")

def load(path: str) -> Kernel:
    """
    Read a kernel file: `q m [modulus coefficients]` then m rows of m field indices.
    """
    with open(path, "r", encoding="utf-8") as handle:
        lines = [line.split() for line in handle if line.strip() and not line.lstrip().startswith("#")]
    if not lines or len(lines[0]) < 2:
        raise PreconditionError(f"{path}: missing header line `q m`")
    header = [int(token) for token in lines[0]]
    q, m = header[0], header[1]
    modulus = header[2:] or None
    rows = [[int(token) for token in line] for line in lines[1:]]
    if len(rows) != m or any(len(row) != m for row in rows):
        raise PreconditionError(f"{path}: expected {m} rows of {m} entries")
    if any(not 0 <= value < q for row in rows for value in row):
        raise PreconditionError(f"{path}: entries must lie in [0, {q})")
    params = FieldParams(q, modulus)
    logger.info(f"loaded {m}x{m} kernel over F_{q} from {path}")
    return Kernel(Matrix.from_rows(params, rows), name=path)

def store(K: Kernel, path: str) -> None:
    header = [K.q, K.m] + list(K.params.modulus or [])
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(" ".join(str(v) for v in header) + "\n")
        for row in K.G.to_lists():
            handle.write(" ".join(str(v) for v in row) + "\n")

def tail_profile(q: int) -> List[List[int]]:
    """Coefficient table of the binomial tails psi_i in the same basis as ProfilePolynomial."""
    return [[math.comb(q, d) if d <= q - i - 1 else 0 for d in range(q + 1)] for i in range(q)]

def rs_candidate_report(q: int) -> RsCandidateReport:
    """Compare the Vandermonde candidate's erasure polynomials with the binomial tails."""
    poly = profile_poly(vandermonde(q))
    expected = tail_profile(q)
    matches = poly.multiset() == sorted(tuple(row) for row in expected)
    logger.info(f"vandermonde({q}) reproduces the binomial tails: {matches}")
    return RsCandidateReport(q=q, matches_tails=matches, kernel_profile=poly.coeffs, tail_profile=expected)

if __name__ == "__main__":
    print(profile_poly(arikan_tensor(1)))
    print(rs_candidate_report(2))
