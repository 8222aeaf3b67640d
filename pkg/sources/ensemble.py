"""
Exact combinatorics of the uniform full-rank kernel ensemble.

rho(m, i, d, q) is the probability that e_1 lies outside the column space of a
d-column submatrix of a uniform full-rank (m-i) x m matrix. All closed forms are
evaluated with Python integers and Fractions; floating point only appears when
the averaged erasure polynomials phi_bar_i are evaluated.
"""

import math
import os
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from functools import lru_cache
from typing import List, Sequence

import numpy as np
from scipy.stats import binom, linregress

from sources.config import get_int, get_float, get_str, default_workers
from sources.errors import PreconditionError, InvariantError
from sources.gf import FieldParams, all_full_rank, in_colspace, sample_full_rank
from sources.kernel import Kernel, profile_poly, insert_column, matrix_columns, field_tables
from sources.logger import Logger
from sources.lyapunov import PowerFn, GridFn, lambda_sup
from sources.operators import EnsembleOperator
from sources.schemas import LambdaReport, MonteCarloEstimate, Conjecture1Report, Conjecture2Report
from sources.utility import format_rational, progress, timer_decorator

logger = Logger("ensemble.log")

@lru_cache(maxsize=None)
def gaussian_binomial(k: int, j: int, q: int) -> int:
    """
    Number of j-dimensional subspaces of F_q^k.
    Zero when j > k or j < 0.
    """
    if j < 0 or j > k:
        return 0
    num, den = 1, 1
    for l in range(j):
        num *= q ** k - q ** l
        den *= q ** j - q ** l
    return num // den

@lru_cache(maxsize=None)
def phi_count(j: int, i: int, q: int) -> int:
    """Number of ordered j-tuples of linearly independent vectors in F_q^i."""
    if j < 0:
        raise PreconditionError(f"j must be >= 0, got {j}")
    if j > i:
        return 0
    result = 1
    for l in range(j):
        result *= q ** i - q ** l
    return result

def rank_dist(k: int, d: int, q: int, j: int) -> Fraction:
    """P(rank = j) for a uniform k x d matrix over F_q."""
    if not 0 <= j <= min(k, d):
        return Fraction(0)
    return Fraction(phi_count(j, d, q) * gaussian_binomial(k, j, q), q ** (k * d))

def theta(m: int, k: int, r: int, j: int, q: int, d: int) -> Fraction:
    """
    Joint probability P(rk(G_S) = j, rk(G) = r) for a uniform k x m matrix G and a
    fixed set S of d columns.
    """
    if not (0 <= j <= r <= k and 0 <= d <= m):
        return Fraction(0)
    inner = 0
    for l in range(0, r + 1):
        inner += (phi_count(l, m - d, q) * q ** ((r - j) * (r - l))
                  * gaussian_binomial(j, r - l, q) * gaussian_binomial(k - j, k - r, q))
    return Fraction(phi_count(j, d, q) * gaussian_binomial(k, j, q) * inner, q ** (k * d + k * (m - d)))

def _rho_cell(m: int, i: int, d: int, q: int) -> Fraction:
    k = m - i
    qk = q ** k
    numerator = 0
    for j in range(0, min(k - 1, d) + 1):
        inner = 0
        for l in range(k - j, min(k, m - d) + 1):
            inner += phi_count(l, m - d, q) * q ** ((k - j) * (k - l)) * gaussian_binomial(j, k - l, q)
        if inner:
            numerator += (qk - q ** j) * phi_count(j, d, q) * gaussian_binomial(k, j, q) * inner
    return Fraction(numerator, (qk - 1) * phi_count(k, m, q))

def rho(m: int, i: int, d: int, q: int) -> Fraction:
    """Exact rho(m, i, d, q)."""
    if not 0 <= i < m:
        raise PreconditionError(f"i={i} outside [0, {m})")
    if not 0 <= d <= m:
        raise PreconditionError(f"d={d} outside [0, {m}]")
    FieldParams(q)
    return _rho_cell(m, i, d, q)

def _rho_row(m: int, i: int, q: int) -> List[Fraction]:
    return [_rho_cell(m, i, d, q) for d in range(m + 1)]

class RhoTable:
    """rho(m, i, d, q) for every i in [0, m) and d in [0, m]."""
    def __init__(self, m: int, q: int, rho: List[List[Fraction]]):
        self.m = m
        self.q = q
        self.rho = rho
        self.weights = np.array([[float(v) for v in row] for row in rho], dtype=float)

    @classmethod
    @timer_decorator
    def build(cls, m: int, q: int, workers: int | None = None, show_progress: bool = False) -> "RhoTable":
        """Rows are independent exact computations and are spread over worker processes."""
        if m < 1:
            raise PreconditionError(f"m must be >= 1, got {m}")
        FieldParams(q)
        workers = workers or default_workers()
        logger.info(f"building rho table m={m} q={q} with {workers} workers")
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                rows = list(progress(pool.map(_rho_row, [m] * m, range(m), [q] * m),
                                     enabled=show_progress, desc=f"rho m={m}", total=m))
        else:
            rows = [_rho_row(m, i, q) for i in progress(range(m), enabled=show_progress, desc=f"rho m={m}")]
        return cls(m, q, rows)

    def evaluate_all(self, x) -> np.ndarray:
        """phi_bar_i(x) for every i; shape (m,) + shape(x)."""
        x = np.asarray(x, dtype=float)
        d = np.arange(self.m + 1).reshape((self.m + 1,) + (1,) * x.ndim)
        pmf = binom.pmf(d, self.m, 1.0 - x[np.newaxis, ...])
        return np.tensordot(self.weights, pmf, axes=([1], [0]))

    def identity_failures(self) -> List[str]:
        """Exact checks: range, sum over i and duality."""
        m, failures = self.m, []
        for i in range(m):
            for d in range(m + 1):
                value = self.rho[i][d]
                if not 0 <= value <= 1:
                    failures.append(f"rho[{i}][{d}] = {value} outside [0, 1]")
                if value != 1 - self.rho[m - i - 1][m - d]:
                    failures.append(f"duality fails at i={i} d={d}")
        for d in range(m + 1):
            total = sum(self.rho[i][d] for i in range(m))
            if total != m - d:
                failures.append(f"sum over i at d={d} is {total}, expected {m - d}")
        return failures

    def monotonicity_failures(self) -> List[str]:
        """rho is nonincreasing in d at fixed i and nonincreasing in i at fixed d."""
        failures = []
        for i in range(self.m):
            for d in range(self.m + 1):
                if d > 0 and self.rho[i][d] > self.rho[i][d - 1]:
                    failures.append(f"rho[{i}][{d}] increases in d")
                if i > 0 and self.rho[i][d] > self.rho[i - 1][d]:
                    failures.append(f"rho[{i}][{d}] increases in i")
        return failures

    def check_identities(self) -> None:
        failures = self.identity_failures()
        if failures:
            logger.error(f"rho table m={self.m} q={self.q}: {failures[0]} ({len(failures)} failures)")
            raise InvariantError(f"rho table m={self.m} q={self.q}: {failures[0]}")

    def lines(self) -> List[str]:
        out = [f"{self.m} {self.q}"]
        for i in range(self.m):
            for d in range(self.m + 1):
                out.append(f"{i} {d} {format_rational(self.rho[i][d])}")
        return out

    def save(self, path: str) -> None:
        folder = os.path.dirname(path)
        if folder:
            os.makedirs(folder, exist_ok=True)
        with open(path, "w", encoding="utf-8") as handle:
            handle.write("\n".join(self.lines()) + "\n")

    @classmethod
    def load(cls, path: str) -> "RhoTable":
        with open(path, "r", encoding="utf-8") as handle:
            lines = [line.split() for line in handle if line.strip()]
        m, q = int(lines[0][0]), int(lines[0][1])
        cells = [[None] * (m + 1) for _ in range(m)]
        for i, d, value in lines[1:]:
            cells[int(i)][int(d)] = Fraction(value)
        if any(v is None for row in cells for v in row):
            raise InvariantError(f"{path}: rho table m={m} q={q} is incomplete")
        return cls(m, q, cells)

    def __eq__(self, other):
        return isinstance(other, RhoTable) and (self.m, self.q, self.rho) == (other.m, other.q, other.rho)

def cache_path(m: int, q: int, cache_dir: str | None = None) -> str:
    return os.path.join(cache_dir or get_str("ENSEMBLE", "cache_dir"), f"rho_m{m}_q{q}.txt")

def get_rho_table(m: int, q: int, cache_dir: str | None = None, use_cache: bool = True,
                  workers: int | None = None, show_progress: bool = False) -> RhoTable:
    """Load the cached table for (m, q) or build, check and cache it."""
    path = cache_path(m, q, cache_dir)
    if use_cache and os.path.exists(path):
        table = RhoTable.load(path)
        if (table.m, table.q) != (m, q):
            raise InvariantError(f"{path} holds m={table.m} q={table.q}, expected m={m} q={q}")
        logger.info(f"loaded rho table m={m} q={q} from {path}")
        return table
    table = RhoTable.build(m, q, workers=workers, show_progress=show_progress)
    table.check_identities()
    if use_cache:
        try:
            table.save(path)
        except OSError as e:
            logger.warning(f"could not cache rho table at {path}: {e}")
    return table

def _rho_mc_counts(m: int, i: int, q: int, trials: int, rng: np.random.Generator) -> np.ndarray:
    """For each d, how many sampled matrices leave e_1 outside the span of their first d columns."""
    params = FieldParams(q)
    tables = None if q == 2 else field_tables(params)
    outside = np.zeros(m + 1, dtype=np.int64)
    for _ in range(trials):
        columns, _ = matrix_columns(sample_full_rank(m - i, m, params, rng), tables)
        basis, spans_e1 = {}, False
        for d in range(m + 1):
            if not spans_e1:
                outside[d] += 1
            if d < m:
                basis, pivot = insert_column(basis, columns[d], tables)
                spans_e1 = spans_e1 or pivot == 0
    return outside

def _estimate(hits: int, trials: int) -> MonteCarloEstimate:
    p = hits / trials
    return MonteCarloEstimate(estimate=p, stderr=math.sqrt(p * (1.0 - p) / trials), trials=trials)

def rho_mc(m: int, i: int, d: int, q: int, trials: int, rng: np.random.Generator) -> MonteCarloEstimate:
    """Monte Carlo estimate of rho(m, i, d, q)."""
    if trials < 1:
        raise PreconditionError(f"trials must be >= 1, got {trials}")
    if not 0 <= i < m or not 0 <= d <= m:
        raise PreconditionError(f"need 0 <= i < m and 0 <= d <= m, got m={m} i={i} d={d}")
    return _estimate(int(_rho_mc_counts(m, i, q, trials, rng)[d]), trials)

def rho_mc_row(m: int, i: int, q: int, trials: int, rng: np.random.Generator) -> List[MonteCarloEstimate]:
    """Estimates for every d from one shared set of sampled matrices."""
    if trials < 1:
        raise PreconditionError(f"trials must be >= 1, got {trials}")
    logger.info(f"rho Monte Carlo m={m} i={i} q={q} trials={trials}")
    return [_estimate(int(hits), trials) for hits in _rho_mc_counts(m, i, q, trials, rng)]

def rho_exhaustive(m: int, i: int, d: int, q: int) -> Fraction:
    """rho by enumerating every full-rank (m-i) x m matrix. Tiny sizes only."""
    params = FieldParams(q)
    e1 = [1] + [0] * (m - i - 1)
    total, outside = 0, 0
    for G in all_full_rank(m - i, m, params):
        total += 1
        if not in_colspace(e1, G.submatrix(cols=range(d))):
            outside += 1
    return Fraction(outside, total)

def phi_bar(m: int, i: int, q: int, x, table: RhoTable | None = None):
    """Averaged erasure polynomial phi_bar_i(x)."""
    if not 0 <= i < m:
        raise PreconditionError(f"i={i} outside [0, {m})")
    table = table or get_rho_table(m, q)
    value = table.evaluate_all(x)[i]
    return float(value) if np.ndim(value) == 0 else value

def gbar_sequence(m: int, q: int, beta: float, n: int, grid_points: int | None = None,
                  table: RhoTable | None = None) -> List[GridFn]:
    """
    gbar_1 .. gbar_n on a uniform grid, gbar_{k+1}(x) = (1/m) sum_i gbar_k(phi_bar_i(x))
    starting from gbar_0 = Power(beta). gbar_1 uses gbar_0 exactly; later levels
    interpolate the previous grid piecewise linearly.
    """
    depth_cap = get_int("ENSEMBLE", "depth_cap")
    if not 1 <= n <= depth_cap:
        raise PreconditionError(f"n must lie in [1, {depth_cap}], got {n}")
    grid_points = grid_points or get_int("ENSEMBLE", "gbar_grid_points")
    table = table or get_rho_table(m, q)
    xs = np.linspace(0.0, 1.0, grid_points)
    children = table.evaluate_all(xs)
    current, levels = PowerFn(beta), []
    for _ in range(n):
        current = GridFn(xs, np.mean(current(children), axis=0), symmetric=True, beta=beta)
        levels.append(current)
    return levels

def averaged_g1_exhaustive(m: int, q: int, beta: float, x) -> np.ndarray:
    """Ensemble average over all of GL(m, F_q) of (1/m) sum_i V(phi_i(x; G))."""
    params = FieldParams(q)
    V = PowerFn(beta)
    x = np.asarray(x, dtype=float)
    total, count = np.zeros_like(x), 0
    for G in all_full_rank(m, m, params):
        poly = profile_poly(Kernel(G), workers=1)
        total += np.mean(V(poly.evaluate_all(x)), axis=0)
        count += 1
    return total / count

def lambda_m(m: int, q: int, beta: float, grid_points: int | None = None,
             refine_tol: float | None = None, table: RhoTable | None = None) -> LambdaReport:
    """sup_x gbar_1(x) / gbar_0(x) for the averaged operator."""
    table = table or get_rho_table(m, q)
    return lambda_sup(EnsembleOperator(table), PowerFn(beta), grid_points, refine_tol)

def check_conjecture1(m: int, q: int, beta: float, n: int, grid_points: int | None = None,
                      table: RhoTable | None = None) -> Conjecture1Report:
    """Concavity of gbar_1 .. gbar_n measured by grid second differences."""
    grid_points = grid_points or get_int("ENSEMBLE", "gbar_grid_points")
    tolerance = get_float("ENSEMBLE", "concavity_tol")
    levels = gbar_sequence(m, q, beta, n, grid_points, table)
    second = [level.second_differences() for level in levels]
    max_second = [float(np.max(s)) for s in second]
    report = Conjecture1Report(
        m=m, q=q, beta=beta, depth=n, grid_points=grid_points, tolerance=tolerance,
        max_second_difference=max_second,
        interpolation_error=[float(np.max(np.abs(s))) / 8.0 for s in second],
        concave=[value <= tolerance for value in max_second])
    if not report.passed:
        logger.warning(f"gbar not concave for m={m} q={q} beta={beta}: {max_second}")
    return report

def check_conjecture2(m_list: Sequence[int], q: int, beta: float,
                      grid_points: int | None = None) -> Conjecture2Report:
    """Least-squares slope of ln(lambda_m) against ln(m). Evidence only."""
    m_list = list(m_list)
    if len(set(m_list)) < 2:
        raise PreconditionError("at least two distinct m values are needed for a slope")
    lambdas = [lambda_m(m, q, beta, grid_points).value for m in m_list]
    log_m, log_lambda = np.log(m_list), np.log(lambdas)
    fit = linregress(log_m, log_lambda)
    residuals = log_lambda - (fit.intercept + fit.slope * log_m)
    return Conjecture2Report(q=q, beta=beta, m_list=m_list, lambdas=lambdas,
                             slope=float(fit.slope), intercept=float(fit.intercept),
                             residuals=[float(r) for r in residuals])

if __name__ == "__main__":
    print(rho(2, 0, 1, 2), rho(2, 1, 1, 2))
    table = RhoTable.build(4, 2, workers=1)
    table.check_identities()
    print("\n".join(table.lines()))
