"""
Lyapunov test functions, the contraction-constant search, closed-form scaling
bounds, Gaussian-approximation constants and numeric checks of the auxiliary
inequalities behind the scaling bound.
"""

import math
from typing import Callable, List, Tuple

import numpy as np
from scipy.integrate import quad
from scipy.optimize import minimize_scalar
from scipy.special import erfc, rel_entr, xlogy

from sources.config import get_int, get_float
from sources.de import psi_all
from sources.errors import PreconditionError
from sources.logger import Logger
from sources.operators import OperatorSpec
from sources.schemas import LambdaReport, InequalityReport, InequalitySlack
from sources.utility import timer_decorator

logger = Logger("lyapunov.log")

A_CONSTANT = math.sqrt(math.pi) + math.sqrt(4 * math.pi / 3) + math.sqrt(math.pi / 2)
QUAD_LIMIT = 40.0
EVAL_BUDGET = 1 << 22

class PowerFn:
    """V(x) = (x(1-x))^beta."""
    symmetric = True

    def __init__(self, beta: float):
        if not 0 < beta < 1:
            raise PreconditionError(f"beta must lie in (0, 1), got {beta}")
        self.beta = beta

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        value = np.power(np.clip(x * (1.0 - x), 0.0, None), self.beta)
        return float(value) if value.ndim == 0 else value

    def pair(self, x, xbar):
        """V evaluated from a rate and its separately carried complement."""
        x, xbar = np.asarray(x, dtype=float), np.asarray(xbar, dtype=float)
        value = np.power(np.clip(x * xbar, 0.0, None), self.beta)
        return float(value) if value.ndim == 0 else value

    def describe(self) -> str:
        return f"Power({self.beta})"

class GridFn:
    """Piecewise-linear interpolant of samples (xs, ys)."""
    def __init__(self, xs, ys, symmetric: bool = False, beta: float | None = None):
        self.xs = np.asarray(xs, dtype=float)
        self.ys = np.asarray(ys, dtype=float)
        if self.xs.ndim != 1 or self.xs.shape != self.ys.shape:
            raise PreconditionError("grid xs and ys must be 1-D arrays of equal length")
        if np.any(np.diff(self.xs) <= 0):
            raise PreconditionError("grid xs must be strictly increasing")
        self.symmetric = symmetric
        self.beta = beta

    def __call__(self, x):
        value = np.interp(np.asarray(x, dtype=float), self.xs, self.ys)
        return float(value) if np.ndim(value) == 0 else value

    def second_differences(self) -> np.ndarray:
        return np.diff(self.ys, n=2)

    def describe(self) -> str:
        return f"Grid({len(self.xs)})"

class IteratedFn:
    """
    The operator applied depth times to a base function.
    Evaluated by exact recursion while num_children^depth stays within
    max_recursion_cost, otherwise tabulated once on a uniform grid.
    """
    def __init__(self, base, op: OperatorSpec, depth: int,
                 max_recursion_cost: int | None = None,
                 cache_grid_points: int | None = None):
        if depth < 1:
            raise PreconditionError(f"depth must be >= 1, got {depth}")
        self.base = base
        self.op = op
        self.depth = depth
        self.symmetric = getattr(base, "symmetric", False) and op.symmetric
        self.beta = getattr(base, "beta", None)
        self.cost = op.num_children ** depth
        self.table = None
        self.interpolation_error = 0.0
        cap = max_recursion_cost or get_int("SEARCH", "max_recursion_cost")
        if self.cost > cap:
            points = cache_grid_points or get_int("SEARCH", "cache_grid_points")
            logger.warning(f"{self.describe()} costs {self.cost} evaluations per point, tabulating on {points} points")
            self.table = self.tabulate(points)

    def tabulate(self, points: int) -> GridFn:
        xs = np.linspace(0.0, 1.0, points)
        level = GridFn(xs, np.asarray(self.base(xs), dtype=float))
        error = 0.0
        for _ in range(self.depth):
            error += float(np.max(np.abs(level.second_differences()))) / 8.0
            level = GridFn(xs, np.mean(level(self.op.children(xs)), axis=0))
        self.interpolation_error = error
        return GridFn(xs, level.ys, symmetric=self.symmetric, beta=self.beta)

    def _recurse(self, x: np.ndarray, xbar: np.ndarray, depth: int) -> np.ndarray:
        if depth == 0:
            if hasattr(self.base, "pair"):
                return np.asarray(self.base.pair(x, xbar), dtype=float)
            return np.asarray(self.base(x), dtype=float)
        children, complements = self.op.child_pairs(x, xbar)
        return np.mean(self._recurse(children, complements, depth - 1), axis=0)

    def pair(self, x, xbar):
        if self.table is not None:
            return self.table(x)
        x = np.asarray(x, dtype=float)
        flat, flat_bar = x.reshape(-1), np.broadcast_to(np.asarray(xbar, dtype=float), x.shape).reshape(-1)
        step = max(1, EVAL_BUDGET // self.cost)
        out = np.concatenate([self._recurse(flat[k:k + step], flat_bar[k:k + step], self.depth)
                              for k in range(0, flat.size, step)]) if flat.size else flat
        value = out.reshape(x.shape)
        return float(value) if value.ndim == 0 else value

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.pair(x, 1.0 - x)

    def describe(self) -> str:
        return f"Iterated({self.base.describe()}, {self.op.describe()}, {self.depth})"

def apply_operator(T: OperatorSpec, V: Callable, x):
    """(TV)(x): average of V over the child maps of T at x."""
    if hasattr(V, "pair"):
        children, complements = T.child_pairs(x)
        values = V.pair(children, complements)
    else:
        values = V(T.children(x))
    value = np.mean(np.asarray(values, dtype=float), axis=0)
    return float(value) if np.ndim(value) == 0 else value

def search_grid(grid_points: int, symmetric: bool, endpoint: float) -> np.ndarray:
    if symmetric:
        xs = 0.5 * np.arange(1, grid_points + 1) / grid_points
        return np.concatenate([[endpoint], xs])
    xs = np.arange(1, grid_points) / grid_points
    return np.concatenate([[endpoint], xs, [1.0 - endpoint]])

def ratio_sup(numerator: Callable, denominator: Callable,
              grid_points: int | None = None, refine_tol: float | None = None,
              symmetric: bool = False, label: str = "", beta: float | None = None) -> LambdaReport:
    """
    Supremum of numerator(x)/denominator(x) over (0, 1).

    Args:
        numerator, denominator (Callable): vectorised functions on [0, 1]
        grid_points (int): uniform grid size, on (0, 1/2] when symmetric, else on (0, 1)
        refine_tol (float): width of the final bracket of the bounded refinement
        symmetric (bool): restrict the search to (0, 1/2]
    Returns:
        LambdaReport: refined supremum, never below the grid maximum
    """
    grid_points = grid_points or get_int("SEARCH", "grid_points")
    refine_tol = refine_tol or get_float("SEARCH", "refine_tol")
    if grid_points < 64:
        raise PreconditionError(f"grid_points must be >= 64, got {grid_points}")
    endpoint = get_float("SEARCH", "endpoint")
    xs = search_grid(grid_points, symmetric, endpoint)
    ratios = np.asarray(numerator(xs), dtype=float) / np.asarray(denominator(xs), dtype=float)
    best = int(np.argmax(ratios))
    grid_max = float(ratios[best])
    lo = xs[max(best - 1, 0)]
    hi = xs[min(best + 1, len(xs) - 1)]
    value, argmax = grid_max, float(xs[best])
    if hi > lo:
        result = minimize_scalar(lambda t: -float(numerator(t)) / float(denominator(t)),
                                 bounds=(lo, hi), method="bounded",
                                 options={"xatol": refine_tol})
        if -result.fun > value:
            value, argmax = float(-result.fun), float(result.x)
    logger.info(f"sup of {label or 'ratio'}: {value} at x={argmax} (grid max {grid_max})")
    return LambdaReport(operator=label, beta=beta, lambda_=value, argmax_x=argmax,
                        grid_points=grid_points, refine_tol=refine_tol,
                        grid_max=grid_max, symmetric=symmetric)

@timer_decorator
def lambda_sup(T: OperatorSpec, V, grid_points: int | None = None,
               refine_tol: float | None = None) -> LambdaReport:
    """Contraction constant sup_x (TV)(x)/V(x)."""
    symmetric = bool(T.symmetric and getattr(V, "symmetric", False))
    label = f"{T.describe()} on {V.describe()}"
    return ratio_sup(lambda x: apply_operator(T, V, x), V,
                     grid_points=grid_points, refine_tol=refine_tol,
                     symmetric=symmetric, label=label, beta=getattr(V, "beta", None))

def endpoint_ratio_limit(q: int, beta: float) -> float:
    """lim_{x->0} (T_q V)(x)/V(x) for V = Power(beta)."""
    return q ** (beta - 1.0)

def ratio_curve(T: OperatorSpec, V, points: int = 1000) -> List[Tuple[float, float]]:
    """(x, (TV)(x)/V(x)) on a uniform interior grid, for plotting."""
    xs = np.arange(1, points + 1) / (points + 1)
    ratios = np.asarray(apply_operator(T, V, xs)) / np.asarray(V(xs))
    return [(float(x), float(r)) for x, r in zip(xs, ratios)]

def beta_sweep(T: OperatorSpec, betas, grid_points: int | None = None,
               refine_tol: float | None = None) -> List[LambdaReport]:
    return [lambda_sup(T, PowerFn(beta), grid_points, refine_tol) for beta in betas]

def _check_beta(beta: float) -> None:
    if not 0 < beta <= 0.5:
        raise PreconditionError(f"beta must lie in (0, 1/2], got {beta}")

def lemma1_bound(lam: float, n: int, v_x: float, alpha: float) -> float:
    """Markov bound lam^n V(x) / alpha on P(V(X_n) >= alpha)."""
    return lam ** n * v_x / alpha

def lemma1_tail_bound(lam: float, n: int, v_x: float, alpha: float, x: float, upper: float) -> float:
    """Adds x / upper, where upper is the largest point with V >= alpha."""
    return lemma1_bound(lam, n, v_x, alpha) + x / upper

def corollary1_bound(lam: float, n: int, x: float, eta: float, beta: float) -> float:
    """Bound on P(X_n in [eta, 1 - eta]) for V = Power(beta)."""
    if not 0 < eta < 0.5:
        raise PreconditionError(f"eta must lie in (0, 1/2), got {eta}")
    V = PowerFn(beta)
    return lam ** n * V(x) / V(eta)

def corollary1_tail_bound(lam: float, n: int, x: float, eta: float, beta: float) -> float:
    """Bound on P(X_n >= eta)."""
    return corollary1_bound(lam, n, x, eta, beta) + x / (1.0 - eta)

def scaling_exponent(lam: float, q: int) -> float:
    """-ln(lam)/ln(q), so that lam^n = N^(-exponent)."""
    return -math.log(lam) / math.log(q)

def example_prefactor(beta: float, eta: float) -> float:
    return 0.25 ** beta / (eta * (1.0 - eta)) ** beta

def lemma2_bound(q: int, beta: float) -> float:
    """Closed-form upper bound on the RS(q) contraction constant for Power(beta)."""
    _check_beta(beta)
    return 6.0 / math.sqrt(q * beta) * 0.25 ** (0.5 - beta)

def theorem1_exponent(q: int, gamma: float, beta: float) -> float:
    _check_beta(beta)
    return gamma * beta - 0.5 + (math.log(6) - 0.5 * math.log(beta) + (beta - 0.5) * math.log(4)) / math.log(q)

def theorem1_bound(q: int, n: int, gamma: float, beta: float) -> float:
    """
    Bound on P(X_n in [N^-gamma, 1 - N^-gamma]) with N = q^n.
    Raises PreconditionError unless N^-gamma <= 3/4.
    """
    log_n = n * math.log(q)
    threshold = math.exp(-gamma * log_n)
    if threshold > 0.75:
        raise PreconditionError(f"hypothesis N^{{-gamma}} <= 3/4 violated: N^-gamma = {threshold}")
    return math.exp(theorem1_exponent(q, gamma, beta) * log_n)

def theorem1_two_sided(q: int, n: int, gamma: float, beta: float, x: float) -> float:
    """Bound on P(X_n >= N^-gamma)."""
    threshold = (q ** n) ** (-gamma)
    return theorem1_bound(q, n, gamma, beta) + x / (1.0 - threshold)

def q0_threshold(gamma: float, delta: float) -> float:
    """Field size above which the exponent is at most -1/2 + delta, using beta = delta / (2 gamma)."""
    if gamma < 0.5:
        raise PreconditionError(f"gamma must be >= 1/2, got {gamma}")
    if not 0 < delta <= 0.5:
        raise PreconditionError(f"delta must lie in (0, 1/2], got {delta}")
    beta = delta / (2 * gamma)
    log_q0 = (2 * beta * math.log(4) - math.log(beta) + 2 * math.log(6) - math.log(4)) / delta
    return math.exp(log_q0)

def gaussian_Q(z):
    """Standard normal upper tail."""
    value = 0.5 * erfc(np.asarray(z, dtype=float) / math.sqrt(2))
    return float(value) if np.ndim(value) == 0 else value

def m_beta(beta: float) -> float:
    """Integral of (Q(z) Q(-z))^beta over the real line, truncated to |z| <= 40."""
    _check_beta(beta)
    integrand = lambda z: (gaussian_Q(z) * gaussian_Q(-z)) ** beta
    value, _ = quad(integrand, 0.0, QUAD_LIMIT, epsabs=1e-10, epsrel=1e-10, limit=200)
    return 2.0 * value

def lambda_tilde(q: int, beta: float) -> float:
    """Gaussian approximation of the RS(q) contraction constant."""
    return m_beta(beta) / math.sqrt(q) * 0.25 ** (0.5 - beta)

def gaussian_exponent(q: int, gamma: float, beta: float) -> float:
    """Exponent of N in the bound obtained from the Gaussian approximation."""
    return gamma * beta - 0.5 + (math.log(m_beta(beta)) + (beta - 0.5) * math.log(4)) / math.log(q)

def _kl(y, x):
    return rel_entr(y, x) + rel_entr(1.0 - y, 1.0 - x)

def _quadratic_divergence(y, x):
    return 0.5 * (y - x) ** 2 / (x * (1.0 - x) + (1.0 - 2.0 * x) * (y - x) / 3.0)

def _record(name: str, slack: np.ndarray, points: List[np.ndarray], slack_tol: float) -> InequalitySlack:
    index = int(np.argmin(slack))
    min_slack = float(slack.reshape(-1)[index])
    witness = [float(np.broadcast_to(p, slack.shape).reshape(-1)[index]) for p in points]
    passed = min_slack >= -slack_tol
    if not passed:
        logger.error(f"{name} violated: slack {min_slack} at {witness}")
    return InequalitySlack(name=name, min_slack=min_slack, witness=witness, passed=passed)

def _pairwise_sweep(name: str, grid: np.ndarray, slack_fn, ordered: bool, slack_tol: float) -> InequalitySlack:
    best = None
    rows = max(1, EVAL_BUDGET // grid.size)
    for start in range(0, grid.size, rows):
        x = grid[start:start + rows, np.newaxis]
        y = grid[np.newaxis, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            slack = slack_fn(y, x)
        if ordered:
            slack = np.where(y >= x, slack, np.inf)
        entry = _record(name, slack, [x, y], slack_tol)
        if best is None or entry.min_slack < best.min_slack:
            best = entry
    return best

@timer_decorator
def check_proof_inequalities(q: int, beta: float, points: int | None = None,
                             slack_tol: float | None = None) -> InequalityReport:
    """
    Sweep the auxiliary inequalities on uniform grids and report the minimum slack
    (right side minus left side, or its negation, so that >= 0 means it holds).

    Args:
        q (int): field size for the middle-term and final bounds
        beta (float): Lyapunov exponent in (0, 1/2]
        points (int): grid points per axis
    """
    _check_beta(beta)
    points = points or get_int("INEQUALITIES", "points")
    slack_tol = slack_tol or get_float("INEQUALITIES", "slack_tol")
    logger.info(f"inequality sweep q={q} beta={beta} points={points}")
    interior = np.arange(1, points + 1) / (points + 1)
    entries = []
    entries.append(_pairwise_sweep(
        "quadratic_divergence_below_kl", interior,
        lambda y, x: _kl(y, x) - _quadratic_divergence(y, x), True, slack_tol))
    entries.append(_pairwise_sweep(
        "kl_poisson_lower_bound", interior,
        lambda y, x: _kl(y, x) - ((y - x) + rel_entr(1.0 - y, 1.0 - x)), False, slack_tol))
    z = np.linspace(0.0, 1.0, points)
    entries.append(_record("one_minus_z_plus_z_log_z",
                           1.0 - z + xlogy(z, z) - 0.5 * (1.0 - z) ** 2, [z], slack_tol))
    x = np.linspace(0.5, 1.0, points)
    V = PowerFn(beta)
    middle = np.clip(np.ceil(q * x).astype(np.int64) - 1, 0, q - 1)
    children = psi_all(q, x)
    middle_value = children[middle, np.arange(points)]
    envelope = (2.0 * x * (1.0 - x)) ** beta / math.sqrt(2.0 * q)
    entries.append(_record("middle_term", envelope - V(middle_value) / q, [x], slack_tol))
    final = envelope + A_CONSTANT * np.sqrt(x * (1.0 - x) / (q * beta))
    entries.append(_record("operator_upper_bound", final - np.mean(V(children), axis=0), [x], slack_tol))
    return InequalityReport(q=q, beta=beta, points=points, slack_tol=slack_tol, entries=entries)

if __name__ == "__main__":
    from sources.operators import RSOperator
    print(lambda_sup(RSOperator(2), PowerFn(0.66)))
    print(m_beta(0.5))
