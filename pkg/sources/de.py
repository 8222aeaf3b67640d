"""
Density evolution for q-ary polar codes on the q-ary erasure channel.

One polarization stage maps an erasure rate x to the q child rates
psi_i(x) = P(Bin(q, x) >= i + 1), i = 0 .. q-1. Channel indices are big-endian:
the channel reached by choosing i_1 at the first stage, ..., i_n at the last has
index sum_k i_k q^(n-k).
"""

import heapq
import math
import csv
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from typing import Iterator, List, Tuple

import numpy as np
from scipy.special import bdtr, bdtrc

from sources.config import get_int, default_workers
from sources.errors import PreconditionError, CapExceededError, InvariantError
from sources.logger import Logger
from sources.schemas import GapMetrics, MonteCarloEstimate, ScalingQuery
from sources.utility import format_real

logger = Logger("de.log")

MEAN_TOL = 1e-10

def _check_q(q: int) -> None:
    if int(q) != q or q < 2:
        raise PreconditionError(f"q must be an integer >= 2, got {q}")

def _check_rate(x) -> None:
    arr = np.asarray(x, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise PreconditionError(f"erasure probability outside [0, 1]: {x}")

def _tail(i, q: int, x):
    """Binomial upper tail P(Bin(q, x) > i) with the absorbing endpoints pinned."""
    x = np.asarray(x, dtype=float)
    value = bdtrc(i, q, x)
    return np.where(x <= 0.0, 0.0, np.where(x >= 1.0, 1.0, value))

def psi(q: int, i: int, x):
    """
    Erasure rate of child channel i.

    Args:
        q (int): kernel size
        i (int): child index in [0, q)
        x (float | np.ndarray): parent erasure rate(s)
    Returns:
        float or np.ndarray: P(Bin(q, x) >= i + 1)
    """
    _check_q(q)
    if not 0 <= i < q:
        raise PreconditionError(f"channel index i={i} outside [0, {q})")
    _check_rate(x)
    value = _tail(i, q, x)
    return float(value) if np.ndim(value) == 0 else value

def psi_all(q: int, x) -> np.ndarray:
    """All q child rates; shape (q,) + shape(x)."""
    _check_q(q)
    x = np.asarray(x, dtype=float)
    _check_rate(x)
    i = np.arange(q).reshape((q,) + (1,) * x.ndim)
    return _tail(i, q, x[np.newaxis, ...])

def psi_pairs(q: int, x, xbar=None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Child rates psi_i(x) together with their complements 1 - psi_i(x).

    Rates above 1/2 are evaluated through the tail of xbar = 1 - x, so a rate
    close to 1 keeps its complement instead of rounding it to 0, and
    psi_pairs(q, 1 - x) is psi_pairs(q, x) reversed and swapped.

    Args:
        q (int): kernel size
        x (float | np.ndarray): parent erasure rate(s)
        xbar (float | np.ndarray): 1 - x when already known more precisely
    Returns:
        tuple: (rates, complements), each of shape (q,) + shape(x)
    """
    _check_q(q)
    x = np.asarray(x, dtype=float)
    _check_rate(x)
    xbar = np.asarray(1.0 - x if xbar is None else xbar, dtype=float)
    i = np.arange(q).reshape((q,) + (1,) * x.ndim)
    low = x[np.newaxis, ...] <= 0.5
    k = np.where(low, i, q - 1 - i)
    p = np.where(low, x[np.newaxis, ...], xbar[np.newaxis, ...])
    upper = bdtrc(k, q, p)
    lower = bdtr(k, q, p)
    return np.where(low, upper, lower), np.where(low, lower, upper)

def psi_exact(q: int, i: int, x) -> Fraction:
    """Exact rational evaluation of the binomial tail, used as a test oracle."""
    _check_q(q)
    if not 0 <= i < q:
        raise PreconditionError(f"channel index i={i} outside [0, {q})")
    x = Fraction(x)
    y = 1 - x
    return sum((math.comb(q, j) * x ** j * y ** (q - j) for j in range(i + 1, q + 1)), Fraction(0))

def psi_mean_check(q: int, x) -> float:
    """(1/q) sum_i psi_i(x); equals x."""
    children = psi_all(q, x)
    mean = np.sum(children, axis=0) / q
    return float(mean) if np.ndim(mean) == 0 else mean

def expand_stage(q: int, rates: np.ndarray) -> np.ndarray:
    """One polarization stage in big-endian index order (parent a, child i -> a*q + i)."""
    return psi_all(q, rates).T.reshape(-1)

def run_stages(q: int, rates: np.ndarray, stages: int) -> np.ndarray:
    current = np.asarray(rates, dtype=float).reshape(-1)
    for _ in range(stages):
        current = expand_stage(q, current)
    return current

class ChannelProfile:
    """
    Erasure rates of the q^n effective channels, in channel-index order.

    A materialized profile holds every rate. A streaming profile holds the rates
    after the first n - s stages and regenerates each block of q^s consecutive
    channels on demand.
    """
    def __init__(self, q: int, n: int, eps: float,
                 rates: np.ndarray | None = None,
                 prefix: np.ndarray | None = None,
                 suffix_stages: int = 0):
        self.q = q
        self.n = n
        self.eps = eps
        self.rates = rates
        self.prefix = prefix
        self.suffix_stages = suffix_stages

    @property
    def size(self) -> int:
        return self.q ** self.n

    def __len__(self):
        return self.size

    @property
    def is_streaming(self) -> bool:
        return self.rates is None

    def iter_chunks(self, chunk_size: int | None = None) -> Iterator[Tuple[int, np.ndarray]]:
        """Yield (first channel index, rates) blocks in index order."""
        if not self.is_streaming:
            step = chunk_size or get_int("PROFILE", "chunk_size")
            for start in range(0, self.size, step):
                yield start, self.rates[start:start + step]
            return
        block = self.q ** self.suffix_stages
        for a, r in enumerate(self.prefix):
            yield a * block, run_stages(self.q, np.array([r]), self.suffix_stages)

    def values(self) -> np.ndarray:
        if self.is_streaming:
            raise CapExceededError(f"profile of {self.size} channels is streamed; iterate with iter_chunks()")
        return self.rates

    def mean(self) -> float:
        if not self.is_streaming:
            return float(np.mean(self.rates))
        return math.fsum(float(np.sum(chunk)) for _, chunk in self.iter_chunks()) / self.size

    def count_in(self, lo: float, hi: float) -> int:
        return sum(int(np.count_nonzero((chunk >= lo) & (chunk <= hi))) for _, chunk in self.iter_chunks())

    def fraction_in(self, lo: float, hi: float) -> float:
        """Fraction of channels with lo <= rate <= hi."""
        return self.count_in(lo, hi) / self.size

    def histogram(self, bins: int) -> List[Tuple[float, float, int]]:
        """Uniform bins on [0, 1] as (bin_lo, bin_hi, count) rows."""
        if bins < 1:
            raise PreconditionError(f"bins must be >= 1, got {bins}")
        edges = np.linspace(0.0, 1.0, bins + 1)
        counts = np.zeros(bins, dtype=np.int64)
        for _, chunk in self.iter_chunks():
            counts += np.histogram(chunk, bins=edges)[0]
        return [(float(edges[b]), float(edges[b + 1]), int(counts[b])) for b in range(bins)]

    def to_csv(self, handle) -> None:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["index", "rate"])
        for start, chunk in self.iter_chunks():
            for offset, rate in enumerate(chunk):
                writer.writerow([start + offset, format_real(rate)])

    def __repr__(self):
        mode = "streaming" if self.is_streaming else "materialized"
        return f"ChannelProfile(q={self.q}, n={self.n}, eps={self.eps}, {mode})"

def profile(q: int, n: int, eps: float,
            materialize_cap: int | None = None,
            stream_cap: int | None = None) -> ChannelProfile:
    """
    Erasure rates of all q^n effective channels starting from eps.
    Profiles above materialize_cap are streamed; above stream_cap they are refused.
    """
    _check_q(q)
    if n < 0:
        raise PreconditionError(f"n must be >= 0, got {n}")
    _check_rate(eps)
    materialize_cap = materialize_cap or get_int("PROFILE", "materialize_cap")
    stream_cap = stream_cap or get_int("PROFILE", "stream_cap")
    size = q ** n
    if size > stream_cap:
        raise CapExceededError(f"q^n = {size} exceeds stream_cap = {stream_cap} channels")
    logger.info(f"profile q={q} n={n} eps={eps} ({size} channels)")
    if size <= materialize_cap:
        rates = run_stages(q, np.array([float(eps)]), n)
        result = ChannelProfile(q, n, eps, rates=rates)
        drift = abs(result.mean() - eps)
        if drift > MEAN_TOL * max(n, 1):
            logger.error(f"mean drift {drift} for q={q} n={n} eps={eps}")
            raise InvariantError(f"profile mean drifted by {drift} from eps={eps}")
        return result
    chunk_size = get_int("PROFILE", "chunk_size")
    suffix = max(1, int(math.floor(math.log(chunk_size, q))))
    while suffix > 1 and q ** suffix > chunk_size:
        suffix -= 1
    suffix = min(suffix, n)
    logger.warning(f"profile of {size} channels exceeds materialize_cap={materialize_cap}, streaming blocks of q^{suffix}")
    prefix = run_stages(q, np.array([float(eps)]), n - suffix)
    return ChannelProfile(q, n, eps, prefix=prefix, suffix_stages=suffix)

def select_channels(p: ChannelProfile, k: int) -> Tuple[np.ndarray, float]:
    """
    The k channels with the smallest erasure rates, ties broken by smaller index.

    Returns:
        (np.ndarray, float): selected indices in selection order, and the sum of their rates
            (union bound on the block erasure probability)
    """
    if not 0 <= k <= p.size:
        raise PreconditionError(f"k={k} outside [0, {p.size}]")
    if k == 0:
        return np.array([], dtype=np.int64), 0.0
    if not p.is_streaming:
        order = np.argsort(p.rates, kind="stable")[:k]
        return order.astype(np.int64), math.fsum(p.rates[order])
    candidates = (
        (float(rate), start + offset)
        for start, chunk in p.iter_chunks()
        for offset, rate in enumerate(chunk)
    )
    best = heapq.nsmallest(k, candidates)
    indices = np.array([index for _, index in best], dtype=np.int64)
    return indices, math.fsum(rate for rate, _ in best)

def gap_metrics(p: ChannelProfile, query: ScalingQuery, eps: float) -> GapMetrics:
    """
    Fraction of good channels (rate <= N^-gamma) and the gap to 1 - eps.
    The bound is the two-sided scaling estimate of P(X_n >= N^-gamma),
    absent when its hypothesis N^-gamma <= 3/4 fails.
    """
    from sources.lyapunov import theorem1_two_sided

    size = p.size
    threshold = size ** (-query.gamma)
    good = p.count_in(-np.inf, threshold) / size
    gap = (1.0 - eps) - good
    bound = None
    gap_bound = None
    if threshold <= 0.75:
        bound = theorem1_two_sided(p.q, p.n, query.gamma, query.beta, eps)
        gap_bound = bound - eps
    return GapMetrics(q=p.q, n=p.n, eps=eps, threshold=threshold,
                      good_fraction=good, gap=gap, bound=bound, gap_bound=gap_bound)

def sample_chain(q: int, n: int, x0: float, rng: np.random.Generator) -> float:
    """One path of the erasure-rate Markov chain after n uniformly chosen stages."""
    _check_q(q)
    _check_rate(x0)
    x = float(x0)
    for i in rng.integers(0, q, size=n):
        x = float(_tail(int(i), q, x))
    return x

def _chain_block(q: int, n: int, x0: float, seed: int, block: int, size: int) -> np.ndarray:
    rng = np.random.default_rng([seed, block])
    x = np.full(size, float(x0))
    for _ in range(n):
        x = _tail(rng.integers(0, q, size=size), q, x)
    return x

def sample_chain_batch(q: int, n: int, x0: float, trials: int, seed: int,
                       workers: int | None = None, block_size: int | None = None) -> np.ndarray:
    """
    trials independent chain samples. Block b uses the stream default_rng([seed, b])
    so the result does not depend on the number of workers.
    """
    _check_q(q)
    _check_rate(x0)
    if trials < 1:
        raise PreconditionError(f"trials must be >= 1, got {trials}")
    block_size = block_size or get_int("MONTECARLO", "block_size")
    workers = workers or default_workers()
    blocks = [(b, min(block_size, trials - b * block_size)) for b in range(math.ceil(trials / block_size))]
    logger.info(f"chain sampling q={q} n={n} x0={x0} trials={trials} seed={seed} workers={workers}")
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda job: _chain_block(q, n, x0, seed, job[0], job[1]), blocks))
    return np.concatenate(parts)

def unpolarized_fraction_mc(q: int, n: int, x0: float, trials: int, eta: float, seed: int,
                            workers: int | None = None) -> MonteCarloEstimate:
    """Monte Carlo estimate of P(X_n in [eta, 1 - eta])."""
    samples = sample_chain_batch(q, n, x0, trials, seed, workers=workers)
    hits = np.count_nonzero((samples >= eta) & (samples <= 1.0 - eta))
    estimate = hits / trials
    return MonteCarloEstimate(estimate=estimate,
                              stderr=math.sqrt(estimate * (1.0 - estimate) / trials),
                              trials=trials)

if __name__ == "__main__":
    prof = profile(2, 2, 0.5)
    print(prof.values())
    print(select_channels(prof, 2))
