#!/usr/bin/env python3
"""
Transverse-spin dynamics of the Emch-Radin chain
Finite-volume cosine products with boundary corrections, certified
infinite-volume products for nonrandom and random couplings, and sampled
magnetization curves
"""

import math
import logging
from dataclasses import dataclass, field
from functools import partial
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import zeta

from potential import PotentialSpec
from disorder import CouplingField, Distribution, coupling_bound

__version__ = "1.1.0"

logger = logging.getLogger(__name__)

# Block shape when streaming long products
CHUNK_TERMS = 1 << 14
CHUNK_SITES = 64

# Every tail factor has |2 t J eps| <= 1/2, where -log cos x <= x^2/2 (1 + x^2)
MAX_TAIL_ARGUMENT = 0.5
# 4 t^2 J^2 eps^2 per k (two factors) times (1 + 1/4)
TAIL_LOG_CONSTANT = 5.0
MAX_SERIES_TERMS = 60
# Remainder the tail series aims for, below double precision
SERIES_FLOOR = 1e-17


class TruncationFailure(ArithmeticError):
    """The term cap was reached before the tail bound met the tolerance"""

    def __init__(self, t: float, terms: int, achieved_bound: float, tolerance: float):
        self.t = t
        self.terms = terms
        self.achieved_bound = achieved_bound
        self.tolerance = tolerance
        super().__init__(
            f"truncation failed at t={t:g}: {terms} terms reach a tail bound of "
            f"{achieved_bound:.3e}, tolerance is {tolerance:.3e}"
        )


@dataclass(frozen=True)
class InitialState:
    """Product state exp(-gamma sigma^x) per site; delta is its transverse spin"""
    gamma: float

    def __post_init__(self):
        if not math.isfinite(self.gamma):
            raise ValueError(f"gamma must be finite, got {self.gamma}")
        if self.gamma == 0.0:
            logger.warning("gamma = 0 gives delta = 0: every curve is identically zero")

    @property
    def delta(self) -> float:
        return -math.tanh(self.gamma)

    @classmethod
    def from_magnetization(cls, delta: float) -> 'InitialState':
        """Entropy-maximising state with transverse magnetization delta"""
        if not -1.0 < delta < 1.0:
            raise ValueError(f"delta must lie in (-1, 1), got {delta}")
        return cls(-math.atanh(delta))

    def to_config(self) -> Dict[str, float]:
        return {'gamma': self.gamma, 'delta': self.delta}


@dataclass(frozen=True)
class TruncationPolicy:
    """Error contract for infinite products"""
    tolerance: float = 1e-10
    max_terms: int = 10_000_000
    tail_series: bool = True

    def __post_init__(self):
        if not self.tolerance > 0.0:
            raise ValueError(f"tolerance must be > 0, got {self.tolerance}")
        if self.max_terms < 1:
            raise ValueError(f"max_terms must be >= 1, got {self.max_terms}")

    def to_config(self) -> Dict[str, Any]:
        return {'tolerance': self.tolerance, 'max_terms': self.max_terms, 'tail_series': self.tail_series}


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing, non-negative sample times"""
    times: Tuple[float, ...]

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        object.__setattr__(self, 'times', times)
        if not times:
            raise ValueError("time grid is empty")
        for a, b in zip(times, times[1:]):
            if not b > a:
                raise ValueError(f"time grid must be strictly increasing ({a} then {b})")
        if not (math.isfinite(times[-1]) and times[0] >= 0.0):
            raise ValueError("time grid values must be finite and >= 0")

    @classmethod
    def linear(cls, start: float, stop: float, count: int) -> 'TimeGrid':
        if count < 1:
            raise ValueError(f"count must be >= 1, got {count}")
        return cls(tuple(np.linspace(start, stop, count).tolist()))

    @classmethod
    def logarithmic(cls, start: float, stop: float, count: int) -> 'TimeGrid':
        if not start > 0.0:
            raise ValueError("log spacing needs start > 0")
        if count < 1:
            raise ValueError(f"count must be >= 1, got {count}")
        return cls(tuple(np.geomspace(start, stop, count).tolist()))

    def __len__(self) -> int:
        return len(self.times)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.times, dtype=np.float64)


@dataclass(frozen=True)
class TruncationPlan:
    """Where a product is cut and how the tail is handled"""
    terms: int
    tail_log: float        # log of the tail product folded into the value (0 for plain cuts)
    error_log_bound: float  # bound on |log(true tail) - tail_log|
    series_terms: int = 0


@dataclass(frozen=True)
class ProductValue:
    """A cosine product kept in sign / log-magnitude form"""
    value: float
    log_abs: float
    sign: int
    certified_error: float
    terms_used: int


@dataclass
class MagnetizationCurve:
    """Sampled f(t) with its truncation report"""
    grid: TimeGrid
    values: np.ndarray
    log_abs_values: np.ndarray
    certified_errors: np.ndarray
    terms_used: np.ndarray
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return self.grid.as_array()

    def rows(self) -> List[Tuple[float, float, float, float, int]]:
        return [(t, float(v), float(lg), float(e), int(n))
                for t, v, lg, e, n in zip(self.grid.times, self.values, self.log_abs_values,
                                          self.certified_errors, self.terms_used)]


# Product kernel

def _log_cos_row(args: np.ndarray) -> Tuple[float, int, bool]:
    """log|prod cos|, count of negative factors, exact-zero flag for one row"""
    c = np.cos(np.abs(args))
    if np.any(c == 0.0):
        return -math.inf, 0, True
    negatives = int(np.count_nonzero(c < 0.0))
    return float(np.log(np.abs(c)).sum()), negatives, False


def _assemble(log_abs: float, negatives: int, has_zero: bool, plan: TruncationPlan) -> ProductValue:
    if has_zero:
        return ProductValue(0.0, -math.inf, 0, 0.0, plan.terms)
    log_abs = log_abs + plan.tail_log
    sign = -1 if negatives % 2 else 1
    value = sign * math.exp(log_abs)
    error = abs(value) * -math.expm1(-plan.error_log_bound) if plan.error_log_bound > 0.0 else 0.0
    return ProductValue(value, log_abs, sign, error, plan.terms)


def _series_coefficient_log(n: int) -> float:
    """log a_n for -log cos x = sum_n a_n x^(2n), a_n = lambda(2n) (2/pi)^(2n) / n"""
    lam = (1.0 - 2.0 ** (-2 * n)) * float(zeta(2 * n, 1))
    return math.log(lam) + 2 * n * math.log(2.0 / math.pi) - math.log(n)


def _plain_bound(spec: PotentialSpec, t: float, M: int,
                 coupling_scale: float = 1.0) -> Tuple[bool, float]:
    x_max = 2.0 * t * coupling_scale * spec.epsilon(M + 1)
    bound = TAIL_LOG_CONSTANT * t * t * coupling_scale ** 2 * spec.tail_sum_sq(M + 1).upper_bound
    return x_max <= MAX_TAIL_ARGUMENT, bound


def _smallest_terms(accept, max_terms: int) -> Optional[int]:
    """Smallest M in [1, max_terms] with accept(M), assuming accept is monotone"""
    if not accept(max_terms):
        return None
    # lo is the largest M known to fail (0 when none is)
    lo, hi = 0, 1
    while hi < max_terms and not accept(hi):
        lo, hi = hi, min(hi * 2, max_terms)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if accept(mid):
            hi = mid
        else:
            lo = mid
    return hi


def truncation_point(spec: PotentialSpec, t: float, policy: TruncationPolicy,
                     deterministic: bool = True, coupling_scale: float = 1.0) -> TruncationPlan:
    """
    Choose the cut M for a product over k = 1..M at time t.

    Plain cuts take the smallest M whose tail satisfies
    5 t^2 b^2 S(M+1) <= tolerance / 2 and 2 t b eps(M+1) <= 1/2, with S the
    certified tail sum of eps^2 and b = ``coupling_scale`` a hard bound on
    |J|. When every coupling has |J| = 1 (``deterministic``) and the policy
    enables the tail series, the tail log is summed from the series of
    -log cos and the potential's power sums; M then only needs
    2 t eps(M+1) <= 1/2.
    """
    half_tol = policy.tolerance / 2.0
    t = abs(t)

    if deterministic and policy.tail_series:
        M = _smallest_terms(lambda m: 2.0 * t * spec.epsilon(m + 1) <= MAX_TAIL_ARGUMENT, policy.max_terms)
        if M is None:
            _, bound = _plain_bound(spec, t, policy.max_terms)
            raise TruncationFailure(t, policy.max_terms, bound, policy.tolerance)
        return _series_plan(spec, t, M, policy)

    M = _smallest_terms(lambda m: _accept_plain(spec, t, m, half_tol, coupling_scale), policy.max_terms)
    if M is None:
        _, bound = _plain_bound(spec, t, policy.max_terms, coupling_scale)
        raise TruncationFailure(t, policy.max_terms, bound, policy.tolerance)
    _, bound = _plain_bound(spec, t, M, coupling_scale)
    return TruncationPlan(M, 0.0, bound)


def _accept_plain(spec: PotentialSpec, t: float, m: int, half_tol: float, coupling_scale: float) -> bool:
    small, bound = _plain_bound(spec, t, m, coupling_scale)
    return small and bound <= half_tol


def _series_plan(spec: PotentialSpec, t: float, M: int, policy: TruncationPolicy) -> TruncationPlan:
    z1 = spec.tail_sum_sq(M + 1)
    if t == 0.0 or z1.upper_bound == 0.0:
        return TruncationPlan(M, 0.0, 0.0)

    x_max = 2.0 * t * spec.epsilon(M + 1)
    q = (2.0 * x_max / math.pi) ** 2
    scale = 4.0 * t * t * z1.upper_bound / (1.0 - q)
    half_tol = policy.tolerance / 2.0

    # summed to double precision when the term cap allows; the tolerance is only the ceiling
    target = min(half_tol, SERIES_FLOOR)
    n_terms, remainder = 0, math.inf
    for n in range(1, MAX_SERIES_TERMS + 1):
        n_terms, remainder = n, scale * q ** n / (n + 1)
        if remainder <= target:
            break
    if remainder > half_tol:
        raise TruncationFailure(t, M, remainder, policy.tolerance)

    log_two_t = math.log(2.0 * t)
    total = 0.0
    for n in range(1, n_terms + 1):
        zn = spec.tail_sum_pow(M + 1, 2 * n).value
        if zn <= 0.0:
            break
        # two cosine factors per k
        total += 2.0 * math.exp(_series_coefficient_log(n) + 2 * n * log_two_t + math.log(zn))
    return TruncationPlan(M, -total, remainder, n_terms)


# Products

def _block_logs(two_t: float, j_right: np.ndarray, j_left: np.ndarray,
                eps: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-row log|prod|, negative-factor count and exact-zero flag for one block; rows are sites"""
    c = np.cos(np.abs(np.concatenate((two_t * j_right * eps, two_t * j_left * eps), axis=1)))
    zero = np.any(c == 0.0, axis=1)
    negatives = np.count_nonzero(c < 0.0, axis=1)
    with np.errstate(divide='ignore'):
        logs = np.log(np.abs(c)).sum(axis=1)
    return logs, negatives, zero


def _products(spec: PotentialSpec, t: float, M: int, sites: np.ndarray,
              field_: Optional[CouplingField]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Unnormalised log products over k = 1..M for every site.

    Streams blocks of CHUNK_TERMS distances by CHUNK_SITES sites; block
    boundaries never depend on how many sites are requested, so a site's
    value is the same alone or in a window.
    """
    two_t = 2.0 * t
    log_abs = np.zeros(len(sites))
    negatives = np.zeros(len(sites), dtype=np.int64)
    zero = np.zeros(len(sites), dtype=bool)
    for start in range(1, M + 1, CHUNK_TERMS):
        ks = np.arange(start, min(start + CHUNK_TERMS, M + 1), dtype=np.int64)
        eps = spec.epsilon_array(ks)
        for first in range(0, len(sites), CHUNK_SITES):
            rows = slice(first, first + CHUNK_SITES)
            s = sites[rows, None]
            if field_ is None:
                j_right = j_left = np.ones((len(s), 1))
            else:
                j_right = field_.band(s, ks[None, :])
                j_left = field_.band(s - ks[None, :], ks[None, :])
            block_logs, block_negatives, block_zero = _block_logs(two_t, j_right, j_left, eps)
            log_abs[rows] += block_logs
            negatives[rows] += block_negatives
            zero[rows] |= block_zero
    return log_abs, negatives, zero


def nonrandom_product(spec: PotentialSpec, t: float, policy: TruncationPolicy) -> ProductValue:
    """Certified infinite product of cos^2(2 eps(k) t)"""
    plan = truncation_point(spec, t, policy, deterministic=True)
    log_abs, negatives, zero = _products(spec, t, plan.terms, np.zeros(1, dtype=np.int64), None)
    return _assemble(float(log_abs[0]), int(negatives[0]), bool(zero[0]), plan)


def wp_sites(field_: CouplingField, spec: PotentialSpec, sites: Sequence[int], t: float,
             policy: TruncationPolicy) -> List[ProductValue]:
    """
    Certified site products for a block of sites sharing one truncation plan.

    Gaussian tails are bounded with the generator's hard cap on |J|.
    """
    if t < 0.0:
        raise ValueError(f"t must be >= 0, got {t}")
    deterministic = field_.distribution is Distribution.BERNOULLI
    scale = coupling_bound(field_.distribution)
    plan = truncation_point(spec, t, policy, deterministic=deterministic, coupling_scale=scale)
    if not deterministic:
        logger.debug(f"gaussian plan at t={t:g}: {plan.terms} terms for |J| <= {scale:.4f}, "
                     f"log tail bound {plan.error_log_bound:.3e}")
    site_arr = np.asarray(sites, dtype=np.int64)
    log_abs, negatives, zero = _products(spec, t, plan.terms, site_arr, field_)
    return [_assemble(float(a), int(n), bool(z), plan) for a, n, z in zip(log_abs, negatives, zero)]


def wp_site(field_: CouplingField, spec: PotentialSpec, i: int, t: float,
            policy: TruncationPolicy) -> ProductValue:
    """Certified product of cos(2tJ(i,i+k)eps(k)) cos(2tJ(i-k,i)eps(k)) over k >= 1"""
    return wp_sites(field_, spec, [i], t, policy)[0]


def nonrandom_finite(spec: PotentialSpec, state: InitialState, B: float, n: int, t: float) -> float:
    """delta * prod_{j=1..n} cos^2(2 eps(j) t) * cos(2 B t) on the symmetric volume [-n, n]"""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if t < 0.0:
        raise ValueError(f"t must be >= 0, got {t}")
    eps = spec.epsilon_array(np.arange(1, n + 1))
    args = 2.0 * t * eps
    log_abs, negatives, zero = _log_cos_row(np.concatenate((args[:, None], args[:, None]), axis=1).ravel())
    if zero:
        return 0.0
    product = math.exp(log_abs) * (-1.0 if negatives % 2 else 1.0)
    return state.delta * product * math.cos(2.0 * B * t)


def random_finite(field_: CouplingField, spec: PotentialSpec, i0: int, n: int, t: float) -> float:
    """
    Finite-volume site product divided by delta.

    Site i0 in [-n, n] keeps cos(2tJ(i0,i0+k)eps(k)) only while i0+k <= n and
    cos(2tJ(i0-k,i0)eps(k)) only while i0-k >= -n; near an edge one cosine per
    distance drops out.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if abs(i0) > n:
        raise ValueError(f"site {i0} lies outside the volume [-{n}, {n}]")
    if t < 0.0:
        raise ValueError(f"t must be >= 0, got {t}")
    k_right = np.arange(1, n - i0 + 1, dtype=np.int64)
    k_left = np.arange(1, n + i0 + 1, dtype=np.int64)
    args = []
    if len(k_right):
        args.append(2.0 * t * field_.couplings(i0, i0 + k_right) * spec.epsilon_array(k_right))
    if len(k_left):
        args.append(2.0 * t * field_.couplings(i0 - k_left, i0) * spec.epsilon_array(k_left))
    if not args:
        return 1.0
    log_abs, negatives, zero = _log_cos_row(np.concatenate(args))
    if zero:
        return 0.0
    return math.exp(log_abs) * (-1.0 if negatives % 2 else 1.0)


def volume_tail_bound(spec: PotentialSpec, n: int, t: float,
                      distribution: Optional[Distribution] = None) -> float:
    """
    Bound on |log| of the factors a volume of half-width n leaves out at the centre site.

    Without a distribution the couplings are taken as |J| <= 1.
    """
    scale = 1.0 if distribution is None else coupling_bound(distribution)
    small, bound = _plain_bound(spec, t, n, scale)
    return bound if small else math.inf


# Curves

def _curve_point(t: float, spec: PotentialSpec, field_: Optional[CouplingField], site: int,
                 policy: TruncationPolicy) -> ProductValue:
    if field_ is None:
        return nonrandom_product(spec, t, policy)
    return wp_site(field_, spec, site, t, policy)


def curve(field_: Optional[CouplingField], spec: PotentialSpec, state: InitialState, B: float,
          grid: TimeGrid, policy: TruncationPolicy, site: int = 0, pool=None) -> MagnetizationCurve:
    """
    Transverse magnetization delta * wp(t) * cos(2Bt) on a time grid.

    ``field_`` None selects the nonrandom model. Points are independent and
    may be farmed out to a WorkerPool; results come back in grid order.
    """
    worker = partial(_curve_point, spec=spec, field_=field_, site=site, policy=policy)
    times = list(grid.times)
    try:
        points = pool.map(worker, times) if pool is not None else [worker(t) for t in times]
    except TruncationFailure as e:
        logger.error(f"curve truncation failed at t={e.t:g}")
        raise

    delta = state.delta
    values, logs, errors, terms = [], [], [], []
    for t, p in zip(times, points):
        field_factor = math.cos(2.0 * B * t)
        scale = delta * field_factor
        values.append(scale * p.value)
        magnitude = abs(scale)
        logs.append(p.log_abs + math.log(magnitude) if magnitude > 0.0 and p.sign != 0 else -math.inf)
        errors.append(magnitude * p.certified_error)
        terms.append(p.terms_used)

    metadata = {
        'model': 'nonrandom' if field_ is None else 'random',
        'potential': spec.to_config(),
        'disorder': None if field_ is None else field_.spec.to_config(),
        'sample_index': None if field_ is None else field_.sample_index,
        'site': site,
        'initial_state': state.to_config(),
        'B': B,
        'truncation': policy.to_config(),
        'max_terms_used': int(max(terms)),
        'max_certified_error': float(max(errors)),
    }
    logger.info(f"curve: {len(times)} points, {metadata['model']} {spec.describe()}, "
                f"max terms {metadata['max_terms_used']}")
    return MagnetizationCurve(grid, np.asarray(values), np.asarray(logs), np.asarray(errors),
                              np.asarray(terms, dtype=np.int64), metadata)
