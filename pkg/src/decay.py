#!/usr/bin/env python3
"""
Decay-law analysis for magnetization curves
Vieta reference, window-maximum envelopes, exponential-bound classifier,
stretched-exponent and decay-law fits, and the f_B / f_G ratio
"""

import math
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats
from scipy.optimize import curve_fit

from potential import PotentialSpec
from disorder import Distribution
from dynamics import MagnetizationCurve, TruncationPolicy
from averaging import analytic_log_average

__version__ = "1.0.0"

logger = logging.getLogger(__name__)

MIN_CLASSIFIER_POINTS = 10
MIN_FIT_POINTS = 10
# largest argument math.exp accepts
_LOG_DOUBLE_MAX = 709.782712893384


class EmptyCurveError(ValueError):
    """A curve with no samples was handed to envelope extraction"""


class InsufficientData(ValueError):
    """Too few envelope points for a fit or classification"""

    def __init__(self, needed: int, available: int, what: str):
        self.needed = needed
        self.available = available
        super().__init__(f"{what} needs at least {needed} envelope points, {available} available")


class NonDecayingInput(ValueError):
    """The envelope is not eventually decreasing"""


class DecayClass(Enum):
    SUB_EXPONENTIAL = "SubExponential"
    EXPONENTIAL_COMPATIBLE = "ExponentialCompatible"
    SUPER_EXPONENTIAL = "SuperExponential"


class DecayLaw(Enum):
    EXPONENTIAL = "Exponential"        # log C - r t
    STRETCHED_EXP = "StretchedExp"     # log C - d t^p + c log t
    QUADRATIC_EXP = "QuadraticExp"     # log C - s t^2
    ALGEBRAIC = "Algebraic"            # log C - a log t


@dataclass(frozen=True)
class EnvelopePoint:
    t_center: float
    t_peak: float
    value: float
    log_value: float


@dataclass
class Envelope:
    """Window maxima of |f|, with the number of windows dropped under the floor"""
    points: List[EnvelopePoint]
    window_width: float
    dropped: int = 0

    def __len__(self) -> int:
        return len(self.points)

    def select(self, t_min: float = -math.inf, t_max: float = math.inf) -> List[EnvelopePoint]:
        return [p for p in self.points if t_min <= p.t_peak <= t_max]

    def rows(self) -> List[Tuple[float, float, float, float]]:
        return [(p.t_center, p.t_peak, p.value, p.log_value) for p in self.points]


@dataclass
class ClassifierThresholds:
    """Late/early slope ratios separating the three decay classes"""
    lower_ratio: float = 0.85
    upper_ratio: float = 1.15

    def __post_init__(self):
        if not 0.0 < self.lower_ratio <= 1.0 <= self.upper_ratio:
            raise ValueError(f"classifier ratios must satisfy 0 < lower <= 1 <= upper, "
                             f"got {self.lower_ratio}, {self.upper_ratio}")


@dataclass
class Classification:
    verdict: DecayClass
    early_slope: float
    late_slope: float
    slope_ratio: float
    points_used: int

    def to_dict(self) -> Dict[str, Any]:
        return {'verdict': self.verdict.value, 'early_slope': self.early_slope,
                'late_slope': self.late_slope, 'slope_ratio': self.slope_ratio,
                'points_used': self.points_used}


@dataclass(frozen=True)
class StretchedFit:
    exponent: float
    rate: float
    r_squared: float


@dataclass
class EnvelopeFit:
    """A decay law fitted to log envelope maxima; C, d, c are the bound's free constants"""
    window_maxima: List[Tuple[float, float]]
    law: DecayLaw
    parameters: Dict[str, float]
    residual: float
    C: float
    d: float
    c: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {'law': self.law.value, 'parameters': self.parameters, 'residual': self.residual,
                'C': self.C, 'd': self.d, 'c': self.c, 'points': len(self.window_maxima)}


@dataclass(frozen=True)
class RatioRow:
    t: float
    f_b: float
    f_g: float
    ratio: float
    log_ratio: float
    division_underflow: bool


def vieta_reference(t: float) -> float:
    """(sin t / t)^2, equal to 1 at t = 0"""
    if t == 0.0:
        return 1.0
    s = math.sin(t) / t
    return s * s


# Envelopes

def envelope_from_log_samples(times: Sequence[float], log_abs: Sequence[float], window_width: float = 2.0,
                              floor: float = 1e-300) -> Envelope:
    """
    Maximum of log|f| over windows [t0 + w j, t0 + w (j+1)).

    Windows whose maximum is an exact zero or lies below ``floor`` are
    dropped and counted; floor = 0 keeps every nonzero window.
    """
    times = np.asarray(times, dtype=np.float64)
    log_abs = np.asarray(log_abs, dtype=np.float64)
    if times.size == 0:
        raise EmptyCurveError("cannot take the envelope of an empty curve")
    if times.shape != log_abs.shape:
        raise ValueError(f"times and values differ in length ({times.size} vs {log_abs.size})")
    if not window_width > 0.0:
        raise ValueError(f"window_width must be > 0, got {window_width}")
    if floor < 0.0:
        raise ValueError(f"floor must be >= 0, got {floor}")

    t0 = float(times[0])
    index = np.floor((times - t0) / window_width).astype(np.int64)
    windows = int(index[-1]) + 1
    if windows < 3:
        raise InsufficientData(3, windows, "envelope extraction (windows)")

    log_floor = math.log(floor) if floor > 0.0 else -math.inf
    points, dropped = [], 0
    starts = np.searchsorted(index, np.arange(windows), side='left')
    ends = np.searchsorted(index, np.arange(windows), side='right')
    for j in range(windows):
        lo, hi = starts[j], ends[j]
        if lo == hi:
            continue
        peak = lo + int(np.argmax(log_abs[lo:hi]))
        log_max = float(log_abs[peak])
        if log_max == -math.inf or log_max < log_floor:
            dropped += 1
            continue
        points.append(EnvelopePoint(t0 + window_width * (j + 0.5), float(times[peak]),
                                    math.exp(log_max), log_max))
    if dropped:
        logger.warning(f"envelope dropped {dropped} window(s) below the floor {floor:g}")
    return Envelope(points, window_width, dropped)


def envelope_from_samples(times: Sequence[float], values: Sequence[float], window_width: float = 2.0,
                          floor: float = 1e-300) -> Envelope:
    with np.errstate(divide='ignore'):
        log_abs = np.log(np.abs(np.asarray(values, dtype=np.float64)))
    return envelope_from_log_samples(times, log_abs, window_width, floor)


def envelope(curve: MagnetizationCurve, window_width: float = 2.0, floor: float = 1e-300) -> Envelope:
    """Window maxima of |f| for a computed curve, taken on its log magnitudes"""
    if len(curve.grid) == 0:
        raise EmptyCurveError("cannot take the envelope of an empty curve")
    return envelope_from_log_samples(curve.times, curve.log_abs_values, window_width, floor)


# Classification and fits

def _slope(x: np.ndarray, y: np.ndarray) -> float:
    return float(stats.linregress(x, y).slope)


def exponential_bound_test(env: Envelope, t_min: float = 0.0,
                           thresholds: Optional[ClassifierThresholds] = None) -> Classification:
    """
    Compare the decay rate of log max|f| early and late.

    The points with t >= t_min are split into halves and log(max) is
    regressed on t in each; r = late / early slope. r above the upper ratio
    means the rate keeps growing (SuperExponential), below the lower ratio or
    a non-negative early slope means it fades (SubExponential), otherwise the
    rate is stable (ExponentialCompatible).
    """
    thresholds = thresholds or ClassifierThresholds()
    points = env.select(t_min)
    if len(points) < MIN_CLASSIFIER_POINTS:
        raise InsufficientData(MIN_CLASSIFIER_POINTS, len(points), "exponential bound test")

    t = np.array([p.t_peak for p in points])
    y = np.array([p.log_value for p in points])
    half = len(points) // 2
    early = _slope(t[:half], y[:half])
    late = _slope(t[half:], y[half:])

    if early >= 0.0:
        ratio = math.nan
        verdict = DecayClass.SUB_EXPONENTIAL
    else:
        ratio = late / early
        if ratio > thresholds.upper_ratio:
            verdict = DecayClass.SUPER_EXPONENTIAL
        elif ratio < thresholds.lower_ratio:
            verdict = DecayClass.SUB_EXPONENTIAL
        else:
            verdict = DecayClass.EXPONENTIAL_COMPATIBLE

    logger.info(f"classifier: early slope {early:.4g}, late slope {late:.4g} -> {verdict.value}")
    return Classification(verdict, early, late, ratio, len(points))


def stretched_exponent_fit(env: Envelope, t_range: Tuple[float, float]) -> StretchedFit:
    """
    Fit max|f| ~ C0 exp(-rate t^p) by regressing log(-log(max/C0)) on log t.

    C0 is the first envelope value; points at or above it carry no decay
    information and are skipped.
    """
    if not env.points:
        raise InsufficientData(MIN_FIT_POINTS, 0, "stretched exponent fit")
    log_c0 = env.points[0].log_value
    in_range = env.select(*t_range)
    usable = [p for p in in_range if p.log_value < log_c0 and p.t_peak > 0.0]
    if len(usable) < MIN_FIT_POINTS:
        raise InsufficientData(MIN_FIT_POINTS, len(usable), "stretched exponent fit")

    t = np.array([p.t_peak for p in usable])
    y = np.array([p.log_value for p in usable])
    tail = max(2, len(usable) // 3)
    if _slope(t[-tail:], y[-tail:]) >= 0.0:
        raise NonDecayingInput(f"envelope is not decreasing over the last {tail} points of {t_range}")

    result = stats.linregress(np.log(t), np.log(log_c0 - y))
    return StretchedFit(float(result.slope), float(math.exp(result.intercept)), float(result.rvalue ** 2))


def _law_model(law: DecayLaw):
    if law is DecayLaw.EXPONENTIAL:
        return (lambda t, log_c, r: log_c - r * t), ['log_C', 'rate']
    if law is DecayLaw.STRETCHED_EXP:
        return (lambda t, log_c, d, p, c: log_c - d * t ** p + c * np.log(t)), ['log_C', 'd', 'p', 'c']
    if law is DecayLaw.QUADRATIC_EXP:
        return (lambda t, log_c, s: log_c - s * t * t), ['log_C', 'scale']
    return (lambda t, log_c, a: log_c - a * np.log(t)), ['log_C', 'power']


def _initial_guess(law: DecayLaw, t: np.ndarray, y: np.ndarray) -> List[float]:
    if law is DecayLaw.STRETCHED_EXP:
        drop = np.maximum(y[0] - y, 1e-12)
        fit = stats.linregress(np.log(t[1:]), np.log(drop[1:])) if len(t) > 2 else None
        p = float(np.clip(fit.slope, 0.2, 4.0)) if fit is not None and np.isfinite(fit.slope) else 1.0
        d = max(float(drop[-1]) / float(t[-1]) ** p, 1e-12)
        return [float(y[0]) + d * float(t[0]) ** p, d, p, 0.0]
    if law is DecayLaw.EXPONENTIAL:
        x = t
    elif law is DecayLaw.QUADRATIC_EXP:
        x = t * t
    else:
        x = np.log(t)
    fit = stats.linregress(x, y)
    return [float(fit.intercept), -float(fit.slope)]


def fit_decay_law(env: Envelope, law: DecayLaw, t_range: Tuple[float, float]) -> EnvelopeFit:
    """Least-squares fit of one decay law to log max|f| over t_range"""
    points = [p for p in env.select(*t_range) if p.t_peak > 0.0]
    if len(points) < MIN_FIT_POINTS:
        raise InsufficientData(MIN_FIT_POINTS, len(points), f"{law.value} fit")
    t = np.array([p.t_peak for p in points])
    y = np.array([p.log_value for p in points])

    model, names = _law_model(law)
    p0 = _initial_guess(law, t, y)
    if law is DecayLaw.STRETCHED_EXP:
        bounds = ([-np.inf, 0.0, 0.05, -np.inf], [np.inf, np.inf, 6.0, np.inf])
        params, _ = curve_fit(model, t, y, p0=p0, bounds=bounds, maxfev=20000)
    else:
        params, _ = curve_fit(model, t, y, p0=p0, maxfev=20000)

    residual = float(np.sqrt(np.mean((model(t, *params) - y) ** 2)))
    values = dict(zip(names, (float(v) for v in params)))
    log_c = values['log_C']
    C = math.exp(log_c) if log_c < _LOG_DOUBLE_MAX else math.inf
    d = values.get('d', values.get('rate', values.get('scale', values.get('power', 0.0))))
    return EnvelopeFit([(p.t_center, p.value) for p in points], law, values, residual, C, d, values.get('c', 0.0))


def best_decay_law(env: Envelope, t_range: Tuple[float, float]) -> EnvelopeFit:
    """The law with the smallest residual among those that converge"""
    fits = []
    for law in DecayLaw:
        try:
            fits.append(fit_decay_law(env, law, t_range))
        except InsufficientData:
            raise
        except (RuntimeError, ValueError) as e:
            logger.warning(f"{law.value} fit did not converge: {e}")
    if not fits:
        raise InsufficientData(MIN_FIT_POINTS, 0, "decay law selection (no fit converged)")
    return min(fits, key=lambda f: f.residual)


def bernoulli_envelope_prediction(alpha: float) -> Tuple[float, float]:
    """
    (exponent, d) of the lower envelope exp(-d t^(1/alpha)) of f_B for
    eps(k) = k^-alpha, with d = 8 * 2^((1 - 2 alpha) / alpha) / (2 alpha - 1)
    """
    if not alpha > 0.5:
        raise ValueError(f"alpha must be > 1/2, got {alpha}")
    return 1.0 / alpha, 8.0 * 2.0 ** ((1.0 - 2.0 * alpha) / alpha) / (2.0 * alpha - 1.0)


# Ratio

def ratio_divergence(spec: PotentialSpec, t_grid: Sequence[float], policy: TruncationPolicy) -> List[RatioRow]:
    """f_B(t) / f_G(t) pointwise, computed from log magnitudes"""
    rows = []
    underflows = 0
    for t in t_grid:
        t = float(t)
        log_b, sign_b = analytic_log_average(spec, Distribution.BERNOULLI, t, policy)
        log_g, _ = analytic_log_average(spec, Distribution.GAUSSIAN, t, policy)
        f_b = sign_b * math.exp(log_b) if sign_b else 0.0
        f_g = math.exp(log_g)

        if sign_b == 0:
            log_ratio, ratio = -math.inf, 0.0
        else:
            log_ratio = log_b - log_g
            ratio = sign_b * (math.exp(log_ratio) if log_ratio < _LOG_DOUBLE_MAX else math.inf)

        underflow = f_g == 0.0 and f_b != 0.0
        if underflow:
            ratio = math.copysign(math.inf, sign_b)
            underflows += 1
        rows.append(RatioRow(t, f_b, f_g, ratio, log_ratio, underflow))

    if underflows:
        logger.warning(f"f_G underflowed before f_B at {underflows} point(s); ratio reported as inf, log ratio kept")
    return rows


def ratio_on_envelope(spec: PotentialSpec, curve_b: MagnetizationCurve, policy: TruncationPolicy,
                      window_width: float = 2.0, floor: float = 0.0) -> Tuple[Envelope, List[RatioRow]]:
    """Ratio sampled at the envelope peaks of a nonrandom / Bernoulli curve, away from cosine zeros"""
    env = envelope(curve_b, window_width, floor)
    return env, ratio_divergence(spec, [p.t_peak for p in env.points], policy)
