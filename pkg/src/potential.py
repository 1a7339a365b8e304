#!/usr/bin/env python3
"""
Lattice potentials for the spinfade laboratory
Power-law, dyadic and tabulated couplings eps(k) with summability classes
and certified tail sums
"""

import math
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy.special import zeta

__version__ = "1.0.0"

logger = logging.getLogger(__name__)


class PotentialFamily(Enum):
    """Supported potential families"""
    POWER_LAW = "power_law"
    DYADIC = "dyadic"
    CUSTOM = "custom"


class SummabilityClass(Enum):
    """Where eps sits between l1 and l2"""
    L1 = "L1"
    L2_ONLY = "L2Only"
    NEITHER = "Neither"


@dataclass(frozen=True)
class TailSum:
    """Approximate tail value with a certified overestimate"""
    value: float
    upper_bound: float


@dataclass(frozen=True)
class PotentialSpec:
    """
    Lattice potential eps(k) on the non-negative integers.

    eps(0) = 0 always; for k >= 1 the values are non-negative and
    non-increasing. Power laws need alpha > 1/2 unless ``allow_non_l2`` is
    set, which exists for diagnostics only.
    """
    family: PotentialFamily
    alpha: Optional[float] = None
    values: Tuple[float, ...] = field(default_factory=tuple)
    allow_non_l2: bool = False

    def __post_init__(self):
        if self.family is PotentialFamily.POWER_LAW:
            if self.alpha is None or not math.isfinite(self.alpha):
                raise ValueError("power_law potential needs a finite alpha")
            floor = 0.0 if self.allow_non_l2 else 0.5
            if self.alpha <= floor:
                raise ValueError(f"power_law alpha must be > {floor}, got {self.alpha}")
        elif self.family is PotentialFamily.CUSTOM:
            values = tuple(float(v) for v in self.values)
            object.__setattr__(self, 'values', values)
            previous = math.inf
            for k, v in enumerate(values, start=1):
                if not math.isfinite(v) or v < 0.0:
                    raise ValueError(f"custom potential value eps({k})={v} must be finite and >= 0")
                if v > previous:
                    raise ValueError(f"custom potential must be non-increasing: eps({k})={v} > eps({k - 1})={previous}")
                previous = v

    # Constructors

    @classmethod
    def power_law(cls, alpha: float, allow_non_l2: bool = False) -> 'PotentialSpec':
        return cls(PotentialFamily.POWER_LAW, alpha=float(alpha), allow_non_l2=allow_non_l2)

    @classmethod
    def dyadic(cls) -> 'PotentialSpec':
        return cls(PotentialFamily.DYADIC)

    @classmethod
    def custom(cls, values) -> 'PotentialSpec':
        return cls(PotentialFamily.CUSTOM, values=tuple(values))

    @classmethod
    def from_config(cls, record: Dict[str, Any]) -> 'PotentialSpec':
        """Build from the tagged config record {"family": ..., ...}"""
        if not isinstance(record, dict) or 'family' not in record:
            raise ValueError("potential record needs a 'family' key")
        family = record['family']
        allowed = {'power_law': {'family', 'alpha', 'allow_non_l2'},
                   'dyadic': {'family'},
                   'custom': {'family', 'values'}}
        if family not in allowed:
            raise ValueError(f"unknown potential family '{family}' (expected one of {sorted(allowed)})")
        extra = set(record) - allowed[family]
        if extra:
            raise ValueError(f"unexpected keys for {family} potential: {sorted(extra)}")
        if family == 'power_law':
            if 'alpha' not in record:
                raise ValueError("power_law potential needs 'alpha'")
            return cls.power_law(record['alpha'], bool(record.get('allow_non_l2', False)))
        if family == 'dyadic':
            return cls.dyadic()
        return cls.custom(record.get('values', []))

    def to_config(self) -> Dict[str, Any]:
        if self.family is PotentialFamily.POWER_LAW:
            record = {'family': 'power_law', 'alpha': self.alpha}
            if self.allow_non_l2:
                record['allow_non_l2'] = True
            return record
        if self.family is PotentialFamily.DYADIC:
            return {'family': 'dyadic'}
        return {'family': 'custom', 'values': list(self.values)}

    # Evaluation

    def epsilon(self, k: int) -> float:
        """eps(k); zero at k = 0 and past the end of a custom table"""
        if k < 0:
            raise ValueError(f"k must be >= 0, got {k}")
        if k == 0:
            return 0.0
        if self.family is PotentialFamily.POWER_LAW:
            return float(k) ** -self.alpha
        if self.family is PotentialFamily.DYADIC:
            return math.ldexp(1.0, -k - 1)
        return self.values[k - 1] if k <= len(self.values) else 0.0

    def epsilon_array(self, ks) -> np.ndarray:
        """Vectorised eps over an integer array, same values as epsilon()"""
        ks = np.asarray(ks, dtype=np.int64)
        if ks.size and ks.min() < 0:
            raise ValueError("k must be >= 0")
        out = np.zeros(ks.shape, dtype=np.float64)
        positive = ks > 0
        if self.family is PotentialFamily.POWER_LAW:
            out[positive] = ks[positive].astype(np.float64) ** -self.alpha
        elif self.family is PotentialFamily.DYADIC:
            out[positive] = np.ldexp(1.0, (-ks[positive] - 1).astype(np.int32))
        else:
            table = np.concatenate(([0.0], np.asarray(self.values, dtype=np.float64)))
            inside = positive & (ks <= len(self.values))
            out[inside] = table[ks[inside]]
        return out

    def classify(self) -> SummabilityClass:
        """Summability class of eps, decided analytically"""
        if self.family is PotentialFamily.POWER_LAW:
            if self.alpha > 1.0:
                return SummabilityClass.L1
            if self.alpha > 0.5:
                return SummabilityClass.L2_ONLY
            return SummabilityClass.NEITHER
        return SummabilityClass.L1

    def tail_sum_sq(self, M: int) -> TailSum:
        """Sum of eps(k)^2 over k >= M"""
        return self.tail_sum_pow(M, 2)

    def tail_sum_pow(self, M: int, power: int) -> TailSum:
        """
        Sum of eps(k)**power over k >= M with a certified upper bound.

        Dyadic tails are closed geometric sums. Power-law tails use the
        Hurwitz zeta function for the value and eps(M)^p plus the integral
        of x^(-p*alpha) from M to infinity for the bound. Custom tables are
        finite sums.
        """
        if M < 1:
            raise ValueError(f"tail start M must be >= 1, got {M}")
        if power < 1:
            raise ValueError(f"power must be >= 1, got {power}")

        if self.family is PotentialFamily.DYADIC:
            # sum_{k>=M} 2^{-p(k+1)} = 2^{-p(M+1)} / (1 - 2^{-p})
            value = math.ldexp(1.0, -power * (M + 1)) / (1.0 - math.ldexp(1.0, -power))
            return TailSum(value, value)

        if self.family is PotentialFamily.CUSTOM:
            value = math.fsum(v ** power for v in self.values[M - 1:])
            return TailSum(value, value)

        exponent = power * self.alpha
        if exponent <= 1.0:
            return TailSum(math.inf, math.inf)
        value = float(zeta(exponent, M))
        upper = float(M) ** -exponent + float(M) ** (1.0 - exponent) / (exponent - 1.0)
        # keep the documented ordering when zeta rounds above the bound
        return TailSum(min(value, upper), upper)

    def sum_sq(self) -> float:
        """Full sum of eps(k)^2, k >= 1"""
        return self.tail_sum_sq(1).value

    def describe(self) -> str:
        if self.family is PotentialFamily.POWER_LAW:
            return f"power_law(alpha={self.alpha:g})"
        if self.family is PotentialFamily.DYADIC:
            return "dyadic"
        return f"custom({len(self.values)} values)"
