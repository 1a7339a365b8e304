#!/usr/bin/env python3
"""
Random coupling configurations for the disordered spin chain
Bernoulli and Gaussian J(i,j) generated by keyed counter-based hashing,
so every coupling is a pure function of (seed, sample, pair)
"""

import math
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional

import numpy as np
from scipy.special import factorial2, ndtri

__version__ = "1.1.0"

logger = logging.getLogger(__name__)

# SplitMix64 constants
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U64_MAX = (1 << 64) - 1

# uniforms are (m + 1/2) * 2^-52 with m a 52-bit integer: exact, symmetric, never 0 or 1
_UNIFORM_SHIFT = np.uint64(12)
_UNIFORM_SCALE = 2.0 ** -52
_GAUSSIAN_SCALE = math.sqrt(0.5)


class Distribution(Enum):
    """Coupling distributions; both have mean zero"""
    BERNOULLI = "bernoulli"  # +1 / -1 with probability 1/2
    GAUSSIAN = "gaussian"    # mean 0, variance 1/2, density exp(-x^2)/sqrt(pi)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    z = x + _GOLDEN
    z ^= z >> np.uint64(30)
    z *= _MIX1
    z ^= z >> np.uint64(27)
    z *= _MIX2
    z ^= z >> np.uint64(31)
    return z


def _as_u64(sites) -> np.ndarray:
    # two's complement view keeps negative sites distinct
    return np.atleast_1d(np.asarray(sites, dtype=np.int64)).view(np.uint64)


def moment(distribution: Distribution, n: int) -> float:
    """Exact n-th moment of the coupling distribution"""
    if n < 1:
        raise ValueError(f"moment order must be >= 1, got {n}")
    if n % 2 == 1:
        return 0.0
    if distribution is Distribution.BERNOULLI:
        return 1.0
    half = n // 2
    return float(factorial2(n - 1, exact=True)) * 2.0 ** -half


def coupling_bound(distribution: Distribution) -> float:
    """Largest |J| the generator can emit"""
    if distribution is Distribution.BERNOULLI:
        return 1.0
    return float(ndtri(1.0 - _UNIFORM_SCALE / 2.0)) * _GAUSSIAN_SCALE


@dataclass(frozen=True)
class DisorderSpec:
    """Coupling distribution plus the master seed of the experiment"""
    distribution: Distribution
    master_seed: int = 0

    def __post_init__(self):
        if not 0 <= int(self.master_seed) <= _U64_MAX:
            raise ValueError(f"master_seed must be an unsigned 64-bit integer, got {self.master_seed}")

    @classmethod
    def from_config(cls, record: Dict[str, Any]) -> 'DisorderSpec':
        if not isinstance(record, dict):
            raise ValueError("disorder record must be an object")
        extra = set(record) - {'distribution', 'seed'}
        if extra:
            raise ValueError(f"unexpected disorder keys: {sorted(extra)}")
        try:
            distribution = Distribution(record.get('distribution'))
        except ValueError:
            raise ValueError(f"unknown distribution {record.get('distribution')!r} (expected 'bernoulli' or 'gaussian')")
        seed = record.get('seed', 0)
        if isinstance(seed, bool) or not isinstance(seed, int):
            raise ValueError(f"seed must be an integer, got {seed!r}")
        return cls(distribution, seed)

    def to_config(self) -> Dict[str, Any]:
        return {'distribution': self.distribution.value, 'seed': int(self.master_seed)}

    def moment(self, n: int) -> float:
        return moment(self.distribution, n)

    def field(self) -> 'CouplingField':
        """The configuration keyed by the master seed alone"""
        return CouplingField.create(self, None)

    def fork_sample(self, sample_index: int) -> 'CouplingField':
        return fork_sample(self, sample_index)


@dataclass(frozen=True)
class CouplingField:
    """
    One disorder configuration J(i,j) over all unordered site pairs.

    The 128-bit key comes from numpy's SeedSequence over the master seed and
    the sample index; a pair's value hashes (key, min, max) through two
    SplitMix64 rounds, so lookups are order independent and symmetric.
    """
    spec: DisorderSpec
    sample_index: Optional[int]
    key0: int
    key1: int

    @classmethod
    def create(cls, spec: DisorderSpec, sample_index: Optional[int]) -> 'CouplingField':
        spawn_key = () if sample_index is None else (int(sample_index),)
        seq = np.random.SeedSequence(int(spec.master_seed), spawn_key=spawn_key)
        key0, key1 = (int(word) for word in seq.generate_state(2, dtype=np.uint64))
        return cls(spec, sample_index, key0, key1)

    @property
    def distribution(self) -> Distribution:
        return self.spec.distribution

    def _words(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        with np.errstate(over='ignore'):
            h = _splitmix64(lo ^ np.uint64(self.key0))
            return _splitmix64(h ^ hi ^ np.uint64(self.key1))

    def couplings(self, i, j) -> np.ndarray:
        """Vectorised J over broadcast site arrays; i and j must differ elementwise"""
        i_arr = np.asarray(i, dtype=np.int64)
        j_arr = np.asarray(j, dtype=np.int64)
        i_arr, j_arr = np.broadcast_arrays(i_arr, j_arr)
        if np.any(i_arr == j_arr):
            raise ValueError("couplings need i != j; there is no self-coupling")
        lo = _as_u64(np.minimum(i_arr, j_arr).ravel())
        hi = _as_u64(np.maximum(i_arr, j_arr).ravel())
        return self._values(lo, hi).reshape(i_arr.shape)

    def band(self, starts, offsets) -> np.ndarray:
        """J(i, i + k) over broadcast arrays of starts i and offsets k >= 1"""
        if np.any(np.asarray(offsets) < 1):
            raise ValueError("band offsets must be >= 1")
        i_arr, k_arr = np.broadcast_arrays(np.asarray(starts, dtype=np.int64),
                                           np.asarray(offsets, dtype=np.int64))
        lo = _as_u64(i_arr.ravel())
        hi = _as_u64((i_arr + k_arr).ravel())
        return self._values(lo, hi).reshape(i_arr.shape)

    def _values(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        words = self._words(lo, hi)
        if self.spec.distribution is Distribution.BERNOULLI:
            return 1.0 - 2.0 * (words >> np.uint64(63)).astype(np.float64)
        u = ((words >> _UNIFORM_SHIFT).astype(np.float64) + 0.5) * _UNIFORM_SCALE
        return ndtri(u) * _GAUSSIAN_SCALE

    def coupling(self, i: int, j: int) -> float:
        """J(i, j) = J(j, i)"""
        if i == j:
            raise ValueError(f"coupling({i}, {j}): i and j must differ")
        return float(self.couplings(i, j))


def fork_sample(spec: DisorderSpec, sample_index: int) -> CouplingField:
    """Independent configuration for Monte Carlo sample ``sample_index``"""
    if sample_index < 0:
        raise ValueError(f"sample_index must be >= 0, got {sample_index}")
    return CouplingField.create(spec, sample_index)
