#!/usr/bin/env python3
"""
Identity validation suite
Closed-form checks behind the `verify` experiment: Vieta product, Gaussian
moments against quadrature, Bernoulli degeneracy, analytic averages and
the zero-potential free energy
"""

import math
import time
import logging
from datetime import datetime
from typing import Any, Callable, Dict, List, Tuple

import numpy as np
from scipy.integrate import quad

from potential import PotentialSpec
from disorder import DisorderSpec, Distribution
from dynamics import InitialState, TruncationPolicy, nonrandom_finite, nonrandom_product, wp_sites
from averaging import analytic_average, pair_covariance_analytic, single_factor_moments_gaussian
from decay import vieta_reference
from thermo import free_energy_per_site

logger = logging.getLogger(__name__)


def gaussian_moments_by_quadrature(eps: float, t: float) -> Tuple[float, float]:
    """E cos(2 J eps t) and E cos^2(2 J eps t) for the density exp(-x^2)/sqrt(pi)"""
    w = 2.0 * eps * t
    norm = math.sqrt(math.pi)
    mean_cos, _ = quad(lambda x: math.exp(-x * x) * math.cos(w * x), -math.inf, math.inf,
                       epsabs=1e-14, epsrel=1e-13, limit=200)
    mean_sq, _ = quad(lambda x: math.exp(-x * x) * math.cos(w * x) ** 2, -math.inf, math.inf,
                      epsabs=1e-14, epsrel=1e-13, limit=200)
    return mean_cos / norm, mean_sq / norm


class IdentityValidator:
    """Runs each identity check and reports pass/fail with a detail string"""

    def __init__(self, seed: int = 0, points: int = 10_000):
        self.seed = seed
        self.points = points
        self.tolerance = 1e-12
        self.quadrature_tolerance = 1e-10
        self.validation_results: Dict[str, Any] = {}

    def create_checks(self) -> List[Tuple[str, Callable[[], Tuple[bool, str]]]]:
        return [
            ('vieta_identity', self.check_vieta_identity),
            ('gaussian_moments_quadrature', self.check_gaussian_moments),
            ('bernoulli_degeneracy', self.check_bernoulli_degeneracy),
            ('bernoulli_covariance_zero', self.check_bernoulli_covariance),
            ('dyadic_gaussian_average', self.check_dyadic_gaussian_average),
            ('zero_potential_free_energy', self.check_zero_potential_free_energy),
        ]

    def check_vieta_identity(self) -> Tuple[bool, str]:
        spec = PotentialSpec.dyadic()
        state = InitialState.from_magnetization(0.5)
        worst = 0.0
        for t in np.linspace(0.0, 50.0, self.points):
            product = nonrandom_finite(spec, state, 0.0, 60, float(t)) / state.delta
            worst = max(worst, abs(product - vieta_reference(float(t))))
        return worst < self.tolerance, f"max deviation {worst:.3e} over {self.points} points in [0, 50]"

    def check_gaussian_moments(self) -> Tuple[bool, str]:
        worst = 0.0
        grid = np.linspace(0.0, 2.0, 10)
        for eps in grid:
            for t in grid:
                closed = single_factor_moments_gaussian(float(eps), float(t))
                numeric = gaussian_moments_by_quadrature(float(eps), float(t))
                worst = max(worst, abs(closed[0] - numeric[0]), abs(closed[1] - numeric[1]))
        return worst < self.quadrature_tolerance, f"max deviation {worst:.3e} on a 10x10 grid in [0, 2]^2"

    def check_bernoulli_degeneracy(self) -> Tuple[bool, str]:
        policy = TruncationPolicy()
        spec = PotentialSpec.power_law(1.0)
        disorder = DisorderSpec(Distribution.BERNOULLI, self.seed)
        mismatches = 0
        for t in (0.5, 2.0, 7.0):
            reference = nonrandom_product(spec, t, policy).value
            for sample in range(10):
                values = wp_sites(disorder.fork_sample(sample), spec, range(-3, 4), t, policy)
                mismatches += sum(p.value != reference for p in values)
        return mismatches == 0, f"{mismatches} site products differ from the nonrandom product"

    def check_bernoulli_covariance(self) -> Tuple[bool, str]:
        spec = PotentialSpec.power_law(1.0)
        values = [pair_covariance_analytic(spec, Distribution.BERNOULLI, t, k)
                  for t in (0.5, 1.0, 3.0) for k in (1, 2, 10)]
        return all(v == 0.0 for v in values), f"{len(values)} covariances checked"

    def check_dyadic_gaussian_average(self) -> Tuple[bool, str]:
        value = analytic_average(PotentialSpec.dyadic(), Distribution.GAUSSIAN, 1.0, TruncationPolicy())
        expected = math.exp(-1.0 / 6.0)
        return abs(value - expected) < self.tolerance, f"f_G(1) = {value!r}, exp(-1/6) = {expected!r}"

    def check_zero_potential_free_energy(self) -> Tuple[bool, str]:
        field_ = DisorderSpec(Distribution.GAUSSIAN, self.seed).field()
        spec = PotentialSpec.custom([])
        beta = 1.0
        values = [free_energy_per_site(field_, spec, n, beta) for n in range(4)]
        expected = -math.log(2.0) / beta
        return all(v == expected for v in values), f"f_n = {values}, -log 2 = {expected!r}"

    def run_check(self, name: str, check: Callable[[], Tuple[bool, str]]) -> Dict[str, Any]:
        start_time = time.time()
        try:
            passed, detail = check()
        except Exception as e:
            logger.error(f"Check {name} raised: {e}")
            passed, detail = False, f"{type(e).__name__}: {e}"
        result = {'check': name, 'passed': bool(passed), 'detail': detail,
                  'duration': time.time() - start_time}
        logger.info(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
        return result

    def run_validation(self) -> Dict[str, Any]:
        """Run every check; success only when all pass"""
        results = [self.run_check(name, check) for name, check in self.create_checks()]
        passed = sum(r['passed'] for r in results)
        self.validation_results = {
            'timestamp': datetime.now().isoformat(),
            'checks': results,
            'passed': passed,
            'total': len(results),
            'success': passed == len(results),
        }
        return self.validation_results
