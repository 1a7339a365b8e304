#!/usr/bin/env python3
"""
Tests for finite and infinite volume cosine products
"""

import sys
import os
import math
import logging
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

import numpy as np
import pytest
from scipy.linalg import expm

from potential import PotentialSpec
from disorder import DisorderSpec, Distribution, coupling_bound
from dynamics import (InitialState, TimeGrid, TruncationFailure, TruncationPolicy, _log_cos_row, _smallest_terms, curve,
                      nonrandom_finite, nonrandom_product, random_finite, truncation_point, volume_tail_bound,
                      wp_site, wp_sites)
from worker_pool import WorkerPool

SX = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SZ = np.diag([1.0, -1.0]).astype(complex)


def _site_operator(op, position, size):
    out = np.array([[1.0]], dtype=complex)
    for p in range(size):
        out = np.kron(out, op if p == position else np.eye(2))
    return out


def exact_transverse_spin(couplings, size, gamma, B, t, position):
    """tr(rho U^dag sigma^x U) by matrix exponentiation; couplings maps (a, b) -> J(a,b) eps(|a-b|)"""
    H = sum(K * _site_operator(SZ, a, size) @ _site_operator(SZ, b, size) for (a, b), K in couplings.items())
    H = H + B * sum(_site_operator(SZ, a, size) for a in range(size))
    single = expm(-gamma * SX)
    single /= np.trace(single)
    rho = np.array([[1.0]], dtype=complex)
    for _ in range(size):
        rho = np.kron(rho, single)
    U = expm(-1j * H * t)
    return float(np.real(np.trace(rho @ U.conj().T @ _site_operator(SX, position, size) @ U)))


def test_initial_state_delta():
    state = InitialState(0.5)
    assert state.delta == -math.tanh(0.5)
    assert InitialState.from_magnetization(0.3).delta == pytest.approx(0.3, rel=1e-15)
    with pytest.raises(ValueError):
        InitialState.from_magnetization(1.0)
    with pytest.raises(ValueError):
        InitialState(math.inf)


def test_time_grid_validation():
    assert len(TimeGrid.linear(0.0, 1.0, 11)) == 11
    with pytest.raises(ValueError):
        TimeGrid((1.0, 1.0))
    with pytest.raises(ValueError):
        TimeGrid((-1.0, 2.0))
    with pytest.raises(ValueError):
        TimeGrid(())
    with pytest.raises(ValueError):
        TimeGrid.logarithmic(0.0, 1.0, 5)


def test_policy_validation():
    with pytest.raises(ValueError):
        TruncationPolicy(tolerance=0.0)
    with pytest.raises(ValueError):
        TruncationPolicy(max_terms=0)


def test_nonrandom_finite_at_zero_time_is_delta():
    state = InitialState(0.7)
    assert nonrandom_finite(PotentialSpec.power_law(1.0), state, 0.3, 10, 0.0) == state.delta


def test_nonrandom_finite_dyadic_matches_vieta():
    state = InitialState.from_magnetization(0.5)
    spec = PotentialSpec.dyadic()
    assert abs(nonrandom_finite(spec, state, 0.0, 60, math.pi)) < 1e-12
    value = nonrandom_finite(spec, state, 0.0, 60, 1.0)
    assert value == pytest.approx(state.delta * math.sin(1.0) ** 2, abs=1e-12)
    assert value / state.delta == pytest.approx(0.7080734182735712, abs=1e-12)


def test_nonrandom_finite_matches_matrix_exponential():
    spec = PotentialSpec.power_law(1.0)
    state = InitialState(0.4)
    B, t = 0.35, 0.9
    couplings = {(0, 1): spec.epsilon(1), (1, 2): spec.epsilon(1), (0, 2): spec.epsilon(2)}
    exact = exact_transverse_spin(couplings, 3, state.gamma, B, t, 1)
    assert nonrandom_finite(spec, state, B, 1, t) == pytest.approx(exact, abs=1e-12)


@pytest.mark.parametrize("i0", [-1, 0, 1])
def test_random_finite_matches_three_spin_enumeration(i0):
    field_ = DisorderSpec(Distribution.GAUSSIAN, 21).fork_sample(4)
    spec = PotentialSpec.power_law(1.0)
    state = InitialState(-0.6)
    t = 0.7
    sites = [-1, 0, 1]
    couplings = {(a, b): field_.coupling(sites[a], sites[b]) * spec.epsilon(b - a)
                 for a in range(3) for b in range(a + 1, 3)}
    exact = exact_transverse_spin(couplings, 3, state.gamma, 0.0, t, i0 + 1)
    assert state.delta * random_finite(field_, spec, i0, 1, t) == pytest.approx(exact, abs=1e-12)


def test_random_finite_edge_site_keeps_only_inner_factors():
    field_ = DisorderSpec(Distribution.GAUSSIAN, 2).field()
    spec = PotentialSpec.power_law(1.0)
    t = 1.3
    expected = (math.cos(2 * t * field_.coupling(1, 2) * spec.epsilon(1))
                * math.cos(2 * t * field_.coupling(0, 2) * spec.epsilon(2))
                * math.cos(2 * t * field_.coupling(-1, 2) * spec.epsilon(3))
                * math.cos(2 * t * field_.coupling(-2, 2) * spec.epsilon(4)))
    assert random_finite(field_, spec, 2, 2, t) == pytest.approx(expected, rel=1e-13)


def test_random_finite_basics():
    field_ = DisorderSpec(Distribution.BERNOULLI, 0).field()
    spec = PotentialSpec.dyadic()
    assert random_finite(field_, spec, 0, 5, 0.0) == 1.0
    with pytest.raises(ValueError):
        random_finite(field_, spec, 6, 5, 1.0)
    assert random_finite(field_, spec, 0, 60, 1.0) == pytest.approx(math.sin(1.0) ** 2, abs=1e-12)


def test_wp_site_at_zero_time():
    field_ = DisorderSpec(Distribution.GAUSSIAN, 0).field()
    p = wp_site(field_, PotentialSpec.power_law(1.0), 3, 0.0, TruncationPolicy())
    assert (p.value, p.certified_error, p.terms_used) == (1.0, 0.0, 1)


def test_wp_site_bernoulli_dyadic_closed_form():
    field_ = DisorderSpec(Distribution.BERNOULLI, 8).fork_sample(2)
    policy = TruncationPolicy()
    p = wp_site(field_, PotentialSpec.dyadic(), -4, 2.0, policy)
    assert p.value == pytest.approx((math.sin(2.0) / 2.0) ** 2, abs=1e-12)


def test_bernoulli_products_equal_nonrandom_bit_for_bit():
    spec = PotentialSpec.power_law(1.0)
    policy = TruncationPolicy()
    disorder = DisorderSpec(Distribution.BERNOULLI, 123)
    for t in (0.5, 3.0):
        reference = nonrandom_product(spec, t, policy)
        for sample in range(100):
            for p in wp_sites(disorder.fork_sample(sample), spec, [-2, 0, 5], t, policy):
                assert p.value == reference.value
                assert p.log_abs == reference.log_abs


def test_gaussian_wp_site_against_long_reference_product():
    field_ = DisorderSpec(Distribution.GAUSSIAN, 17).fork_sample(0)
    spec = PotentialSpec.power_law(1.0)
    t = 0.5
    policy = TruncationPolicy(tolerance=1e-3)
    p = wp_site(field_, spec, 0, t, policy)

    ks = np.arange(1, 1_000_001)
    eps = spec.epsilon_array(ks)
    args = np.concatenate((2 * t * field_.couplings(0, ks) * eps, 2 * t * field_.couplings(-ks, 0) * eps))
    reference = float(np.prod(np.cos(args)))
    bound = coupling_bound(Distribution.GAUSSIAN)
    reference_tail = 5.0 * t * t * bound ** 2 * spec.tail_sum_sq(1_000_001).upper_bound
    assert p.terms_used < 1_000_000
    assert p.certified_error <= policy.tolerance
    assert abs(p.value - reference) <= p.certified_error + abs(reference) * reference_tail


def test_truncation_failure_reports_bound():
    field_ = DisorderSpec(Distribution.GAUSSIAN, 0).field()
    policy = TruncationPolicy(tolerance=1e-10, max_terms=100_000)
    with pytest.raises(TruncationFailure) as info:
        wp_site(field_, PotentialSpec.power_law(1.0), 0, 0.5, policy)
    assert info.value.t == 0.5
    assert info.value.terms == 100_000
    assert info.value.achieved_bound > info.value.tolerance


def test_gaussian_certificate_covers_every_site():
    field_ = DisorderSpec(Distribution.GAUSSIAN, 40).fork_sample(0)
    spec = PotentialSpec.dyadic()
    t = 3.0
    policy = TruncationPolicy(tolerance=1e-6)
    sites = np.arange(0, 2000)
    products = wp_sites(field_, spec, sites, t, policy)

    # eps(79) is below double precision relative to the leading factors
    ks = np.arange(1, 80)[None, :]
    s = sites[:, None]
    eps = spec.epsilon_array(ks)
    args = np.concatenate((2 * t * field_.band(s, ks) * eps, 2 * t * field_.band(s - ks, ks) * eps), axis=1)
    reference = np.prod(np.cos(args), axis=1)
    for p, ref in zip(products, reference):
        assert p.certified_error <= policy.tolerance
        assert abs(p.value - ref) <= p.certified_error + 1e-14


def test_gaussian_plan_uses_the_coupling_bound():
    spec = PotentialSpec.power_law(1.0)
    policy = TruncationPolicy(tolerance=1e-3)
    bound = coupling_bound(Distribution.GAUSSIAN)
    unit = truncation_point(spec, 1.0, policy, deterministic=False)
    scaled = truncation_point(spec, 1.0, policy, deterministic=False, coupling_scale=bound)
    assert scaled.terms > 30 * unit.terms
    assert scaled.error_log_bound <= policy.tolerance / 2
    assert 2.0 * bound * spec.epsilon(scaled.terms + 1) <= 0.5
    p = wp_site(DisorderSpec(Distribution.GAUSSIAN, 1).field(), spec, 0, 1.0, policy)
    assert p.terms_used == scaled.terms


def test_gaussian_plan_is_logged(caplog):
    field_ = DisorderSpec(Distribution.GAUSSIAN, 0).field()
    with caplog.at_level(logging.DEBUG, logger='dynamics'):
        wp_site(field_, PotentialSpec.dyadic(), 0, 1.0, TruncationPolicy(tolerance=1e-6))
    assert any('|J| <= 5.8' in r.getMessage() for r in caplog.records)


@pytest.mark.parametrize("threshold", [1, 2, 3, 500, 512, 513, 700, 999, 1000])
def test_smallest_terms_is_minimal(threshold):
    calls = []

    def accept(m):
        calls.append(m)
        return m >= threshold

    assert _smallest_terms(accept, 1000) == threshold
    # no M is tried twice after the cap check
    assert len(set(calls[1:])) == len(calls) - 1
    assert _smallest_terms(lambda m: m >= 1001, 1000) is None


def test_plain_truncation_point_meets_tolerance():
    spec = PotentialSpec.power_law(1.0)
    policy = TruncationPolicy(tolerance=1e-3, tail_series=False)
    plan = truncation_point(spec, 1.0, policy, deterministic=True)
    assert plan.error_log_bound <= policy.tolerance / 2
    # the plan is the smallest such M
    assert 5.0 * spec.tail_sum_sq(plan.terms).upper_bound > policy.tolerance / 2


def test_tail_series_against_long_product():
    spec = PotentialSpec.power_law(1.0)
    t = 5.0
    p = nonrandom_product(spec, t, TruncationPolicy())
    assert p.terms_used < 100

    M = 2_000_000
    args = 2 * t * spec.epsilon_array(np.arange(1, M + 1))
    log_head = 2.0 * float(np.sum(np.log(np.abs(np.cos(args)))))
    # beyond M the quadratic term of -log cos x is all that survives in double precision
    log_tail = -4.0 * t * t * spec.tail_sum_sq(M + 1).value
    assert p.log_abs == pytest.approx(log_head + log_tail, abs=1e-9)


def test_tail_series_and_plain_cut_agree():
    spec = PotentialSpec.power_law(1.5)
    series = nonrandom_product(spec, 2.0, TruncationPolicy(tolerance=1e-8))
    plain = nonrandom_product(spec, 2.0, TruncationPolicy(tolerance=1e-8, tail_series=False))
    assert series.terms_used < plain.terms_used
    assert series.value == pytest.approx(plain.value, abs=2e-8)


@pytest.mark.parametrize("t", [0.5, 1.0, 2.0, 3.0, 10.0, 25.0])
def test_nonrandom_dyadic_product_is_vieta(t):
    p = nonrandom_product(PotentialSpec.dyadic(), t, TruncationPolicy())
    assert p.value == pytest.approx((math.sin(t) / t) ** 2, abs=1e-12)


def test_long_time_product_keeps_log_magnitude():
    p = nonrandom_product(PotentialSpec.power_law(0.6), 100.0, TruncationPolicy())
    assert p.value == 0.0 or abs(p.value) < 1e-300
    assert math.isfinite(p.log_abs) and p.log_abs < -1000.0


def test_kernel_is_even_in_time():
    args = np.linspace(-3.0, 3.0, 101)
    assert _log_cos_row(args) == _log_cos_row(-args)


def test_volume_convergence_to_infinite_product():
    spec = PotentialSpec.power_law(1.0)
    policy = TruncationPolicy(tolerance=1e-3)
    disorder = DisorderSpec(Distribution.GAUSSIAN, 5)
    volumes = [10, 20, 50, 100, 200]
    bounds = [volume_tail_bound(spec, n, 1.0, Distribution.GAUSSIAN) for n in volumes]
    assert all(b2 <= b1 for b1, b2 in zip(bounds, bounds[1:]))
    assert math.isfinite(bounds[-1])
    assert volume_tail_bound(spec, 200, 1.0) < bounds[-1]
    for sample in range(20):
        field_ = disorder.fork_sample(sample)
        infinite = wp_site(field_, spec, 0, 1.0, policy)
        for n, bound in zip(volumes, bounds):
            finite = random_finite(field_, spec, 0, n, 1.0)
            assert abs(finite - infinite.value) <= abs(finite) * -math.expm1(-bound) + infinite.certified_error


def test_curve_basics():
    state = InitialState.from_magnetization(0.5)
    spec = PotentialSpec.dyadic()
    policy = TruncationPolicy()
    assert curve(None, spec, state, 0.0, TimeGrid((0.0,)), policy).values[0] == state.delta

    result = curve(None, spec, state, 0.0, TimeGrid((1.0, 2.0, 3.0)), policy)
    for t, v in zip(result.grid.times, result.values):
        assert v == pytest.approx(state.delta * (math.sin(t) / t) ** 2, abs=1e-12)
    assert result.metadata['model'] == 'nonrandom'


def test_dyadic_curve_matches_vieta_at_default_tolerance():
    state = InitialState.from_magnetization(0.5)
    grid = TimeGrid.linear(0.0, 20.0, 2000)
    result = curve(None, PotentialSpec.dyadic(), state, 0.0, grid, TruncationPolicy())
    expected = state.delta * np.sinc(result.times / math.pi) ** 2
    assert np.max(np.abs(result.values - expected)) < 1e-12


def test_random_curve_is_bounded():
    state = InitialState(0.9)
    field_ = DisorderSpec(Distribution.GAUSSIAN, 1).field()
    policy = TruncationPolicy(tolerance=1e-2)
    result = curve(field_, PotentialSpec.power_law(1.0), state, 0.0, TimeGrid.linear(0.0, 4.0, 9), policy)
    assert np.all(np.abs(result.values) <= abs(state.delta) + policy.tolerance)
    assert result.values[0] == state.delta
    assert result.metadata['disorder'] == {'distribution': 'gaussian', 'seed': 1}


def test_curve_is_independent_of_worker_count():
    state = InitialState(0.2)
    field_ = DisorderSpec(Distribution.BERNOULLI, 3).field()
    grid = TimeGrid.linear(0.0, 6.0, 13)
    spec = PotentialSpec.power_law(0.8)
    serial = curve(field_, spec, state, 0.1, grid, TruncationPolicy())
    with WorkerPool(2) as pool:
        parallel = curve(field_, spec, state, 0.1, grid, TruncationPolicy(), pool=pool)
    assert serial.values.tolist() == parallel.values.tolist()
    assert serial.certified_errors.tolist() == parallel.certified_errors.tolist()


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
