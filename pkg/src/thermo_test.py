#!/usr/bin/env python3
"""
Tests for exact small-volume partition functions and free energies
"""

import sys
import os
import math
import itertools
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

import numpy as np
import pytest

from potential import PotentialSpec
from disorder import DisorderSpec, Distribution
from thermo import (VolumeTooLarge, _log_mean_weight, coupling_matrix, free_energy_per_site, log_partition_exact,
                    log_partition_from_energies, log_partition_from_weights, self_averaging_report, thermo_sample)
from worker_pool import WorkerPool

ZERO = PotentialSpec.custom([])


def _brute_force_log_z(W, beta):
    size = W.shape[0]
    energies = []
    for spins in itertools.product((1.0, -1.0), repeat=size):
        s = np.array(spins)
        energies.append(float(s @ W @ s))
    return math.log(math.fsum(math.exp(-beta * e) for e in energies))


@pytest.mark.parametrize("n", [0, 1, 3])
def test_zero_potential_is_free_spins(n):
    field_ = DisorderSpec(Distribution.GAUSSIAN, 1).field()
    assert log_partition_exact(field_, ZERO, n, 2.0) == pytest.approx((2 * n + 1) * math.log(2.0), rel=1e-15)
    assert free_energy_per_site(field_, ZERO, n, 2.0) == -math.log(2.0) / 2.0


def test_single_site_has_two_states():
    field_ = DisorderSpec(Distribution.BERNOULLI, 0).field()
    assert log_partition_exact(field_, PotentialSpec.power_law(1.0), 0, 1.0) == pytest.approx(math.log(2.0))


def test_coupling_matrix_is_strictly_upper_triangular():
    field_ = DisorderSpec(Distribution.GAUSSIAN, 3).field()
    spec = PotentialSpec.power_law(1.0)
    W = coupling_matrix(field_, spec, 2)
    assert W.shape == (5, 5)
    assert np.all(np.tril(W) == 0.0)
    assert W[0, 3] == field_.coupling(-2, 1) * spec.epsilon(3)


@pytest.mark.parametrize("distribution", list(Distribution))
@pytest.mark.parametrize("beta", [0.3, 1.0, 4.0])
def test_enumeration_matches_brute_force(distribution, beta):
    field_ = DisorderSpec(distribution, 8).fork_sample(2)
    W = coupling_matrix(field_, PotentialSpec.power_law(0.8), 2)
    assert log_partition_from_weights(W, beta) == pytest.approx(_brute_force_log_z(W, beta), rel=1e-12)


def test_nearest_neighbour_bernoulli_chain_is_gauge_equivalent_to_ferromagnet():
    spec = PotentialSpec.custom([0.3])
    beta = 1.7
    expected = math.log(2.0) + 6 * math.log(2.0 * math.cosh(0.3 * beta))
    for sample in range(4):
        field_ = DisorderSpec(Distribution.BERNOULLI, 5).fork_sample(sample)
        assert log_partition_exact(field_, spec, 3, beta) == pytest.approx(expected, rel=1e-12)


def test_high_temperature_expansion():
    field_ = DisorderSpec(Distribution.GAUSSIAN, 12).field()
    W = coupling_matrix(field_, PotentialSpec.power_law(1.0), 3)
    beta = 1e-4
    excess = log_partition_from_weights(W, beta) - 7 * math.log(2.0)
    assert excess == pytest.approx(0.5 * beta ** 2 * float(np.sum(W ** 2)), rel=1e-2)


def test_energy_shift_moves_log_z_by_beta_times_shift():
    energies = [-3.0, 0.5, 2.0, 7.25]
    beta = 0.8
    base = log_partition_from_energies(energies, beta)
    shifted = log_partition_from_energies([e + 1000.0 for e in energies], beta)
    assert shifted == pytest.approx(base - beta * 1000.0, rel=1e-12)
    assert base == pytest.approx(math.log(sum(math.exp(-beta * e) for e in energies)), rel=1e-14)


def test_large_beta_does_not_overflow():
    field_ = DisorderSpec(Distribution.GAUSSIAN, 0).field()
    log_z = log_partition_exact(field_, PotentialSpec.power_law(1.0), 2, 1e4)
    assert math.isfinite(log_z)
    assert log_z > 1.0


def test_free_energy_matches_log_partition():
    field_ = DisorderSpec(Distribution.GAUSSIAN, 6).field()
    sample = thermo_sample(field_, PotentialSpec.power_law(1.0), 3, 0.9)
    assert sample.f == pytest.approx(-sample.log_z / (0.9 * 7), rel=1e-13)


def test_free_energy_and_log_z_share_one_enumeration():
    field_ = DisorderSpec(Distribution.GAUSSIAN, 12).fork_sample(1)
    spec = PotentialSpec.power_law(1.0)
    W = coupling_matrix(field_, spec, 3)
    log_mean = _log_mean_weight(W, 0.7)
    assert log_partition_from_weights(W, 0.7) == 7 * math.log(2.0) + log_mean
    assert free_energy_per_site(field_, spec, 3, 0.7) == -(math.log(2.0) + log_mean / 7) / 0.7
    with WorkerPool(2) as pool:
        assert _log_mean_weight(W, 0.7, pool) == log_mean
    with pytest.raises(ValueError):
        free_energy_per_site(field_, spec, 3, 0.0)


def test_enumeration_is_deterministic():
    field_ = DisorderSpec(Distribution.GAUSSIAN, 21).fork_sample(4)
    spec = PotentialSpec.power_law(0.8)
    assert free_energy_per_site(field_, spec, 4, 1.0) == free_energy_per_site(field_, spec, 4, 1.0)


def test_volume_cap_and_bad_arguments():
    field_ = DisorderSpec(Distribution.GAUSSIAN, 0).field()
    spec = PotentialSpec.power_law(1.0)
    with pytest.raises(VolumeTooLarge) as info:
        log_partition_exact(field_, spec, 11, 1.0)
    assert (info.value.n, info.value.n_max) == (11, 10)
    with pytest.raises(VolumeTooLarge):
        free_energy_per_site(field_, spec, 4, 1.0, n_max=3)
    with pytest.raises(ValueError):
        log_partition_exact(field_, spec, 2, 0.0)
    with pytest.raises(ValueError):
        log_partition_exact(field_, spec, -1, 1.0)
    with pytest.raises(ValueError):
        log_partition_from_energies([], 1.0)


def test_free_energy_fluctuations_shrink_with_volume():
    summary, raw = self_averaging_report(PotentialSpec.power_law(1.0), Distribution.GAUSSIAN, 2024, [3, 7],
                                         1.0, 50)
    small, large = summary
    assert (small.n, large.n) == (3, 7)
    assert large.std < small.std
    assert len(raw) == 100
    assert [r.sample_index for r in raw[:3]] == [0, 1, 2]


def test_free_spins_have_no_fluctuations():
    summary, _ = self_averaging_report(ZERO, Distribution.BERNOULLI, 0, [1, 2], 1.0, 10)
    assert all(s.std == 0.0 and s.mean == -math.log(2.0) for s in summary)


def test_report_needs_ten_samples():
    with pytest.raises(ValueError):
        self_averaging_report(PotentialSpec.power_law(1.0), Distribution.GAUSSIAN, 0, [1], 1.0, 9)


def test_report_is_independent_of_worker_count():
    args = (PotentialSpec.power_law(1.0), Distribution.GAUSSIAN, 3, [2, 3], 1.0, 12)
    serial = self_averaging_report(*args)
    with WorkerPool(2) as pool:
        parallel = self_averaging_report(*args, pool=pool)
    assert serial == parallel


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
