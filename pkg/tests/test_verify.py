import math

import numpy as np
import pytest
from scipy.stats import kstest

from pdcpart.counting import partition_count
from pdcpart.verify import (
    COST_METHODS,
    UndersampledError,
    binned,
    chi_square_law,
    chi_square_uniform,
    enumerate_partitions,
    exact_lucky_cost,
    exact_trivial_cost,
    lucky_theory,
    majority,
    measure_cost,
    trivial_theory,
    trivial_theory_stated,
    verify_uniform,
)


def test_enumeration_examples():
    assert enumerate_partitions(4).partitions == [(4,), (3, 1), (2, 2), (2, 1, 1), (1, 1, 1, 1)]
    assert enumerate_partitions(0).partitions == [()]
    assert len(enumerate_partitions(12)) == 77 == partition_count(12)
    for n in range(1, 25):
        assert len(enumerate_partitions(n)) == partition_count(n)
    with pytest.raises(ValueError):
        enumerate_partitions(61)


def test_enumeration_lookup():
    idx = enumerate_partitions(6)
    assert idx.lookup((3, 2, 1)) == idx.partitions.index((3, 2, 1))
    assert (3, 3) in idx and (4, 4) not in idx
    with pytest.raises(KeyError):
        idx.lookup((5,))


def test_chi_square_examples():
    assert chi_square_uniform([50, 50, 50]) == (0.0, 1.0)
    stat, p = chi_square_uniform([100, 0])
    assert stat == pytest.approx(100.0) and p < 1e-20
    with pytest.raises(UndersampledError):
        chi_square_uniform([3, 4, 2])
    stat, p = chi_square_law([25, 75], [0.25, 0.75])
    assert stat == pytest.approx(0.0) and p == pytest.approx(1.0)


def test_chi_square_null_calibration():
    gen = np.random.default_rng(11)
    pvals = [chi_square_uniform(gen.multinomial(10**5, np.full(77, 1 / 77)))[1] for _ in range(1000)]
    assert kstest(pvals, "uniform").pvalue > 0.01


def test_binned():
    assert list(binned([0, 4, 5, 9, 10, 11], [5, 10])) == [2, 2, 2]


def test_majority_short_circuits():
    calls = []

    def t(seed):
        calls.append(seed)
        return seed % 2 == 0

    ok, votes = majority(t, 10)
    assert ok and votes == [True, False, True] and calls == [10, 11, 12]
    ok, votes = majority(lambda s: True, 0)
    assert ok and votes == [True, True]


def test_theory_values():
    assert lucky_theory(1000) == pytest.approx(556.6, abs=0.05)
    assert trivial_theory_stated(10**4) == pytest.approx(24.40, abs=0.01)
    assert trivial_theory(10**4) / trivial_theory_stated(10**4) == pytest.approx(math.pi**2 / 6)
    # The exact finite-n costs sit close to the corrected asymptotics.
    assert exact_trivial_cost(10**4) / trivial_theory(10**4) == pytest.approx(1.0, rel=0.01)
    assert exact_lucky_cost(10**4) / lucky_theory(10**4) == pytest.approx(1.0, rel=0.05)


def test_measure_cost_lucky():
    rep = measure_cost("lucky", 1000, 300, seed=1)
    assert rep.trials == 300 and rep.mean_rng_draws > rep.mean_proposals
    assert 0.85 <= rep.ratio <= 1.15
    assert rep.as_dict()["extras"]["exact"] == pytest.approx(exact_lucky_cost(1000))


def test_measure_cost_trivial_against_exact_cost():
    rep = measure_cost("trivial", 10**4, 400, seed=2)
    assert 0.85 <= rep.ratio <= 1.15
    assert abs(rep.mean_proposals - rep.extras["exact"]) <= 4 * rep.stderr


def test_measure_cost_recursive_reports_levels():
    rep = measure_cost("recursive", 10**6, 100, seed=3)
    assert rep.metric == "top-level proposals"
    assert 1.0 <= rep.measured <= 2.0
    assert len(rep.per_level) >= 2
    assert rep.extras["max_depth"] >= 2


def test_measure_cost_small_large():
    rep = measure_cost("small-large", 10**4, 200, seed=4)
    assert rep.extras["b"] == 100
    assert abs(rep.mean_proposals - rep.theory_value) <= 4 * rep.stderr


def test_measure_cost_registry():
    assert "lucky" in COST_METHODS
    with pytest.raises(ValueError):
        measure_cost("bogus", 10, 10, 1)


def test_verify_uniform():
    stat, p = verify_uniform("table", 8, 5000, 1)
    assert p > 1e-3
