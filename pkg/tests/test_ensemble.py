import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from pdcpart.counting import C, log_euler_product
from pdcpart.ensemble import (
    GrandCanonical,
    LargestIndexEngine,
    MultiplicityVector,
    NaiveEngine,
    ParityEngine,
    PlaneEngine,
    PoissonEngine,
    SetPartitionEngine,
    _mean_weight,
    largest_index_law,
    make_engine,
    plane_outside_mass,
    plane_support_box,
    plane_tilt,
    poisson_total_rate,
    propose_largest_index,
    propose_naive,
    propose_parity,
    propose_poisson,
    roaming_tilt,
    set_partition_rates,
    set_partition_tilt,
    solve_bounded_tilt,
    tilt_parameter,
    weighted_sum,
)
from pdcpart.rng import RandomStream
from pdcpart.verify import binned, chi_square_two_sample, iter_partitions

# --- tilt ---------------------------------------------------------------------


def test_tilt_examples():
    oracle = mpmath.exp(-mpmath.pi / mpmath.sqrt(6) / 10)
    assert tilt_parameter(100) == pytest.approx(float(oracle), rel=1e-15)
    assert round(tilt_parameter(100), 6) == 0.879629


@given(st.integers(1, 10**9))
def test_tilt_monotone(n):
    assert tilt_parameter(n) < tilt_parameter(n + 1) < 1


def test_grand_canonical_validates():
    with pytest.raises(ValueError):
        GrandCanonical(10, 1.0)
    assert GrandCanonical.for_size(50).x == tilt_parameter(50)


# --- weighted sums --------------------------------------------------------------


def test_weighted_sum_examples():
    assert weighted_sum(MultiplicityVector({})) == 0
    assert weighted_sum(MultiplicityVector({2: 3})) == 6
    assert weighted_sum(MultiplicityVector({1: 1, 3: 2})) == 7


def test_weighted_sum_big_integers():
    v = MultiplicityVector({10**12: 3, 1: 2**70})
    assert v.weight == 3 * 10**12 + 2**70


def test_pmf_product_constant_on_partitions():
    # prod_i P(Z_i = z_i) = x^n prod (1 - x^i) for every partition of n.
    n, x = 12, 0.77
    rng = np.random.default_rng(5)
    parts = list(iter_partitions(n))
    target = n * math.log(x) + log_euler_product(x, n)
    for k in rng.choice(len(parts), 20, replace=False):
        counts = {}
        for p in parts[k]:
            counts[p] = counts.get(p, 0) + 1
        log_pmf = sum(math.log1p(-(x**i)) + i * counts.get(i, 0) * math.log(x) for i in range(1, n + 1))
        assert log_pmf == pytest.approx(target, rel=1e-12)


# --- engines ----------------------------------------------------------------------


def test_naive_all_ones_uniform_gives_zero_vector():
    class Ones:
        budget = RandomStream(0).budget

        def uniforms(self, size):
            return np.ones(size)

    b = NaiveEngine(0.9, 1, 30).batch(Ones(), 3)
    assert list(b.weights) == [0, 0, 0]
    assert b.items(1) == {}


def test_naive_draw_count_and_marginal():
    n = 100
    x = tilt_parameter(n)
    eng = make_engine("naive", x, 1, n)
    b = eng.batch(RandomStream(1), 10**5)
    assert set(np.asarray(b.draws).tolist()) == {n}
    z1 = np.zeros(10**5)
    sel = b.key == 1
    z1[b.owner[sel]] = b.amount[sel]
    freq = np.mean(z1 >= 1)
    assert abs(freq - x) <= 3 * math.sqrt(x * (1 - x) / 1e5)


def test_propose_functions_return_vectors():
    gc = GrandCanonical.for_size(200)
    rng = RandomStream(3)
    for fn in (propose_poisson, propose_largest_index):
        v, budget = fn(gc, rng)
        assert isinstance(v, MultiplicityVector)
        assert all(z > 0 for z in v.counts.values())
        assert budget.uniform_draws >= 1
    v, budget = propose_naive(GrandCanonical(50, tilt_parameter(50)), rng)
    assert budget.uniform_draws == 50


def _weights(kind, x, hi, seed, size=10**5):
    return np.asarray(make_engine(kind, x, 1, hi).batch(RandomStream(seed), size).weights)


@pytest.mark.parametrize("other", ["poisson", "largest"])
def test_engines_agree_on_law_of_T(other):
    n = 50
    x = tilt_parameter(n)
    edges = np.arange(0, 150, 5)
    a = binned(_weights("naive", x, n, 11), edges)
    b = binned(_weights(other, x, n, 12), edges)
    assert chi_square_two_sample(a, b)[1] > 1e-3


def test_poisson_and_largest_agree_unbounded():
    x = tilt_parameter(50)
    edges = np.arange(0, 160, 5)
    a = binned(_weights("poisson", x, None, 13), edges)
    b = binned(_weights("largest", x, None, 14), edges)
    assert chi_square_two_sample(a, b)[1] > 1e-3


def test_poisson_multiplicities_match_geometric():
    # Z_i for a few fixed i against the exact geometric law.
    x = tilt_parameter(400)
    size = 50_000
    b = PoissonEngine(x, 1, 400).batch(RandomStream(15), size)
    for i in (1, 3, 20):
        z = np.zeros(size, dtype=np.int64)
        sel = b.key == i
        np.add.at(z, b.owner[sel], b.amount[sel])
        top = 12
        obs = np.bincount(np.minimum(z, top), minlength=top + 1)
        k = np.arange(top + 1)
        pk = (1 - x**i) * x ** (i * k)
        pk[-1] = x ** (i * top)
        mask = pk * size >= 5
        exp = pk[mask] * size
        o = obs[mask].astype(float)
        o[-1] += obs[~mask].sum()
        exp[-1] += pk[~mask].sum() * size
        assert chisquare(o, exp)[1] > 1e-3


def test_poisson_tail_rows_exercised(monkeypatch):
    # A two-row head table pushes most arrivals through the thinned tail.
    monkeypatch.setattr(PoissonEngine, "HEAD_ROWS", 2)
    x = 0.97
    eng = PoissonEngine(x, 1, 60)
    assert eng.head_rows == 2
    edges = np.arange(0, 200, 6)
    a = binned(np.asarray(eng.batch(RandomStream(16), 60_000).weights), edges)
    b = binned(np.asarray(NaiveEngine(x, 1, 60).batch(RandomStream(17), 60_000).weights), edges)
    assert chi_square_two_sample(a, b)[1] > 1e-3


def test_total_rate_bounds():
    for n in (10**2, 10**4, 10**6):
        x = tilt_parameter(n)
        s = poisson_total_rate(x)
        assert s <= math.pi**2 / 6 * x / (1 - x)
    n = 10**6
    assert poisson_total_rate(tilt_parameter(n)) / math.sqrt(n) == pytest.approx(C, rel=0.05)


def test_largest_index_law():
    x = tilt_parameter(100)
    law = largest_index_law(x, 20_000)
    assert law[0] == pytest.approx(math.exp(log_euler_product(x)), rel=1e-12)
    assert law.sum() == pytest.approx(1.0, abs=1e-10)


def test_poisson_draws_scale():
    n = 10**6
    x = tilt_parameter(n)
    b = PoissonEngine(x).batch(RandomStream(18), 500)
    assert np.mean(b.draws) <= 2 * C * math.sqrt(n)


def test_batch_handles_huge_weights():
    x = tilt_parameter(10**12)
    b = make_engine("poisson", x, 1, None).batch(RandomStream(19), 2)
    for k in range(2):
        assert b.weight(k) == sum(i * z for i, z in b.items(k).items())


# --- parity bits ------------------------------------------------------------------


def test_parity_mean():
    n = 100
    x = tilt_parameter(n)
    size = 10**5
    b = ParityEngine(x, 1, n).batch(RandomStream(20), size)
    eps1 = np.zeros(size)
    eps1[b.owner[b.key == 1]] = 1
    p = x / (1 + x)
    assert abs(eps1.mean() - p) <= 3 * math.sqrt(p * (1 - p) / size)


def test_parity_reconstruction_law():
    # eps_1(x) + 2 Z_1(x^2) has the law of Z_1(x).
    x = tilt_parameter(100)
    size = 10**5
    rng = RandomStream(21)
    b = ParityEngine(x, 1, 1).batch(rng, size)
    eps = np.zeros(size, dtype=np.int64)
    eps[b.owner] = 1
    half = NaiveEngine(x * x, 1, 1).batch(rng, size)
    z2 = np.zeros(size, dtype=np.int64)
    z2[half.owner] = half.amount
    rebuilt = eps + 2 * z2
    direct = np.zeros(size, dtype=np.int64)
    d = NaiveEngine(x, 1, 1).batch(rng, size)
    direct[d.owner] = d.amount
    edges = np.arange(0, 40)
    assert chi_square_two_sample(binned(rebuilt, edges), binned(direct, edges))[1] > 1e-3


def test_parity_small_x_all_zero():
    b = ParityEngine(1e-9, 1, 50).batch(RandomStream(22), 1000)
    assert np.count_nonzero(np.asarray(b.weights)) <= 1


def test_propose_parity_vector():
    gc = GrandCanonical.for_size(300)
    v, budget = propose_parity(gc, 2, RandomStream(23))
    assert all(2 <= i <= 300 for i in v.ones)
    assert v.weight == sum(v.ones)
    with pytest.raises(ValueError):
        propose_parity(gc, 0, RandomStream(23))


# --- restricted tilts ---------------------------------------------------------------


def test_bounded_tilt():
    assert solve_bounded_tilt(10, 2) == pytest.approx(10 / 11, rel=1e-14)
    n, k = 1000, 50
    x = solve_bounded_tilt(n, k)
    i = np.arange(1, k)
    assert abs(n - np.sum(i * x**i / (1 - x**i))) / n < 1e-10
    assert abs(solve_bounded_tilt(10**4, 10**6) - tilt_parameter(10**4)) < 1e-3


def test_roaming_tilt():
    assert roaming_tilt(1, 7) == pytest.approx(7 / 8, rel=1e-14)
    b, target = 50, 500
    y = roaming_tilt(b, target)
    assert abs(_mean_weight(-math.log(y), b) - target) / target < 1e-8
    assert roaming_tilt(20, 100) < roaming_tilt(20, 101)


def test_set_partition_tilt():
    assert set_partition_tilt(math.e) == pytest.approx(1.0, abs=1e-12)
    x = set_partition_tilt(10**6)
    assert abs(x * math.exp(x) - 10**6) / 10**6 < 1e-10
    for n in (10, 100, 10**4, 10**8):
        x = set_partition_tilt(n)
        assert math.log(n) - math.log(math.log(n)) - 1 < x < math.log(n)


def test_set_partition_rates():
    x = set_partition_tilt(1000)
    lam = set_partition_rates(x, 400)
    assert lam[0] == pytest.approx(x)
    tail = mpmath.nsum(lambda i: mpmath.mpf(x) ** i / mpmath.factorial(i), [int(4 * x) + 1, mpmath.inf])
    assert lam[int(4 * x) :].sum() == pytest.approx(float(tail), rel=1e-9)
    assert lam[int(4 * x) :].sum() < 1e-4 and lam[int(6 * x) :].sum() < 1e-10
    assert lam.sum() == pytest.approx(math.expm1(x), abs=1e-10)
    size = 10**5
    b = SetPartitionEngine(set_partition_tilt(100), 100).batch(RandomStream(24), size)
    z1 = np.zeros(size)
    sel = b.key == 1
    z1[b.owner[sel]] = b.amount[sel]
    x = set_partition_tilt(100)
    assert abs(z1.mean() - x) <= 3 * math.sqrt(x / size)


def test_plane_tilt_and_box():
    oracle = mpmath.exp(-mpmath.cbrt(2 * mpmath.zeta(3) / 10**6))
    assert plane_tilt(10**6) == pytest.approx(float(oracle), rel=1e-14)
    assert -math.log(plane_tilt(10**6)) == pytest.approx(0.0133963, abs=1e-7)
    for n in (6, 1000, 10**5):
        x = plane_tilt(n)
        B = plane_support_box(n)
        assert plane_outside_mass(x, B) < 2.0**-50 <= plane_outside_mass(x, B - 1)


def test_plane_origin_and_mean_weight():
    x = plane_tilt(10**4)
    size = 1000
    eng = PlaneEngine(x, plane_support_box(10**4))
    b = eng.batch(RandomStream(25), size)
    assert np.mean(np.asarray(b.weights)) / 10**4 == pytest.approx(1.0, rel=0.05)
    b = PlaneEngine(x, 40).batch(RandomStream(26), 20_000)
    origin = np.zeros(20_000)
    sel = b.key == 0
    origin[b.owner[sel]] = b.amount[sel]
    assert abs(np.mean(origin >= 1) - x) <= 3 * math.sqrt(x * (1 - x) / 20_000)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32), kind=st.sampled_from(["naive", "poisson", "largest"]), n=st.integers(1, 300))
def test_batch_weights_consistent(seed, kind, n):
    b = make_engine(kind, tilt_parameter(n), 1, n).batch(RandomStream(seed), 5)
    for k in range(5):
        items = b.items(k)
        assert all(1 <= i <= n and z > 0 for i, z in items.items())
        assert b.weight(k) == sum(i * z for i, z in items.items())


def test_largest_index_engine_range():
    eng = LargestIndexEngine(tilt_parameter(30), 3, 30)
    b = eng.batch(RandomStream(27), 2000)
    assert b.key.min() >= 3 and b.key.max() <= 30
