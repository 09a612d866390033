import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pdcpart.batch import (
    MISSING,
    SCORES,
    DemandMultiset,
    batch_mix_match,
    conjugate,
    dominance_interval,
    dominates,
    opportunistic_estimate,
)
from pdcpart.rng import RandomStream
from pdcpart.samplers import Partition, PoolSet, sample_pdc_small_large
from pdcpart.verify import chi_square_two_sample, chi_square_uniform, enumerate_partitions, iter_partitions

# --- demand multiset ----------------------------------------------------------------------


def test_demand_multiset():
    d = DemandMultiset()
    for color, slot in [(5, 0), (3, 1), (5, 2), (3, 3), (7, 4)]:
        d.add(color, slot)
    assert len(d) == 5 and d.colors() == [3, 5, 7]
    assert d.multiplicity(5) == 2 and d.multiplicity(4) == 0
    assert d.most_frequent() == 3
    assert d.take(5) == 0 and d.take(5) == 2
    assert 5 not in d and len(d) == 3


# --- mix and match --------------------------------------------------------------------------


def test_batch_slots_and_order():
    res = batch_mix_match(40, None, 50, RandomStream(1))
    assert res.missing_count == 0 and len(res.completed) == 50
    assert sorted(res.discovery_order) == list(range(50))
    assert all(p.n == 40 for p in res.samples)
    assert res.by_discovery()[0] is res.samples[res.discovery_order[0]]
    for slot, r in enumerate(res.residuals):
        small = sum(i * z for i, z in res.samples[slot].mults if i <= 6)
        assert small == r


def test_batch_missing_data():
    res = batch_mix_match(200, None, 40, RandomStream(2), v_max=7)
    assert res.missing_count <= 7
    assert res.missing_count == sum(s is MISSING for s in res.samples)
    assert len(res.completed) == 40 - res.missing_count >= 33


def test_batch_validates():
    for args in [(1, None, 5), (10, 10, 5), (10, 3, 0)]:
        with pytest.raises(ValueError):
            batch_mix_match(*args, RandomStream(1))
    with pytest.raises(ValueError):
        batch_mix_match(10, 3, 5, RandomStream(1), v_max=6)


def test_batch_single_slot_matches_small_large(parts12):
    rng = RandomStream(3)
    a = parts12.counts(batch_mix_match(12, 3, 1, rng).samples[0] for _ in range(20_000))
    rng = RandomStream(4)
    pools = PoolSet(rng)
    b = parts12.counts(sample_pdc_small_large(12, 3, rng, pools=pools)[0] for _ in range(20_000))
    assert chi_square_two_sample(a, b)[1] > 1e-3


@pytest.mark.parametrize("roaming", [True, False])
def test_batch_pooled_uniformity(parts12, roaming):
    draws = []
    for rep in range(30):
        draws += batch_mix_match(12, 3, 1000, RandomStream(100 + rep), roaming=roaming).samples
    assert chi_square_uniform(parts12.counts(draws))[1] > 1e-3


@pytest.mark.slow
def test_coupon_collector_gain():
    n, m = 1000, 1000
    single = [sample_pdc_small_large(n, None, RandomStream.substream(5, i))[1].phase_b_proposals for i in range(400)]
    per_sample = float(np.mean(single))
    totals = [batch_mix_match(n, None, m, RandomStream.substream(6, r)).phase_b_proposals for r in range(20)]
    assert np.mean(totals) < m * per_sample


# --- dominance ---------------------------------------------------------------------------


def P(*parts):
    return Partition.from_parts(parts)


def test_dominates_examples():
    assert dominates(P(4), P(2, 2))
    assert not dominates(P(2, 2), P(3, 1))
    with pytest.raises(ValueError):
        dominates(P(3), P(2))


def brute_dominates(a, b):
    sa = np.cumsum(list(a.parts) + [0] * 20)[:20]
    sb = np.cumsum(list(b.parts) + [0] * 20)[:20]
    return bool(np.all(sa >= sb))


def test_dominance_against_brute_force_and_conjugation():
    parts = [Partition.from_parts(p) for p in iter_partitions(9)]
    for a in parts:
        assert dominates(a, a)
        assert conjugate(conjugate(a)) == a
        for b in parts:
            assert dominates(a, b) == brute_dominates(a, b)
            # Conjugation reverses dominance.
            assert dominates(a, b) == dominates(conjugate(b), conjugate(a))


@given(st.lists(st.integers(1, 12), min_size=1, max_size=15))
def test_conjugate_preserves_weight(parts):
    p = Partition.from_parts(parts)
    c = conjugate(p)
    assert c.n == p.n and c.largest == p.num_parts


def test_dominance_interval_reductions():
    lo, hi = dominance_interval(40, 100, 0)
    assert (lo + hi) / 2 == pytest.approx(0.4)
    r = 1.959963984540054 * math.sqrt(0.4 * 0.6 / 100)
    assert hi - lo == pytest.approx(2 * r)
    lo, hi = dominance_interval(0, 50, 50)
    assert lo < 0 and hi > 1
    for bad in [(5, 10, 6), (-1, 10, 0), (0, 10, 11)]:
        with pytest.raises(ValueError):
            dominance_interval(*bad)


@pytest.fixture(scope="module")
def dominance_matrix():
    parts = [Partition.from_parts(p) for p in iter_partitions(12)]
    return np.array([[dominates(a, b) for b in parts] for a in parts])


def test_dominance_interval_coverage(dominance_matrix):
    pi = dominance_matrix.mean()
    gen = np.random.default_rng(7)
    m, V, trials = 200, 10, 1000
    covered = 0
    for _ in range(trials):
        i = gen.integers(0, 77, m)
        j = gen.integers(0, 77, m)
        hits = dominance_matrix[i, j]
        K = int(hits[: m - V].sum())
        lo, hi = dominance_interval(K, m, V, 0.05)
        covered += lo <= pi <= hi
    assert covered / trials >= 0.95


# --- estimator ---------------------------------------------------------------------------


def test_estimator_g_one_counts_pairs():
    rep = opportunistic_estimate(12, None, 200, 300, SCORES["one"], RandomStream(8))
    assert rep.G == rep.W and rep.m1 == 200 and rep.m2 == 300
    assert rep.g_bar_pairs == pytest.approx(rep.W / 60_000)


def test_estimator_flags_empty_matches():
    rep = opportunistic_estimate(10**4, None, 1, 1, SCORES["one"], RandomStream(9))
    if rep.W == 0:
        assert not rep.matched_defined and rep.g_bar_matched is None
        assert rep.as_dict()["g_bar_matched"] is None
    else:
        assert rep.matched_defined


def test_estimator_consistency(parts12):
    g = SCORES["dominance-pairs"]
    eg = np.mean([g(Partition.from_parts(p)) for p in parts12.partitions])
    rep = opportunistic_estimate(12, None, 10**4, 10**4, g, RandomStream(10))
    assert abs(rep.g_bar_matched - eg) < 0.02


def test_scores():
    assert SCORES["largest-even"](P(4, 1)) == 1.0
    assert SCORES["largest-even"](P(3, 2)) == 0.0
    assert SCORES["dominance-pairs"](P(3)) == 1.0
    assert SCORES["dominance-pairs"](P(1, 1, 1)) == 0.0
