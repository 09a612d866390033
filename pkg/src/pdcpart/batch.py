"""Mix-and-match batches, missing-data intervals and the opportunistic estimator.

Phase A accepts m large-part vectors exactly as the small-versus-large
sampler does and turns each into a demand: the residual r = n - T_A the
small parts must fill.  Phase B then streams small-part proposals and
hands each one whose weight equals an outstanding residual to the
earliest-accepted slot still waiting on that residual.  The assignment
rule only uses information available before the proposal is looked at,
so every completed slot is an exact uniform partition and slots are
i.i.d.; labelling by discovery order would not be.
"""

from __future__ import annotations

import math
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import norm

from .ensemble import make_engine, roaming_tilt, tilt_parameter
from .rng import RandomStream, RngBudget
from .samplers import Partition, PoolSet, SampleStats, _Meter, accept_large_parts, default_split

__all__ = [
    "MISSING",
    "BatchResult",
    "DemandMultiset",
    "EstimatorReport",
    "batch_mix_match",
    "conjugate",
    "dominance_interval",
    "dominates",
    "opportunistic_estimate",
    "roaming_tilt",
    "SCORES",
]

MISSING = None


class DemandMultiset:
    """Outstanding residuals, each with the queue of slots waiting on it."""

    def __init__(self):
        self._slots: dict[int, deque[int]] = {}
        self.m_out = 0

    def add(self, color: int, slot: int) -> None:
        self._slots.setdefault(color, deque()).append(slot)
        self.m_out += 1

    def __contains__(self, color: int) -> bool:
        return color in self._slots

    def __len__(self) -> int:
        return self.m_out

    def colors(self) -> list[int]:
        return sorted(self._slots)

    def multiplicity(self, color: int) -> int:
        q = self._slots.get(color)
        return len(q) if q else 0

    def most_frequent(self) -> int:
        """Color with the most waiting slots, smallest color on ties."""
        return min(self._slots, key=lambda c: (-len(self._slots[c]), c))

    def take(self, color: int) -> int:
        """Earliest-accepted slot waiting on ``color``."""
        q = self._slots[color]
        slot = q.popleft()
        if not q:
            del self._slots[color]
        self.m_out -= 1
        return slot


@dataclass
class BatchResult:
    samples: list
    missing_count: int
    residuals: list[int]
    discovery_order: list[int]
    phase_a: SampleStats = field(default_factory=SampleStats)
    phase_b_proposals: int = 0
    phase_b_rng: RngBudget = field(default_factory=RngBudget)

    @property
    def completed(self) -> list[Partition]:
        return [s for s in self.samples if s is not MISSING]

    def by_discovery(self) -> list[Partition]:
        return [self.samples[i] for i in self.discovery_order]


def batch_mix_match(
    n: int,
    b: int | None,
    m: int,
    rng: RandomStream,
    roaming: bool = True,
    v_max: int = 0,
    engine: str = "poisson",
) -> BatchResult:
    """m exact uniform partitions of n, or m - v of them with v <= v_max missing.

    Phase B stops as soon as m - v_max demands are met.  With ``roaming``
    each proposal's tilt is aimed at the most frequent outstanding
    residual; otherwise every proposal uses x(n).
    """
    if n < 2:
        raise ValueError("need n >= 2")
    b = default_split(n) if b is None else b
    if not 1 <= b < n:
        raise ValueError("need 1 <= b < n")
    if m < 1 or not 0 <= v_max <= m:
        raise ValueError("need m >= 1 and 0 <= v_max <= m")
    pools = PoolSet(rng)
    meter = _Meter(rng)
    stats_a = SampleStats()
    large: list[dict[int, int]] = []
    residuals: list[int] = []
    samples: list = [MISSING] * m
    demands = DemandMultiset()
    order: list[int] = []
    for slot in range(m):
        counts, res = accept_large_parts(n, b, rng, engine, True, pools, stats_a)
        large.append(counts)
        residuals.append(res)
        if res == 0:
            samples[slot] = Partition.from_counts(counts)
            order.append(slot)
        else:
            demands.add(res, slot)
    stats_a.accepted = m
    stats_a.rng = meter.spent()

    meter = _Meter(rng)
    x = tilt_parameter(n)
    used_b = 0
    goal = m - v_max
    while len(order) < goal:
        y = roaming_tilt(b, demands.most_frequent()) if roaming else x
        pool = pools.get(("small", engine, b, y), lambda: make_engine(engine, y, 1, b), 16, 4096)
        wanted = np.array(demands.colors())
        batch, k, used = pool.next_where(lambda w: np.isin(w, wanted))
        used_b += used
        color = int(batch.weights[k])
        slot = demands.take(color)
        merged = dict(large[slot])
        merged.update(batch.items(k))
        samples[slot] = Partition.from_counts(merged)
        order.append(slot)
    return BatchResult(
        samples=samples,
        missing_count=sum(s is MISSING for s in samples),
        residuals=residuals,
        discovery_order=order,
        phase_a=stats_a,
        phase_b_proposals=used_b,
        phase_b_rng=meter.spent(),
    )


# ---------------------------------------------------------------------------
# dominance order
# ---------------------------------------------------------------------------


def dominates(lam: Partition, mu: Partition) -> bool:
    """True iff every prefix sum of ``lam`` is at least that of ``mu``."""
    if lam.n != mu.n:
        raise ValueError("dominance compares partitions of the same n")
    size = max(len(lam.parts), len(mu.parts))
    a = np.full(size, lam.n, dtype=np.int64)
    c = np.full(size, mu.n, dtype=np.int64)
    a[: len(lam.parts)] = np.cumsum(lam.parts)
    c[: len(mu.parts)] = np.cumsum(mu.parts)
    return bool(np.all(a >= c))


def conjugate(p: Partition) -> Partition:
    parts = p.parts
    if not parts:
        return p
    cols = np.zeros(parts[0], dtype=np.int64)
    for q in parts:
        cols[:q] += 1
    return Partition.from_parts(cols.tolist())


def dominance_interval(K: int, m: int, V: int, alpha: float = 0.05) -> tuple[float, float]:
    """Worst-case interval for a dominance probability with V of m pairs unobserved.

    [K/m - z r, (K+V)/m + z r], r = sqrt(p(1-p)/m) with p = (K + V/2)/m.
    The interval covers at least 1 - alpha whatever the missing pairs
    were; its center is not an unbiased estimate.
    """
    if m < 1 or not 0 <= V <= m or not 0 <= K <= m - V:
        raise ValueError("need 0 <= K <= m - V and 0 <= V <= m")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    z = float(norm.ppf(1.0 - alpha / 2.0))
    p = (K + V / 2.0) / m
    r = z * math.sqrt(p * (1.0 - p) / m)
    return K / m - r, (K + V) / m + r


# ---------------------------------------------------------------------------
# opportunistic estimator
# ---------------------------------------------------------------------------


@dataclass
class EstimatorReport:
    W: int
    G: float
    m1: int
    m2: int

    @property
    def g_bar_pairs(self) -> float:
        return self.G / (self.m1 * self.m2)

    @property
    def matched_defined(self) -> bool:
        return self.W > 0

    @property
    def g_bar_matched(self) -> float | None:
        return self.G / self.W if self.W else None

    def as_dict(self) -> dict:
        return {
            "W": self.W,
            "G": self.G,
            "m1": self.m1,
            "m2": self.m2,
            "g_bar_pairs": self.g_bar_pairs,
            "g_bar_matched": self.g_bar_matched,
        }


def _grouped(batch, limit):
    w = np.asarray(batch.weights)
    groups: dict = defaultdict(int)
    for k in np.flatnonzero(w <= limit):
        groups[(int(w[k]), tuple(sorted(batch.items(int(k)).items())))] += 1
    return groups


def opportunistic_estimate(
    n: int,
    b: int | None,
    m1: int,
    m2: int,
    g: Callable[[Partition], float],
    rng: RandomStream,
    engine: str = "poisson",
) -> EstimatorReport:
    """Score every matching pair among m1 large-part and m2 small-part proposals.

    Proposals are plain draws at x(n) over part sizes 1..n, with no
    thresholds.  W counts pairs with T_A + T_B = n and G sums g over the
    merged partitions of those pairs.  G/(m1 m2) is unbiased for
    P(T = n) E g(S); G/W is consistent for E g(S).
    """
    if m1 < 1 or m2 < 1:
        raise ValueError("need m1, m2 >= 1")
    b = default_split(n) if b is None else b
    if not 1 <= b < n:
        raise ValueError("need 1 <= b < n")
    x = tilt_parameter(n)
    big = _grouped(make_engine(engine, x, b + 1, n).batch(rng, m1), n)
    small = _grouped(make_engine(engine, x, 1, b).batch(rng, m2), n)
    by_weight: dict[int, list] = defaultdict(list)
    for (t, vec), cnt in small.items():
        by_weight[t].append((vec, cnt))
    W = 0
    G = 0.0
    for (t, vec_a), cnt_a in big.items():
        for vec_b, cnt_b in by_weight.get(n - t, ()):
            pairs = cnt_a * cnt_b
            merged = dict(vec_a)
            merged.update(vec_b)
            W += pairs
            G += pairs * float(g(Partition.from_counts(merged)))
    return EstimatorReport(W, G, m1, m2)


SCORES: dict[str, Callable[[Partition], float]] = {
    "one": lambda p: 1.0,
    "largest-even": lambda p: float(p.largest % 2 == 0),
    "dominance-pairs": lambda p: float(dominates(p, conjugate(p))),
}
