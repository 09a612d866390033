"""Exact uniform samplers for integer partitions of n.

* :func:`sample_table`           big-integer count table, one draw per sample
* :func:`sample_lucky`           propose the whole vector until T = n
* :func:`sample_pdc_small_large` split at b: large parts by rejection, small parts by matching
* :func:`sample_pdc_trivial`     b = 1: Z_1 is forced once Z_2.. are accepted
* :func:`sample_pdc_recursive`   strip the parity bits, halve, repeat

Rejection samplers pull proposals from a :class:`ProposalPool`, which
draws them in vectorised batches.  A proposal is only looked at when it
is consumed, so leftovers can serve the next sample; passing a shared
:class:`PoolSet` (as :func:`sample_many` does) amortises batch overhead.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from functools import lru_cache

import mpmath
import numpy as np

from .coin import AcceptanceCoin
from .counting import (
    DEFAULT_EXACT_CUTOFF,
    LEHMER_MIN_N,
    CountTable,
    build_count_table,
    count_row,
    log_partition_count,
    log_partition_count_mp,
    log_partition_counts,
    log_partition_ratio,
    sum_distribution,
)
from .ensemble import MultiplicityVector, ProposalBatch, ParityEngine, make_engine, roaming_tilt, tilt_parameter
from .rng import RandomStream, RngBudget

DEFAULT_BASE_CUTOFF = LEHMER_MIN_N


@dataclass(frozen=True)
class Partition:
    """A partition stored as (part, multiplicity) pairs, largest part first."""

    mults: tuple[tuple[int, int], ...]

    @classmethod
    def from_parts(cls, parts) -> "Partition":
        counts: dict[int, int] = {}
        for p in parts:
            p = int(p)
            if p < 1:
                raise ValueError("parts must be positive")
            counts[p] = counts.get(p, 0) + 1
        return cls.from_counts(counts)

    @classmethod
    def from_counts(cls, counts) -> "Partition":
        items = tuple(sorted(((int(i), int(z)) for i, z in dict(counts).items() if z), reverse=True))
        for i, z in items:
            if i < 1 or z < 0:
                raise ValueError("bad multiplicity entry")
        return cls(items)

    @classmethod
    def from_vector(cls, v: MultiplicityVector) -> "Partition":
        return cls.from_counts(v.counts)

    @property
    def n(self) -> int:
        return sum(i * z for i, z in self.mults)

    weight = n

    @property
    def parts(self) -> tuple[int, ...]:
        out: list[int] = []
        for i, z in self.mults:
            out.extend([i] * z)
        return tuple(out)

    @property
    def largest(self) -> int:
        return self.mults[0][0] if self.mults else 0

    @property
    def num_parts(self) -> int:
        return sum(z for _, z in self.mults)

    def multiplicity(self, i: int) -> int:
        for part, z in self.mults:
            if part == i:
                return z
        return 0

    def counts(self) -> dict[int, int]:
        return dict(self.mults)

    def to_vector(self) -> MultiplicityVector:
        return MultiplicityVector(self.counts(), self.n)

    def __str__(self) -> str:
        return " ".join(map(str, self.parts))


@dataclass
class SampleStats:
    proposals: int = 0
    accepted: int = 0
    rng: RngBudget = field(default_factory=RngBudget)
    recursion_depth: int = 0
    per_level: list[tuple[int, int]] = field(default_factory=list)
    hard_rejections: int = 0
    phase_b_proposals: int = 0

    def as_dict(self) -> dict:
        return {
            "proposals": self.proposals,
            "accepted": self.accepted,
            "rng": self.rng.as_dict(),
            "recursion_depth": self.recursion_depth,
            "per_level": [list(p) for p in self.per_level],
            "hard_rejections": self.hard_rejections,
            "phase_b_proposals": self.phase_b_proposals,
        }


class _Meter:
    """Snapshot a stream's budget so a sampler can report its own usage."""

    def __init__(self, rng: RandomStream):
        self.rng = rng
        self.start = copy.copy(rng.budget)

    def spent(self) -> RngBudget:
        b, s = self.rng.budget, self.start
        return RngBudget(
            b.uniform_draws - s.uniform_draws,
            b.acceptance_coins - s.acceptance_coins,
            b.escalations - s.escalations,
        )


class ProposalPool:
    """An endless stream of i.i.d. proposals drawn in growing batches.

    Consumers take proposals in order; anything not yet taken is still a
    fresh independent draw, so several samples may share one pool.
    """

    def __init__(self, engine, rng: RandomStream, first: int = 8, cap: int = 1024):
        self.engine, self.rng = engine, rng
        self.size, self.cap = first, cap
        self.batch = None
        self.pos = 0
        self._w = None

    def _refill(self):
        self.batch = self.engine.batch(self.rng, self.size)
        self._w = np.asarray(self.batch.weights)
        self.pos = 0
        self.size = min(self.cap, 2 * self.size)

    def next_where(self, keep) -> tuple[ProposalBatch, int, int]:
        """First remaining proposal whose weight passes ``keep``; also how many were used."""
        used = 0
        while True:
            if self.batch is None or self.pos >= self.batch.size:
                self._refill()
            hits = np.flatnonzero(keep(self._w[self.pos :]))
            if len(hits):
                k = self.pos + int(hits[0])
                used += k - self.pos + 1
                self.pos = k + 1
                return self.batch, k, used
            used += self.batch.size - self.pos
            self.pos = self.batch.size


class PoolSet:
    """Pools keyed by what they propose, so repeated samples reuse batches."""

    def __init__(self, rng: RandomStream):
        self.rng = rng
        self._pools: dict = {}

    def get(self, key, make_engine_fn, first=8, cap=1024) -> ProposalPool:
        pool = self._pools.get(key)
        if pool is None:
            pool = self._pools[key] = ProposalPool(make_engine_fn(), self.rng, first, cap)
        return pool


def _pool(pools, rng, key, factory, first, cap):
    if pools is None:
        return ProposalPool(factory(), rng, first, cap)
    return pools.get(key, factory, first, cap)


def _trivial(n: int):
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n == 0:
        return Partition(())
    if n == 1:
        return Partition(((1, 1),))
    return None


# ---------------------------------------------------------------------------
# table method
# ---------------------------------------------------------------------------


@lru_cache(maxsize=4)
def cached_table(n: int) -> CountTable:
    return build_count_table(max(n, 1), n)


def sample_table(n: int, table: CountTable | None, rng: RandomStream, max_part: int | None = None) -> Partition:
    """Uniform partition of n (parts <= max_part) from p(<=k, m).

    One uniform integer r < p(<=k, n) is drawn and decoded through
    p(<=k, m) = p(<=k-1, m) + p(<=k, m-k): r below the first term means
    no part of size k remains, otherwise a part k is emitted and r shifts
    down.  Each step keeps r uniform on its new range.
    """
    if n == 0:
        return Partition(())
    k = n if max_part is None else min(max_part, n)
    if k < 1:
        raise ValueError("no partition of n > 0 with parts below 1")
    if table is None:
        table = cached_table(n)
    if table.streaming or table.max_part < k or table.max_weight < n:
        raise ValueError(f"{table!r} does not cover partitions of {n} with parts <= {k}")
    rows = [table.row(j) for j in range(k + 1)]
    m = n
    r = rng.randbelow(rows[k][m])
    counts: dict[int, int] = {}
    while m > 0:
        if k > m:
            k = m
        below = rows[k - 1][m] if k > 1 else 0
        if r < below:
            k -= 1
        else:
            r -= below
            counts[k] = counts.get(k, 0) + 1
            m -= k
    return Partition.from_counts(counts)


# ---------------------------------------------------------------------------
# waiting to get lucky
# ---------------------------------------------------------------------------


def sample_lucky(n: int, rng: RandomStream, engine: str = "poisson", pools: PoolSet | None = None):
    """Propose Z_1..Z_n at x(n) until sum i Z_i = n."""
    meter = _Meter(rng)
    stats = SampleStats()
    done = _trivial(n)
    if done is not None:
        stats.accepted = 1
        return done, stats
    x = tilt_parameter(n)
    pool = _pool(pools, rng, ("lucky", engine, n), lambda: make_engine(engine, x, 1, n), 64, 4096)
    batch, k, used = pool.next_where(lambda w: w == n)
    stats.proposals = used
    stats.accepted = 1
    stats.rng = meter.spent()
    return Partition.from_counts(batch.items(k)), stats


# ---------------------------------------------------------------------------
# b = 1
# ---------------------------------------------------------------------------


def _log_x(x: float, prec: int):
    return mpmath.log(mpmath.mpf(x))


def _soft_reject(pool, rng, stats, limit, log_threshold, exact_threshold, escalate):
    """Run proposals through hard rejection (T_A > limit) and the coin; return the winner."""
    while True:
        batch, k, used = pool.next_where(lambda w: w <= limit)
        stats.proposals += used
        stats.hard_rejections += used - 1
        res = limit - int(batch.weights[k])
        log_t = log_threshold(res)
        if log_t == -math.inf:
            continue
        if AcceptanceCoin(log_t, exact_threshold(res), escalate=escalate).flip(rng):
            return batch, k, res


def sample_pdc_trivial(
    n: int,
    rng: RandomStream,
    engine: str = "poisson",
    escalate: bool = True,
    pools: PoolSet | None = None,
):
    """Accept (Z_2, ..., Z_n) with probability x**(n - T_A); then Z_1 = n - T_A."""
    meter = _Meter(rng)
    stats = SampleStats()
    done = _trivial(n)
    if done is not None:
        stats.accepted = 1
        return done, stats
    x = tilt_parameter(n)
    lx = math.log(x)
    pool = _pool(pools, rng, ("trivial", engine, n), lambda: make_engine(engine, x, 2, n), 8, 256)
    batch, k, gap = _soft_reject(
        pool,
        rng,
        stats,
        n,
        lambda gap: gap * lx,
        lambda gap: (lambda prec: gap * _log_x(x, prec)),
        escalate,
    )
    counts = batch.items(k)
    if gap:
        counts[1] = gap
    stats.accepted = 1
    stats.rng = meter.spent()
    return Partition.from_counts(counts), stats


# ---------------------------------------------------------------------------
# small versus large
# ---------------------------------------------------------------------------


def sample_small_parts(
    b: int,
    r: int,
    rng: RandomStream,
    engine: str = "poisson",
    roaming: bool = True,
    x: float | None = None,
    pools: PoolSet | None = None,
):
    """(Z_1..Z_b) conditioned on sum i Z_i = r, by proposal until hit.

    The conditional law does not depend on the tilt, so by default the
    tilt is re-aimed at r.  Returns (counts, proposals used).
    """
    if r == 0:
        return {}, 0
    y = roaming_tilt(b, r) if roaming or x is None else x
    pool = _pool(pools, rng, ("small", engine, b, y), lambda: make_engine(engine, y, 1, b), 16, 4096)
    batch, k, used = pool.next_where(lambda w: w == r)
    return batch.items(k), used


def default_split(n: int) -> int:
    return max(1, math.isqrt(n))


@lru_cache(maxsize=32)
def _small_law(b: int, n: int, x: float):
    d = sum_distribution(b, n, x)
    with np.errstate(divide="ignore"):
        logq = np.log(d.q)
    return d.argmax, logq - logq[d.argmax]


def small_large_log_threshold(n: int, b: int, x: float, residual: int) -> float:
    """ln t(a) = ln(q_residual / max_j q_j), -inf when T_A > n."""
    if residual < 0:
        return -math.inf
    return float(_small_law(b, n, x)[1][residual])


def _small_large_exact(b, n, x, j, jstar):
    def exact(prec):
        row = count_row(b, n)
        with mpmath.workprec(prec):
            if row[j] == 0:
                return mpmath.mpf("-inf")
            return mpmath.log(mpmath.mpf(row[j]) / row[jstar]) + (j - jstar) * _log_x(x, prec)

    return exact


def accept_large_parts(
    n: int,
    b: int,
    rng: RandomStream,
    engine: str = "poisson",
    escalate: bool = True,
    pools: PoolSet | None = None,
    stats: SampleStats | None = None,
):
    """One accepted A = (Z_{b+1}..Z_n) at x(n); returns (counts, residual n - T_A)."""
    stats = SampleStats() if stats is None else stats
    x = tilt_parameter(n)
    jstar, logt = _small_law(b, n, x)
    pool = _pool(pools, rng, ("large", engine, n, b), lambda: make_engine(engine, x, b + 1, n), 8, 1024)
    batch, k, res = _soft_reject(
        pool,
        rng,
        stats,
        n,
        lambda r: float(logt[r]),
        lambda r: _small_large_exact(b, n, x, r, jstar),
        escalate,
    )
    return batch.items(k), res


def sample_pdc_small_large(
    n: int,
    b: int | None,
    rng: RandomStream,
    engine: str = "poisson",
    roaming: bool = True,
    escalate: bool = True,
    pools: PoolSet | None = None,
):
    """Large parts (Z_{b+1}..Z_n) by soft rejection, small parts by proposal at a roaming tilt."""
    meter = _Meter(rng)
    stats = SampleStats()
    done = _trivial(n)
    if done is not None:
        stats.accepted = 1
        return done, stats
    b = default_split(n) if b is None else b
    if not 1 <= b < n:
        raise ValueError("need 1 <= b < n")
    counts, res = accept_large_parts(n, b, rng, engine, escalate, pools, stats)
    small, used = sample_small_parts(b, res, rng, engine, roaming, tilt_parameter(n), pools)
    counts.update(small)
    stats.phase_b_proposals = used
    stats.accepted = 1
    stats.rng = meter.spent()
    return Partition.from_counts(counts), stats


# ---------------------------------------------------------------------------
# recursive halving
# ---------------------------------------------------------------------------

_BRUTE_MODE = 5000


@lru_cache(maxsize=1024)
def halved_mode(n: int, x: float) -> int:
    """argmax over 0 <= m <= n/2 of ln p_m + 2 m ln x.

    Small ranges are scanned outright.  Otherwise the increment
    ln(p_m / p_{m-1}) + 2 ln x is decreasing in m (p_m is log-concave past
    m = 25), so its last nonnegative point is found by bisection and
    compared against the scanned head m <= 26.
    """
    top = n // 2
    lx2 = 2.0 * math.log(x)
    if top <= _BRUTE_MODE:
        m = np.arange(top + 1)
        g = log_partition_counts(m) + lx2 * m
        return int(np.argmax(g))
    head = np.arange(27)
    gh = log_partition_counts(head) + lx2 * head
    best_head = int(np.argmax(gh))
    lo, hi = 26, top
    if log_partition_ratio(hi, hi - 1) + lx2 >= 0.0:
        m_tail = hi
    else:
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if log_partition_ratio(mid, mid - 1) + lx2 >= 0.0:
                lo = mid
            else:
                hi = mid
        m_tail = lo
    if log_partition_ratio(m_tail, best_head) + lx2 * (m_tail - best_head) >= 0.0:
        return m_tail
    return best_head


def recursive_log_threshold(residual: int, mstar: int, x: float, exact_cutoff=DEFAULT_EXACT_CUTOFF) -> float:
    """ln t for a residual r = n - T_A with the parity bit folded in.

    P(eps_1 = r mod 2) P_{x^2}(T = floor(r/2)) over its maximum
    simplifies to (p_{r//2} / p_{m*}) x**(r - 2 m*).
    """
    half = residual // 2
    return log_partition_ratio(half, mstar, exact_cutoff) + (residual - 2 * mstar) * math.log(x)


def _recursive_exact(residual, mstar, x):
    def exact(prec):
        with mpmath.workprec(prec):
            return (
                log_partition_count_mp(residual // 2, prec)
                - log_partition_count_mp(mstar, prec)
                + (residual - 2 * mstar) * _log_x(x, prec)
            )

    return exact


def sample_pdc_recursive(
    n: int,
    rng: RandomStream,
    base_cutoff: int = DEFAULT_BASE_CUTOFF,
    parity: bool = True,
    escalate: bool = True,
    exact_cutoff: int = DEFAULT_EXACT_CUTOFF,
    pools: PoolSet | None = None,
):
    """Uniform partition via Z_i(x) = eps_i(x) + 2 Z_i(x**2).

    Each level proposes the parity bits (eps_2..eps_n, or eps_1..eps_n
    without the parity trick), accepts them against the halved remainder
    and continues with n' = (n - T_A - eps_1) / 2 at a fresh tilt x(n').
    At or below ``base_cutoff`` the table method finishes the job.
    """
    if base_cutoff < 1:
        raise ValueError("base_cutoff must be positive")
    meter = _Meter(rng)
    stats = SampleStats()
    done = _trivial(n)
    if done is not None:
        stats.accepted = 1
        return done, stats
    levels: list[tuple[int, ...]] = []
    target = n
    while target > base_cutoff:
        x = tilt_parameter(target)
        mstar = halved_mode(target, x)
        lo = 2 if parity else 1
        cap = 1024 if target < 10**5 else 16
        pool = _pool(pools, rng, ("parity", target, lo), lambda: ParityEngine(x, lo, target), 2, cap)
        before = stats.proposals
        if parity:
            log_threshold = lambda r: recursive_log_threshold(r, mstar, x, exact_cutoff)
        else:
            log_threshold = lambda r: -math.inf if r % 2 else recursive_log_threshold(r, mstar, x, exact_cutoff)
        batch, k, res = _soft_reject(
            pool,
            rng,
            stats,
            target,
            log_threshold,
            lambda r: _recursive_exact(r, mstar, x),
            escalate,
        )
        ones = pool.engine.ones(batch, k)
        if parity and res % 2:
            ones = (1,) + ones
        levels.append(ones)
        stats.per_level.append((target, stats.proposals - before))
        target = res // 2
    base = sample_table(target, None, rng) if target else Partition(())
    counts: dict[int, int] = {}
    scale = 1 << len(levels)
    for i, z in base.mults:
        counts[i] = z * scale
    for depth, ones in enumerate(levels):
        bit = 1 << depth
        for i in ones:
            counts[i] = counts.get(i, 0) + bit
    stats.recursion_depth = len(levels)
    stats.accepted = 1
    stats.rng = meter.spent()
    return Partition.from_counts(counts), stats


def _table_method(n, rng, pools=None, **kw):
    return sample_table(n, None, rng), SampleStats(accepted=1)


METHODS = {
    "table": _table_method,
    "lucky": sample_lucky,
    "small-large": lambda n, rng, b=None, **kw: sample_pdc_small_large(n, b, rng, **kw),
    "trivial": sample_pdc_trivial,
    "recursive": sample_pdc_recursive,
}


def sample(method: str, n: int, rng: RandomStream, **kw) -> tuple[Partition, SampleStats]:
    """Dispatch by method name."""
    try:
        fn = METHODS[method]
    except KeyError:
        raise ValueError(f"unknown method {method!r}; choose from {sorted(METHODS)}") from None
    return fn(n, rng, **kw)


def sample_many(method: str, n: int, count: int, rng: RandomStream, **kw) -> list[tuple[Partition, SampleStats]]:
    """``count`` independent samples sharing proposal pools.

    Per-sample ``rng`` budgets are not separated here; proposal counts are.
    """
    pools = PoolSet(rng)
    return [sample(method, n, rng, pools=pools, **kw) for _ in range(count)]
