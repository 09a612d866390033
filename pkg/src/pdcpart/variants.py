"""Trivial-second-half samplers for three restricted families.

Each proposes every coordinate but one, accepts with the (normalised)
probability of the value the missing coordinate is forced to take, and
fills it in:

* partitions with all parts < k ("k-core shapes"), forced Z_1;
* block-size profiles of uniform set partitions, forced Z_j, j = floor(x);
* weight-n arrays Z_ij with P(Z_ij >= k) = x**((i+j+1)k), forced Z_00.

Plane arrays are returned as the conditioned array; turning them into
plane partitions needs a separate bijection that is not provided.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import mpmath
import numpy as np

from .coin import AcceptanceCoin
from .ensemble import (
    PlaneEngine,
    SetPartitionEngine,
    make_engine,
    plane_support_box,
    plane_tilt,
    set_partition_tilt,
    solve_bounded_tilt,
)
from .rng import RandomStream
from .samplers import Partition, PoolSet, SampleStats, _Meter, _pool, _soft_reject


class BoundedPartition(Partition):
    """A partition whose parts are all below ``bound``."""

    @classmethod
    def checked(cls, counts, bound: int) -> "BoundedPartition":
        p = cls.from_counts(counts)
        if p.largest >= bound:
            raise ValueError(f"part {p.largest} not below {bound}")
        return cls(p.mults)


@dataclass(frozen=True)
class SetPartitionShape:
    """Block-size multiplicities Z_i of a set partition of [n]."""

    n: int
    mults: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if sum(i * z for i, z in self.mults) != self.n:
            raise ValueError("block sizes do not add up to n")

    @property
    def blocks(self) -> int:
        return sum(z for _, z in self.mults)

    def counts(self) -> dict[int, int]:
        return dict(self.mults)

    def as_partition(self) -> Partition:
        return Partition.from_counts(self.counts())


@dataclass(frozen=True)
class PlaneArray:
    """Nonnegative Z_ij on a box, stored sparsely; weight sum (i+j+1) Z_ij."""

    n: int
    box: int
    cells: tuple[tuple[tuple[int, int], int], ...]

    def __post_init__(self):
        if self.weight != self.n:
            raise ValueError("array weight differs from n")

    @property
    def weight(self) -> int:
        return sum((i + j + 1) * z for (i, j), z in self.cells)

    def to_dict(self) -> dict[tuple[int, int], int]:
        return dict(self.cells)

    def to_array(self, size: int | None = None) -> np.ndarray:
        size = size or max([max(i, j) + 1 for (i, j), _ in self.cells] + [1])
        a = np.zeros((size, size), dtype=np.int64)
        for (i, j), z in self.cells:
            a[i, j] = z
        return a


def _forced_gap(x):
    lx = math.log(x)
    return (lambda gap: gap * lx), (lambda gap: (lambda prec: gap * mpmath.log(mpmath.mpf(x))))


# ---------------------------------------------------------------------------
# parts below k
# ---------------------------------------------------------------------------


def sample_kcore(n: int, k: int, rng: RandomStream, engine: str = "poisson", pools: PoolSet | None = None):
    """Uniform partition of n with all parts < k.

    Tilt from ``solve_bounded_tilt``; A = (Z_2..Z_{k-1}) accepted with
    probability x**(n - T_A), then Z_1 = n - T_A.
    """
    if k < 2 or n < 0:
        raise ValueError("need k >= 2 and n >= 0")
    meter = _Meter(rng)
    stats = SampleStats(accepted=1)
    if n == 0:
        return BoundedPartition(()), stats
    if k == 2:
        stats.proposals = 1
        return BoundedPartition.checked({1: n}, 2), stats
    x = solve_bounded_tilt(n, k)
    hi = min(k - 1, n)
    if hi < 2:
        stats.proposals = 1
        return BoundedPartition.checked({1: n}, k), stats
    pool = _pool(pools, rng, ("kcore", engine, n, k), lambda: make_engine(engine, x, 2, hi), 8, 1024)
    log_t, exact = _forced_gap(x)
    batch, idx, gap = _soft_reject(pool, rng, stats, n, log_t, exact, True)
    counts = batch.items(idx)
    if gap:
        counts[1] = gap
    stats.rng = meter.spent()
    return BoundedPartition.checked(counts, k), stats


def sample_kcore_lucky(n: int, k: int, rng: RandomStream, engine: str = "poisson", pools: PoolSet | None = None):
    """Baseline: propose Z_1..Z_{k-1} at the bounded tilt until the weight is n."""
    if k < 2 or n < 1:
        raise ValueError("need k >= 2 and n >= 1")
    meter = _Meter(rng)
    stats = SampleStats(accepted=1)
    x = solve_bounded_tilt(n, k)
    hi = min(k - 1, n)
    pool = _pool(pools, rng, ("kcore-lucky", engine, n, k), lambda: make_engine(engine, x, 1, hi), 64, 4096)
    batch, idx, used = pool.next_where(lambda w: w == n)
    stats.proposals = used
    stats.rng = meter.spent()
    return BoundedPartition.checked(batch.items(idx), k), stats


# ---------------------------------------------------------------------------
# set-partition block sizes
# ---------------------------------------------------------------------------


def forced_block_size(x: float) -> int:
    return max(1, int(math.floor(x)))


def _poisson_log_ratio(lam: float):
    """z -> ln(P(Z = z) / max_k P(Z = k)) for Z ~ Poisson(lam), plus an mpmath version."""
    mode = int(math.floor(lam))
    lp = lambda k: k * math.log(lam) - math.lgamma(k + 1)
    top = max(lp(mode), lp(max(mode - 1, 0)))

    def log_t(z):
        return lp(z) - top

    def exact(z):
        def f(prec):
            with mpmath.workprec(prec):
                lm = mpmath.log(mpmath.mpf(lam))
                lpm = lambda k: k * lm - mpmath.loggamma(k + 1)
                return lpm(z) - max(lpm(mode), lpm(max(mode - 1, 0)))

        return f

    return log_t, exact


@lru_cache(maxsize=64)
def _setshape_setup(n: int):
    x = set_partition_tilt(n)
    j = forced_block_size(x)
    lam_j = math.exp(j * math.log(x) - math.lgamma(j + 1))
    return (x, j) + _poisson_log_ratio(lam_j)


def sample_setpartition_shape(n: int, rng: RandomStream, pools: PoolSet | None = None):
    """Block-size profile of a uniform random set partition of [n].

    Z_i ~ Poisson(x**i / i!) with x e^x = n; all sizes except j = floor(x)
    are proposed, then Z_j = (n - T_A)/j is forced.  Proposals with
    T_A > n or j not dividing n - T_A are hard-rejected.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    meter = _Meter(rng)
    stats = SampleStats(accepted=1)
    x, j, log_ratio, exact_ratio = _setshape_setup(n)
    pool = _pool(pools, rng, ("setshape", n), lambda: SetPartitionEngine(x, n, skip=j), 32, 1024)
    while True:
        batch, idx, used = pool.next_where(lambda w: (w <= n) & ((n - w) % j == 0))
        stats.proposals += used
        stats.hard_rejections += used - 1
        gap = n - int(batch.weights[idx])
        if AcceptanceCoin(log_ratio(gap // j), exact_ratio(gap // j)).flip(rng):
            break
    counts = batch.items(idx)
    if gap:
        counts[j] = gap // j
    stats.rng = meter.spent()
    return SetPartitionShape(n, tuple(sorted(counts.items(), reverse=True))), stats


def set_partition_lucky_cost(n: int) -> float:
    """Asymptotic proposals for the plain Poisson proposal: sqrt(2 pi n (x + 1))."""
    x = set_partition_tilt(n)
    return math.sqrt(2.0 * math.pi * n * (x + 1.0))


# ---------------------------------------------------------------------------
# plane-partition arrays
# ---------------------------------------------------------------------------


def sample_plane_array(n: int, rng: RandomStream, box: int | None = None, pools: PoolSet | None = None):
    """Weight-n array under the conditioned product-geometric law.

    Every cell except (0, 0) is proposed; acceptance x**(n - T_A) is the
    normalised chance that Z_00 takes the forced value n - T_A.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    meter = _Meter(rng)
    stats = SampleStats(accepted=1)
    x = plane_tilt(n)
    box = box or plane_support_box(n)
    pool = _pool(pools, rng, ("plane", n, box), lambda: PlaneEngine(x, box, skip_origin=True), 8, 1024)
    log_t, exact = _forced_gap(x)
    batch, idx, gap = _soft_reject(pool, rng, stats, n, log_t, exact, True)
    cells = pool.engine.cells(batch, idx)
    if gap:
        cells[(0, 0)] = gap
    stats.rng = meter.spent()
    return PlaneArray(n, box, tuple(sorted(cells.items()))), stats


def sample_plane_array_lucky(n: int, rng: RandomStream, box: int | None = None, pools: PoolSet | None = None):
    """Baseline: propose the whole array until its weight is n."""
    meter = _Meter(rng)
    stats = SampleStats(accepted=1)
    x = plane_tilt(n)
    box = box or plane_support_box(n)
    pool = _pool(pools, rng, ("plane-lucky", n, box), lambda: PlaneEngine(x, box), 64, 2048)
    batch, idx, used = pool.next_where(lambda w: w == n)
    stats.proposals = used
    stats.rng = meter.spent()
    return PlaneArray(n, box, tuple(sorted(pool.engine.cells(batch, idx).items()))), stats


VARIANTS = {
    "kcore": sample_kcore,
    "setshape": sample_setpartition_shape,
    "planearray": sample_plane_array,
}
