"""Grand-canonical tilts and proposal engines.

A proposal is an independent-coordinates random object whose law,
conditioned on its weight, is the target.  For integer partitions the
coordinates are Z_i ~ geometric with P(Z_i >= k) = x**(i*k); three engines
produce them (naive inversion, largest-index first, compound Poisson).
Parity bits, Poisson set-partition block counts and plane-partition
arrays are the other proposal families used by the samplers.

Engines draw in batches.  ``engine.batch(rng, size)`` returns a
:class:`ProposalBatch` holding ``size`` independent proposals as sparse
(owner, key, amount) triples plus their weights, so rejection loops can
look at weights first and only materialise the proposal they keep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammainc, gammaln, lambertw, zeta

from .counting import C, log_euler_product
from .rng import RandomStream, RngBudget

ZETA3 = float(zeta(3))


def tilt_parameter(n: int) -> float:
    """x(n) = exp(-c / sqrt(n)), c = pi / sqrt(6)."""
    if n < 1:
        raise ValueError("n must be positive")
    return math.exp(-C / math.sqrt(n))


@dataclass(frozen=True)
class GrandCanonical:
    n: int
    x: float

    def __post_init__(self):
        if not 0.0 < self.x < 1.0:
            raise ValueError("tilt must lie in (0, 1)")

    @classmethod
    def for_size(cls, n: int) -> "GrandCanonical":
        return cls(n, tilt_parameter(n))


@dataclass
class MultiplicityVector:
    """Sparse (Z_1, ..., Z_bound); absent part sizes have multiplicity 0."""

    counts: dict[int, int] = field(default_factory=dict)
    bound: int = 0

    @property
    def weight(self) -> int:
        return weighted_sum(self)

    def __getitem__(self, i: int) -> int:
        return self.counts.get(i, 0)


@dataclass
class ParityVector:
    """Bits eps_i for i in [lo, bound]; ``ones`` lists the i with eps_i = 1."""

    ones: tuple[int, ...] = ()
    bound: int = 0

    def __getitem__(self, i: int) -> int:
        return 1 if i in set(self.ones) else 0

    @property
    def weight(self) -> int:
        return sum(self.ones)


def weighted_sum(v: MultiplicityVector) -> int:
    """sum i * Z_i in Python integers (never overflows)."""
    return sum(i * z for i, z in v.counts.items())


class ProposalBatch:
    """``size`` proposals stored as sparse triples sorted by owner."""

    def __init__(self, size, owner, key, amount, contrib, draws):
        order = np.argsort(owner, kind="stable")
        self.size = size
        self.owner = owner[order]
        self.key = key[order]
        self.amount = amount[order]
        contrib = contrib[order]
        self.draws = draws
        self._starts = np.searchsorted(self.owner, np.arange(size + 1))
        big = len(contrib) and float(np.abs(contrib).max()) * len(contrib) >= 2.0**62
        if big:
            self.weights = [
                sum(int(c) for c in contrib[self._starts[k] : self._starts[k + 1]]) for k in range(size)
            ]
        else:
            w = np.zeros(size, dtype=np.int64)
            np.add.at(w, self.owner, contrib.astype(np.int64))
            self.weights = w

    def weight(self, k: int) -> int:
        return int(self.weights[k])

    def items(self, k: int) -> dict[int, int]:
        lo, hi = self._starts[k], self._starts[k + 1]
        out: dict[int, int] = {}
        for key, amt in zip(self.key[lo:hi].tolist(), self.amount[lo:hi].tolist()):
            out[key] = out.get(key, 0) + amt
        return out

    def budget(self, k: int) -> RngBudget:
        return RngBudget(uniform_draws=int(self.draws[k]))


def _empty_batch(size: int, draws) -> ProposalBatch:
    z = np.zeros(0, dtype=np.int64)
    return ProposalBatch(size, z, z, z, z, np.asarray(draws, dtype=np.int64))


# ---------------------------------------------------------------------------
# geometric multiplicity engines over part sizes lo..hi
# ---------------------------------------------------------------------------


class _GeometricEngine:
    name = "abstract"

    def __init__(self, x: float, lo: int = 1, hi: int | None = None):
        if not 0.0 < x < 1.0:
            raise ValueError("tilt must lie in (0, 1)")
        if lo < 1 or (hi is not None and hi < lo - 1):
            raise ValueError("bad part range")
        self.x = x
        self.t = -math.log(x)
        self.lo = lo
        self.hi = hi

    def propose(self, rng: RandomStream) -> tuple[MultiplicityVector, RngBudget]:
        b = self.batch(rng, 1)
        return MultiplicityVector(b.items(0), self.hi or 0), b.budget(0)

    def vector(self, batch: ProposalBatch, k: int) -> MultiplicityVector:
        return MultiplicityVector(batch.items(k), self.hi or 0)


class NaiveEngine(_GeometricEngine):
    """One uniform per coordinate: Z_i = floor(ln U / (i ln x))."""

    name = "naive"

    def __init__(self, x, lo=1, hi=None):
        if hi is None:
            raise ValueError("naive proposals need a finite part range")
        super().__init__(x, lo, hi)

    def batch(self, rng, size):
        width = self.hi - self.lo + 1
        if width <= 0:
            return _empty_batch(size, np.zeros(size))
        parts = np.arange(self.lo, self.hi + 1, dtype=float)
        per = max(1, (1 << 21) // width)
        owners, keys, amounts = [], [], []
        for start in range(0, size, per):
            rows = min(per, size - start)
            u = rng.uniforms(rows * width).reshape(rows, width)
            z = np.floor(np.log(u) / (parts * -self.t)).astype(np.int64)
            r, c = np.nonzero(z)
            owners.append(r + start)
            keys.append(c + self.lo)
            amounts.append(z[r, c])
        owner = np.concatenate(owners)
        key = np.concatenate(keys).astype(np.int64)
        amount = np.concatenate(amounts)
        return ProposalBatch(size, owner, key, amount, key * amount, np.full(size, width))


class PoissonEngine(_GeometricEngine):
    """Compound-Poisson proposal, O(sqrt n) draws for the full range.

    Z_i = sum_j j * Y_ij with Y_ij ~ Poisson(x**(ij) / j).  Arrivals are
    grouped in rows by multiplicity j; row j has rate
    R_j = x**(j lo) (1 - x**(j L)) / (j (1 - x**j)) with L = hi - lo + 1.
    Rows 1..J0 are tabulated; one uniform per arrival picks the row by
    inversion and its residual position within the row picks i, which is a
    truncated geometric with ratio x**j.  Rows beyond J0 form an exact tail
    process: candidates at rate x/((1-x) j (j-1)) thinned down to R_j.
    """

    name = "poisson"
    HEAD_ROWS = 1 << 16

    def __init__(self, x, lo=1, hi=None):
        super().__init__(x, lo, hi)
        self.width = None if hi is None else hi - lo + 1
        if self.width == 0:
            self.head_rows = 0
            return
        rows = math.ceil(45.0 / (self.t * lo)) + 1
        self.head_rows = int(min(self.HEAD_ROWS, max(1, rows)))
        j = np.arange(1, self.head_rows + 1, dtype=float)
        self.rates = self.row_rates(j)
        self.cum = np.cumsum(self.rates)
        self.head_rate = float(self.cum[-1])
        self.envelope = self.x / (-math.expm1(-self.t))
        self.tail_rate = self.envelope / self.head_rows

    def row_rates(self, j: np.ndarray) -> np.ndarray:
        lead = np.exp(-self.t * self.lo * j)
        keep = 1.0 if self.width is None else -np.expm1(-self.t * self.width * j)
        return lead * keep / (j * -np.expm1(-self.t * j))

    def _offsets(self, j: np.ndarray, v: np.ndarray) -> np.ndarray:
        # P(offset >= s) proportional to q**s - q**L, q = x**j
        lq = -self.t * j
        if self.width is None:
            s = np.floor(np.log(v) / lq)
        else:
            s = np.floor(np.log1p(v * np.expm1(lq * self.width)) / lq)
            s = np.minimum(s, self.width - 1)
        return s

    def batch(self, rng, size):
        if self.width == 0:
            return _empty_batch(size, np.zeros(size))
        k_head = rng.poisson(self.head_rate, size)
        u = rng.uniforms(int(k_head.sum()))
        pos = u * self.head_rate
        row = np.minimum(np.searchsorted(self.cum, pos, side="left"), self.head_rows - 1)
        prev = np.where(row > 0, self.cum[row - 1], 0.0)
        v = np.clip((pos - prev) / self.rates[row], 1e-300, 1.0)
        j_head = (row + 1).astype(float)
        off_head = self._offsets(j_head, v)
        owner_head = np.repeat(np.arange(size), k_head)

        k_tail = rng.poisson(self.tail_rate, size)
        n_tail = int(k_tail.sum())
        owner_tail = np.repeat(np.arange(size), k_tail)
        w = rng.uniforms(n_tail)
        j_tail = np.floor(self.head_rows / w) + 1.0
        accept_p = self.row_rates(j_tail) * j_tail * (j_tail - 1.0) / self.envelope
        keep = rng.uniforms(n_tail) <= accept_p
        owner_tail, j_tail = owner_tail[keep], j_tail[keep]
        off_tail = self._offsets(j_tail, rng.uniforms(len(j_tail)))

        owner = np.concatenate([owner_head, owner_tail])
        mult = np.concatenate([j_head, j_tail]).astype(np.int64)
        part = np.concatenate([off_head, off_tail]).astype(np.int64) + self.lo
        draws = 2 + k_head + 2 * k_tail + np.bincount(owner_tail, minlength=size)
        return ProposalBatch(size, owner, part, mult, part * mult, draws)


class LargestIndexEngine(_GeometricEngine):
    """Draw L, the largest i with Z_i > 0, then fill Z_lo..Z_L.

    P(L <= j) = prod_{k > j} (1 - x**k); given L = j the coordinates below
    j are free geometrics and Z_j is 1 + geometric.
    """

    name = "largest"

    def __init__(self, x, lo=1, hi=None):
        super().__init__(x, lo, hi)
        cut = lo + math.ceil(45.0 / self.t) + 1
        top = cut if hi is None else min(hi, cut)
        k = np.arange(lo, top + 1, dtype=float)
        lg = np.log1p(-np.exp(-self.t * k))
        # log_cdf[r] = log P(L <= lo - 1 + r), r = 0..len(k)
        tail = np.concatenate([np.cumsum(lg[::-1])[::-1], [0.0]])
        self.cdf = np.exp(tail)
        self.top = top

    def batch(self, rng, size):
        u = rng.uniforms(size)
        r = np.searchsorted(self.cdf, u, side="left")
        largest = self.lo - 1 + np.minimum(r, len(self.cdf) - 1)
        counts = np.maximum(largest - self.lo + 1, 0)
        owner = np.repeat(np.arange(size), counts)
        starts = np.repeat(np.cumsum(counts) - counts, counts)
        part = (np.arange(int(counts.sum())) - starts) + self.lo
        top = np.repeat(largest, counts)
        z = np.floor(np.log(rng.uniforms(len(part))) / (part * -self.t)).astype(np.int64)
        z = z + (part == top)
        nz = z > 0
        owner, part, z = owner[nz], part[nz].astype(np.int64), z[nz]
        return ProposalBatch(size, owner, part, z, part * z, 1 + counts)


ENGINES = {
    "naive": NaiveEngine,
    "poisson": PoissonEngine,
    "largest": LargestIndexEngine,
}


@lru_cache(maxsize=64)
def make_engine(kind: str, x: float, lo: int = 1, hi: int | None = None) -> _GeometricEngine:
    try:
        cls = ENGINES[kind]
    except KeyError:
        raise ValueError(f"unknown proposal engine {kind!r}; choose from {sorted(ENGINES)}") from None
    return cls(x, lo, hi)


def propose_naive(gc: GrandCanonical, rng: RandomStream):
    return make_engine("naive", gc.x, 1, gc.n).propose(rng)


def propose_poisson(gc: GrandCanonical, rng: RandomStream):
    return make_engine("poisson", gc.x, 1, gc.n).propose(rng)


def propose_largest_index(gc: GrandCanonical, rng: RandomStream):
    return make_engine("largest", gc.x, 1, gc.n).propose(rng)


def poisson_total_rate(x: float) -> float:
    """s = sum_{i,j>=1} x**(ij)/j = -sum_i ln(1 - x**i)."""
    return -log_euler_product(x)


def largest_index_law(x: float, upto: int) -> np.ndarray:
    """P(L = j) for j = 0..upto on the infinite index set."""
    eng = LargestIndexEngine(x, 1, None)
    cdf = eng.cdf[: upto + 1]
    return np.diff(np.concatenate([[0.0], cdf]))


# ---------------------------------------------------------------------------
# parity bits
# ---------------------------------------------------------------------------


class ParityEngine:
    """Independent eps_i ~ Bernoulli(x**i / (1 + x**i)) for lo <= i <= hi.

    Candidates arrive as a Poisson process with rate x**i at site i (the
    site is lo + geometric); each is kept with probability
    ln(1 + x**i) / x**i, and eps_i = 1 iff site i keeps at least one.
    """

    def __init__(self, x: float, lo: int, hi: int):
        if not 0.0 < x < 1.0:
            raise ValueError("tilt must lie in (0, 1)")
        self.x, self.lo, self.hi = x, lo, hi
        self.t = -math.log(x)
        self.rate = math.exp(-self.t * lo) / (-math.expm1(-self.t))

    def batch(self, rng: RandomStream, size: int) -> ProposalBatch:
        k = rng.poisson(self.rate, size)
        total = int(k.sum())
        owner = np.repeat(np.arange(size), k)
        site = self.lo + np.floor(np.log(rng.uniforms(total)) / -self.t)
        xi = np.exp(-self.t * site)
        ratio = np.where(xi > 0.0, np.log1p(xi) / np.where(xi > 0.0, xi, 1.0), 1.0)
        keep = (rng.uniforms(total) <= ratio) & (site <= self.hi)
        owner, site = owner[keep], site[keep].astype(np.int64)
        if len(site):
            order = np.lexsort((site, owner))
            owner, site = owner[order], site[order]
            first = np.ones(len(site), dtype=bool)
            first[1:] = (owner[1:] != owner[:-1]) | (site[1:] != site[:-1])
            owner, site = owner[first], site[first]
        ones = np.ones(len(site), dtype=np.int64)
        return ProposalBatch(size, owner, site, ones, site, 1 + 2 * k)

    def ones(self, batch: ProposalBatch, k: int) -> tuple[int, ...]:
        return tuple(sorted(batch.items(k)))


def propose_parity(gc: GrandCanonical, i_from: int, rng: RandomStream):
    if not 1 <= i_from <= gc.n:
        raise ValueError("need 1 <= i_from <= n")
    eng = ParityEngine(gc.x, i_from, gc.n)
    b = eng.batch(rng, 1)
    return ParityVector(eng.ones(b, 0), gc.n), b.budget(0)


# ---------------------------------------------------------------------------
# tilts for restricted ensembles
# ---------------------------------------------------------------------------


def _mean_weight(t: float, max_part: int) -> float:
    # sum_{i<=K} i x^i / (1 - x^i) with x = e^-t
    total = 0.0
    chunk = 1 << 20
    for start in range(1, max_part + 1, chunk):
        i = np.arange(start, min(max_part, start + chunk - 1) + 1, dtype=float)
        total += float((i * np.exp(-i * t) / -np.expm1(-i * t)).sum())
    return total


def _mean_weight_slope(t: float, max_part: int) -> float:
    # d/dt of the mean: -sum i^2 x^i / (1 - x^i)^2
    i = np.arange(1, max_part + 1, dtype=float)
    d = -np.expm1(-i * t)
    return float(-(i * i * np.exp(-i * t) / (d * d)).sum())


def _solve_tilt(target: float, max_part: int, rtol: float) -> float:
    """x with sum_{i<=max_part} E i Z_i(x) = target."""
    if target <= 0:
        raise ValueError("target must be positive")
    f = lambda t: _mean_weight(t, max_part) - target
    lo, hi = 1e-3, 1.0
    while f(lo) < 0.0:
        lo /= 4.0
        if lo < 1e-300:
            raise ArithmeticError("tilt bracket failed")
    while f(hi) > 0.0:
        hi *= 2.0
        if hi > 1e6:
            raise ArithmeticError("tilt bracket failed")
    t = brentq(f, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    slope = _mean_weight_slope(t, max_part) if max_part <= 1 << 22 else 0.0
    if slope < 0.0:
        step = f(t) / slope
        if abs(step) < 1e-6 * t:
            t -= step
    x = math.exp(-t)
    if not 0.0 < x < 1.0:
        raise ArithmeticError("tilt left (0, 1)")
    return x


def solve_bounded_tilt(n: int, k: int) -> float:
    """Tilt for partitions of n with all parts < k (k-core shapes)."""
    if k < 2:
        raise ValueError("need k >= 2")
    if k == 2:
        return n / (n + 1.0)
    return _solve_tilt(float(n), k - 1, 1e-12)


@lru_cache(maxsize=4096)
def roaming_tilt(b: int, target: int) -> float:
    """Tilt y whose parts 1..b have mean weight ``target``.

    For target 0 any tilt will do; a tiny one makes the all-zero
    proposal nearly certain.
    """
    if b < 1 or target < 0:
        raise ValueError("need b >= 1 and target >= 0")
    if target == 0:
        return 1e-6
    if b == 1:
        return target / (target + 1.0)
    return _solve_tilt(float(target), b, 1e-10)


def set_partition_tilt(n: int) -> float:
    """Positive root of x e^x = n."""
    if n < 1:
        raise ValueError("n must be positive")
    x = float(lambertw(n).real)
    for _ in range(3):
        ex = math.exp(x)
        x -= (x * ex - n) / (ex * (1.0 + x))
    return x


def plane_tilt(n: int) -> float:
    """exp(-(2 zeta(3) / n)**(1/3))."""
    return math.exp(-((2.0 * ZETA3 / n) ** (1.0 / 3.0)))


def plane_outside_mass(x: float, box: int) -> float:
    """sum of x**(i+j+1) over cells with max(i, j) >= box: x**(B+1) (2 - x**B) / (1-x)**2."""
    xb = x**box
    return x * xb * (2.0 - xb) / (1.0 - x) ** 2


def plane_support_box(n: int, bits: int = 50) -> int:
    """Smallest B whose outside mass (a union bound on any nonzero cell outside) is below 2**-bits."""
    x = plane_tilt(n)
    eps = 2.0**-bits
    b = max(1, int(math.log(eps * (1.0 - x) ** 2 / (2.0 * x)) / math.log(x)) - 2)
    while b > 1 and plane_outside_mass(x, b - 1) < eps:
        b -= 1
    while plane_outside_mass(x, b) >= eps:
        b += 1
    return b


# ---------------------------------------------------------------------------
# set partitions: Z_i ~ Poisson(x**i / i!)
# ---------------------------------------------------------------------------


def set_partition_rates(x: float, upto: int) -> np.ndarray:
    i = np.arange(1, upto + 1, dtype=float)
    return np.exp(i * math.log(x) - gammaln(i + 1.0))


class SetPartitionEngine:
    """Independent Poisson block counts for sizes 1..n, optionally skipping one size.

    Sizes up to a head cutoff are drawn directly; the rest form one
    Poisson process of total rate e^x P(head+1, x) whose arrivals pick
    their size by sequential search.
    """

    def __init__(self, x: float, n: int, skip: int | None = None):
        self.x, self.n, self.skip = x, n, skip
        head = min(n, max(8, math.ceil(3.0 * x) + 40))
        self.head = head
        lam = set_partition_rates(x, head)
        self.sizes = np.array([i for i in range(1, head + 1) if i != skip], dtype=np.int64)
        self.lam = lam[self.sizes - 1]
        if head < n:
            self.tail_rate = float(math.exp(x) * gammainc(head + 1, x))
        else:
            self.tail_rate = 0.0

    def _tail_size(self, u: float) -> int:
        target = u * self.tail_rate
        i = self.head + 1
        lam = math.exp(i * math.log(self.x) - math.lgamma(i + 1))
        acc = lam
        while acc < target and lam > 0.0:
            i += 1
            lam *= self.x / i
            acc += lam
        return i

    def batch(self, rng: RandomStream, size: int) -> ProposalBatch:
        z = rng.poisson(self.lam, (size, len(self.sizes)))
        r, c = np.nonzero(z)
        owner, key, amount = r, self.sizes[c], z[r, c]
        draws = np.full(size, len(self.sizes), dtype=np.int64)
        if self.tail_rate > 0.0:
            kt = rng.poisson(self.tail_rate, size)
            draws += 1 + kt
            if kt.sum():
                tail_owner = np.repeat(np.arange(size), kt)
                tail_key = np.array([self._tail_size(u) for u in rng.uniforms(int(kt.sum()))], dtype=np.int64)
                ok = (tail_key <= self.n) & (tail_key != (self.skip or 0))
                owner = np.concatenate([owner, tail_owner[ok]])
                key = np.concatenate([key, tail_key[ok]])
                amount = np.concatenate([amount, np.ones(int(ok.sum()), dtype=np.int64)])
        key = key.astype(np.int64)
        amount = amount.astype(np.int64)
        return ProposalBatch(size, owner, key, amount, key * amount, draws)


def propose_set_partition(n: int, x: float, rng: RandomStream):
    eng = SetPartitionEngine(x, n)
    b = eng.batch(rng, 1)
    return MultiplicityVector(b.items(0), n), b.budget(0)


# ---------------------------------------------------------------------------
# plane-partition arrays: Z_ij geometric with ratio x**(i+j+1)
# ---------------------------------------------------------------------------


class PlaneEngine:
    """Independent Z_ij, 0 <= i, j < box, P(Z_ij >= k) = x**((i+j+1) k).

    Compound-Poisson again: cell (i, j) on diagonal d = i+j+1 receives
    layer-k arrivals at rate x**(dk)/k, each adding k.  Layer k has total
    rate x**k / (k (1 - x**k)**2) over the unbounded quadrant, and given k
    the diagonal is 1 + G1 + G2 with G geometric of ratio x**k.  Arrivals
    landing outside the box (or on the origin, when skipped) are dropped.
    Layers stop once the remaining rate is below 2**-60.
    """

    def __init__(self, x: float, box: int, skip_origin: bool = False):
        self.x, self.box, self.skip_origin = x, box, skip_origin
        t = self.t = -math.log(x)
        k = 1
        while math.exp(-t * (k + 1)) / ((k + 1) * (-math.expm1(-t)) ** 3) >= 2.0**-60:
            k += 1
        layers = np.arange(1, k + 1, dtype=float)
        self.rates = np.exp(-t * layers) / (layers * np.expm1(-t * layers) ** 2)
        self.cum = np.cumsum(self.rates)
        self.rate = float(self.cum[-1])

    def batch(self, rng: RandomStream, size: int) -> ProposalBatch:
        kk = rng.poisson(self.rate, size)
        total = int(kk.sum())
        owner = np.repeat(np.arange(size), kk)
        pos = rng.uniforms(total) * self.rate
        layer = np.minimum(np.searchsorted(self.cum, pos, side="left"), len(self.cum) - 1)
        prev = np.where(layer > 0, self.cum[layer - 1], 0.0)
        v = np.clip((pos - prev) / self.rates[layer], 1e-300, 1.0)
        lq = -self.t * (layer + 1.0)
        g1 = np.floor(np.log(v) / lq)
        g2 = np.floor(np.log(rng.uniforms(total)) / lq)
        diag = (1.0 + g1 + g2).astype(np.int64)
        i = np.floor(rng.uniforms(total) * diag).astype(np.int64)
        i = np.minimum(i, diag - 1)
        j = diag - 1 - i
        ok = (i < self.box) & (j < self.box)
        if self.skip_origin:
            ok &= diag > 1
        owner, i, j, diag, amt = owner[ok], i[ok], j[ok], diag[ok], (layer[ok] + 1).astype(np.int64)
        key = i * self.box + j
        return ProposalBatch(size, owner, key, amt, diag * amt, 1 + 3 * kk)

    def cells(self, batch: ProposalBatch, k: int) -> dict[tuple[int, int], int]:
        return {divmod(key, self.box): z for key, z in batch.items(k).items()}


def propose_plane_array(n: int, rng: RandomStream, box: int | None = None):
    """One plane-partition proposal on the box [0, B(n))^2 (or ``box``)."""
    x = plane_tilt(n)
    eng = PlaneEngine(x, box or plane_support_box(n))
    b = eng.batch(rng, 1)
    return eng.cells(b, 0), b.budget(0)
