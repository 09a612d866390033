"""Exact partition counts, the one-term Hardy-Ramanujan-Lehmer estimate,
and the law of weighted sums of geometric multiplicities.

Counts are Python integers throughout, so p_n is exact for any n that
fits in time and memory.  Logarithms of counts switch from the exact
value to ``hr1_log`` above a cutoff, and never below n = 489.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from functools import lru_cache

import mpmath
import numpy as np
from scipy.signal import lfilter

C = math.pi / math.sqrt(6.0)
LEHMER_MIN_N = 489
DEFAULT_EXACT_CUTOFF = 2000
# x**i below this is dropped from infinite products (the tail is folded in).
PRODUCT_EPS_BITS = 75
# exact big-integer counts feed high-precision thresholds up to this size
MP_EXACT_LIMIT = 20000

_DEFAULT_MAX_CELLS = 10_000_000


class TableMemoryError(MemoryError):
    """A count table would exceed the configured cell cap."""


def max_table_cells() -> int:
    """Cell cap for count tables, from ``PDCPART_TABLE_MAX_CELLS`` if set."""
    raw = os.environ.get("PDCPART_TABLE_MAX_CELLS")
    return int(raw) if raw else _DEFAULT_MAX_CELLS


class CountTable:
    """p(<=k, m) for 0 <= k <= b and 0 <= m <= n.

    In streaming mode only the row k = b is kept; ``entry`` then answers
    for that row alone.
    """

    def __init__(self, b: int, n: int, rows: list[list[int]] | None, last: list[int]):
        self.max_part = b
        self.max_weight = n
        self._rows = rows
        self._last = last

    @property
    def streaming(self) -> bool:
        return self._rows is None

    def entry(self, k: int, m: int) -> int:
        if m < 0:
            return 0
        if k == 0:
            return 1 if m == 0 else 0
        if not (1 <= k <= self.max_part and m <= self.max_weight):
            raise IndexError(f"({k}, {m}) outside table {self.max_part}x{self.max_weight}")
        if self._rows is None:
            if k != self.max_part:
                raise IndexError("streaming table stores only the final row")
            return self._last[m]
        return self._rows[k][m]

    __call__ = entry

    def row(self, k: int) -> list[int]:
        if k == self.max_part:
            return self._last
        if self._rows is None:
            raise IndexError("streaming table stores only the final row")
        return self._rows[k]

    def __repr__(self) -> str:
        mode = "streaming" if self.streaming else "full"
        return f"CountTable(b={self.max_part}, n={self.max_weight}, {mode})"


def build_count_table(b: int, n: int, streaming: bool = False) -> CountTable:
    """Fill p(<=k, m) = p(<=k-1, m) + p(<=k, m-k) row by row.

    Raises :class:`TableMemoryError` when the full grid would exceed
    :func:`max_table_cells`; streaming mode needs only one row.
    """
    if b < 1 or n < 0:
        raise ValueError("need b >= 1 and n >= 0")
    cells = (n + 1) if streaming else (b + 1) * (n + 1)
    cap = max_table_cells()
    if cells > cap:
        raise TableMemoryError(f"{cells} cells requested, cap is {cap} (PDCPART_TABLE_MAX_CELLS)")
    prev = [1] + [0] * n
    rows = None if streaming else [prev]
    for k in range(1, b + 1):
        cur = prev.copy() if rows is not None else prev
        for m in range(k, n + 1):
            cur[m] += cur[m - k]
        if rows is not None:
            rows.append(cur)
        prev = cur
    return CountTable(b, n, rows, prev)


@lru_cache(maxsize=8)
def count_row(b: int, n: int) -> tuple[int, ...]:
    """The row p(<=b, 0..n), cached; used for high-precision thresholds."""
    return tuple(build_count_table(b, n, streaming=True).row(b))


class _PartitionNumbers:
    # Euler's pentagonal recurrence, O(n^1.5) big-integer additions.
    def __init__(self):
        self.values = [1]

    def extend(self, n: int) -> None:
        p = self.values
        for m in range(len(p), n + 1):
            total = 0
            k = 1
            while True:
                g1 = k * (3 * k - 1) // 2
                if g1 > m:
                    break
                g2 = g1 + k
                term = p[m - g1] + (p[m - g2] if g2 <= m else 0)
                total += term if k & 1 else -term
                k += 1
            p.append(total)

    def __getitem__(self, n: int) -> int:
        if n >= len(self.values):
            self.extend(n)
        return self.values[n]


_PN = _PartitionNumbers()


def partition_count(n: int) -> int:
    """Exact p_n."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    return _PN[n]


@lru_cache(maxsize=None)
def _log_pn_exact(n: int) -> float:
    return math.log(_PN[n])


def hr1_log(n) -> float:
    """ln of Lehmer's single-term approximation hr1(n) to p_n.

    Evaluated entirely in log space, so it is finite for n far beyond
    the range where exp(y) overflows.
    """
    if n < 1:
        raise ValueError("hr1 needs n >= 1")
    a = n - 1.0 / 24.0
    y = 2.0 * C * math.sqrt(a)
    return y + math.log1p(-1.0 / y) - math.log(4.0 * math.sqrt(3.0) * a)


def hr1_log_array(n: np.ndarray) -> np.ndarray:
    a = np.asarray(n, dtype=float) - 1.0 / 24.0
    y = 2.0 * C * np.sqrt(a)
    return y + np.log1p(-1.0 / y) - np.log(4.0 * math.sqrt(3.0) * a)


def hr1_log_mp(n: int, prec: int) -> mpmath.mpf:
    with mpmath.workprec(prec + 32):
        a = mpmath.mpf(n) - mpmath.mpf(1) / 24
        y = 2 * mpmath.pi / mpmath.sqrt(6) * mpmath.sqrt(a)
        return +(y + mpmath.log(1 - 1 / y) - mpmath.log(4 * mpmath.sqrt(3) * a))


def _check_cutoff(exact_cutoff: int) -> None:
    if exact_cutoff < LEHMER_MIN_N:
        raise ValueError(f"exact_cutoff must be >= {LEHMER_MIN_N}; hr1 is only trusted above it")


def log_partition_count(m: int, exact_cutoff: int = DEFAULT_EXACT_CUTOFF) -> float:
    """ln p_m: exact below the cutoff, hr1 above it."""
    _check_cutoff(exact_cutoff)
    if m < 0:
        return -math.inf
    if m <= exact_cutoff:
        return _log_pn_exact(m)
    return hr1_log(m)


def log_partition_counts(ms: np.ndarray, exact_cutoff: int = DEFAULT_EXACT_CUTOFF) -> np.ndarray:
    ms = np.asarray(ms, dtype=np.int64)
    out = np.empty(ms.shape, dtype=float)
    small = ms <= exact_cutoff
    if small.any():
        out[small] = [_log_pn_exact(int(m)) for m in ms[small]]
    if (~small).any():
        out[~small] = hr1_log_array(ms[~small])
    return out


def log_partition_ratio(m1: int, m2: int, exact_cutoff: int = DEFAULT_EXACT_CUTOFF) -> float:
    """ln(p_m1 / p_m2) without cancelling two large logarithms."""
    _check_cutoff(exact_cutoff)
    if m1 <= exact_cutoff or m2 <= exact_cutoff:
        return log_partition_count(m1, exact_cutoff) - log_partition_count(m2, exact_cutoff)
    a1 = m1 - 1.0 / 24.0
    a2 = m2 - 1.0 / 24.0
    y1 = 2.0 * C * math.sqrt(a1)
    y2 = 2.0 * C * math.sqrt(a2)
    dy = 2.0 * C * (m1 - m2) / (math.sqrt(a1) + math.sqrt(a2))
    return dy + (math.log1p(-1.0 / y1) - math.log1p(-1.0 / y2)) - math.log1p((m1 - m2) / a2)


def log_partition_count_mp(m: int, prec: int) -> mpmath.mpf:
    """ln p_m to roughly ``prec`` bits.

    Exact counts up to MP_EXACT_LIMIT; above it hr1, whose relative error
    exp(-y/2) is below 2**-250 there.
    """
    if m <= MP_EXACT_LIMIT:
        with mpmath.workprec(prec + 32):
            return +mpmath.log(mpmath.mpf(_PN[m]))
    return hr1_log_mp(m, prec)


def log_euler_product(x: float, max_part: int | None = None) -> float:
    """sum_{i=1}^{max_part} ln(1 - x**i), with max_part=None meaning infinity.

    Terms with x**i < 2**-75 are dropped and replaced by the leading tail
    estimate -x**(I+1)/(1-x); the omitted error is below 2*x**(I+1)/(1-x).
    When more than 2**20 terms would be needed, the infinite product comes
    from the modular transformation of the Dedekind eta function instead.
    """
    if not 0.0 < x < 1.0:
        raise ValueError("need 0 < x < 1")
    t = -math.log(x)
    cut = math.ceil(PRODUCT_EPS_BITS * math.log(2.0) / t)
    if max_part is not None and max_part <= cut:
        return _direct_log_product(t, max_part)
    if cut <= 2**20:
        tail = -math.exp(-t * (cut + 1)) / (-math.expm1(-t))
        return _direct_log_product(t, cut) + tail
    return _modular_log_product(t)


def _direct_log_product(t: float, upto: int) -> float:
    total = 0.0
    chunk = 1 << 18
    for start in range(1, upto + 1, chunk):
        i = np.arange(start, min(upto, start + chunk - 1) + 1, dtype=float)
        total += float(np.log1p(-np.exp(-t * i)).sum())
    return total


def _modular_log_product(t: float) -> float:
    # ln phi(e^-t) = t/24 - pi^2/(6t) + ln(2pi/t)/2 + ln phi(e^(-4pi^2/t))
    dual = 4.0 * math.pi**2 / t
    correction = 0.0
    if dual < 745.0:
        correction = _direct_log_product(dual, max(1, math.ceil(60.0 / dual)))
    return t / 24.0 - math.pi**2 / (6.0 * t) + 0.5 * math.log(2.0 * math.pi / t) + correction


def hit_probability(
    n: int,
    x: float,
    exact_cutoff: int = DEFAULT_EXACT_CUTOFF,
    max_part: int | None = None,
) -> float:
    """ln P_x(T = n) = ln p_n + n ln x + sum_i ln(1 - x**i).

    With ``max_part`` set, the product runs over i <= max_part only; that is
    the law of T when the proposal draws Z_1..Z_max_part and nothing else.
    """
    _check_cutoff(exact_cutoff)
    if n < 0:
        return -math.inf
    if max_part is not None and max_part < n:
        raise ValueError("max_part below n makes p_n the wrong count")
    return log_partition_count(n, exact_cutoff) + n * math.log(x) + log_euler_product(x, max_part)


@dataclass(frozen=True)
class SumDistribution:
    """q_j = P(T_B = j), j = 0..n, for T_B = sum_{i<=b} i Z_i(x)."""

    b: int
    n: int
    x: float
    q: np.ndarray

    @property
    def argmax(self) -> int:
        return int(np.argmax(self.q))

    @property
    def max(self) -> float:
        return float(self.q[self.argmax])


def sum_distribution(b: int, n: int, x: float) -> SumDistribution:
    """Law of T_B truncated at n.

    Runs the k-parts recurrence weighted by x**j, one geometric factor
    at a time, so every intermediate vector is itself a probability law
    and nothing overflows:  s(j) = q(j) + x**k s(j-k),  q <- (1-x**k) s.
    """
    if b < 1 or n < 0:
        raise ValueError("need b >= 1 and n >= 0")
    if not 0.0 < x < 1.0:
        raise ValueError("need 0 < x < 1")
    q = np.zeros(n + 1)
    q[0] = 1.0
    lx = math.log(x)
    for k in range(1, min(b, n) + 1):
        xk = math.exp(k * lx)
        rows = -(-(n + 1) // k)
        padded = np.zeros(rows * k)
        padded[: n + 1] = q
        s = lfilter([1.0], [1.0, -xk], padded.reshape(rows, k), axis=0).ravel()[: n + 1]
        q = -math.expm1(k * lx) * s
    if b > n:
        # parts larger than n only contribute their zero-probability mass
        q = q * math.exp(_direct_log_product(-lx, b) - _direct_log_product(-lx, n))
    return SumDistribution(b, n, x, q)
