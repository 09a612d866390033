"""Lazy-precision p-coins.

A coin with bias t is tossed by comparing a uniform U against t.  Only
the leading 53 bits of U are drawn up front; when the dyadic interval
they pin down lies within ``tol`` of the double-precision estimate of t
the threshold is re-evaluated at high precision (mpmath) and further
64-bit chunks of U are revealed until the comparison is decided.  The
result is exactly a t-coin whenever the exact evaluator is exact.
"""

from __future__ import annotations

import math
from typing import Callable

import mpmath

from .rng import RandomStream

TIE_TOL = 1e-9
EXACT_BITS = 160
_TWO53 = 2**53


class AcceptanceCoin:
    """Bernoulli(t) with t = exp(log_t).

    ``exact(prec)`` must return ln t as an ``mpmath.mpf`` accurate to
    ``prec`` bits; without it the double ``log_t`` is taken as exact.
    With ``escalate=False`` the decision is the plain ``U < t`` on the
    leading 53 bits, which is the fast inexact mode.
    """

    def __init__(
        self,
        log_t: float,
        exact: Callable[[int], "mpmath.mpf"] | None = None,
        *,
        tol: float = TIE_TOL,
        escalate: bool = True,
    ):
        if log_t > 1e-9:
            raise AssertionError(f"acceptance threshold exceeds 1 (ln t = {log_t!r})")
        self.log_t = min(log_t, 0.0)
        self.t = math.exp(self.log_t)
        self.exact = exact
        self.tol = tol
        self.escalate = escalate

    def flip(self, rng: RandomStream) -> bool:
        rng.budget.acceptance_coins += 1
        if self.t >= 1.0 and self.exact is None:
            return True
        if self.t <= 0.0:
            return False
        k = rng.bits53()
        lo = k / _TWO53
        hi = (k + 1) / _TWO53
        if not self.escalate:
            return lo < self.t
        if hi <= self.t - self.tol:
            return True
        if lo >= self.t + self.tol:
            return False
        rng.budget.escalations += 1
        return self._resolve(rng, k, 53)

    def _resolve(self, rng: RandomStream, num: int, bits: int) -> bool:
        prec = EXACT_BITS
        while True:
            with mpmath.workprec(prec + 16):
                if self.exact is not None:
                    t = mpmath.exp(self.exact(prec + 16))
                else:
                    t = mpmath.exp(mpmath.mpf(self.log_t))
                if t >= 1:
                    return True
                while bits < prec:
                    scale = mpmath.ldexp(1, -bits)
                    if (num + 1) * scale <= t:
                        return True
                    if num * scale >= t:
                        return False
                    num = (num << 64) | rng.bits64()
                    bits += 64
            prec *= 2


def coin(rng: RandomStream, log_t: float, exact=None, *, tol: float = TIE_TOL, escalate: bool = True) -> bool:
    """Toss a single exp(log_t)-coin."""
    return AcceptanceCoin(log_t, exact, tol=tol, escalate=escalate).flip(rng)
