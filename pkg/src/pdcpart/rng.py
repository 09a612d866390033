"""Seedable random streams with draw accounting.

Every sampler takes an explicit :class:`RandomStream`.  Streams wrap a
numpy ``Generator`` over PCG64 and derive independent substreams by
seed-splitting (``SeedSequence.spawn``), so a run is reproducible from a
single 64-bit seed no matter how work is divided between workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_BUFFER = 512
_TWO53 = float(2**53)


@dataclass
class RngBudget:
    """Counters for calls into the generator.

    One uniform, one Poisson variate or one 64-bit word each count as a
    single draw.  Acceptance coins are tallied separately.
    """

    uniform_draws: int = 0
    acceptance_coins: int = 0
    escalations: int = 0

    def add(self, other: "RngBudget") -> None:
        self.uniform_draws += other.uniform_draws
        self.acceptance_coins += other.acceptance_coins
        self.escalations += other.escalations

    def as_dict(self) -> dict:
        return {
            "uniform_draws": self.uniform_draws,
            "acceptance_coins": self.acceptance_coins,
            "escalations": self.escalations,
        }


class RandomStream:
    """A PCG64 stream that counts what it hands out."""

    def __init__(self, seed=None, *, seed_seq: np.random.SeedSequence | None = None):
        if seed_seq is None:
            seed_seq = np.random.SeedSequence(seed)
        self.seed_seq = seed_seq
        self.gen = np.random.Generator(np.random.PCG64(seed_seq))
        self.budget = RngBudget()
        self._buf: list[float] = []
        self._bits: list[int] = []

    def __repr__(self) -> str:
        return f"RandomStream(entropy={self.seed_seq.entropy}, spawn_key={self.seed_seq.spawn_key})"

    def spawn(self, k: int) -> list["RandomStream"]:
        return [RandomStream(seed_seq=s) for s in self.seed_seq.spawn(k)]

    @classmethod
    def substream(cls, seed: int, index: int) -> "RandomStream":
        """Stream number ``index`` under ``seed``; independent of how many others exist."""
        return cls(seed_seq=np.random.SeedSequence(seed, spawn_key=(index,)))

    # -- uniforms on (0, 1] -------------------------------------------------

    def uniform(self) -> float:
        if not self._buf:
            self._buf = (1.0 - self.gen.random(_BUFFER)).tolist()
        self.budget.uniform_draws += 1
        return self._buf.pop()

    def uniforms(self, size: int) -> np.ndarray:
        self.budget.uniform_draws += int(size)
        return 1.0 - self.gen.random(size)

    def bits53(self) -> int:
        """A uniform integer in [0, 2**53), i.e. the leading bits of a uniform."""
        if not self._bits:
            self._bits = self.gen.integers(0, 2**53, size=_BUFFER, dtype=np.int64).tolist()
        self.budget.uniform_draws += 1
        return self._bits.pop()

    def bits64(self) -> int:
        self.budget.uniform_draws += 1
        return int(self.gen.integers(0, 2**64, dtype=np.uint64))

    def randbelow(self, bound: int) -> int:
        """Exact uniform integer in [0, bound) for arbitrarily large ``bound``."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        nbits = (bound - 1).bit_length()
        if nbits == 0:
            return 0
        words = (nbits + 63) // 64
        excess = words * 64 - nbits
        while True:
            r = 0
            for _ in range(words):
                r = (r << 64) | self.bits64()
            r >>= excess
            if r < bound:
                return r

    # -- other variates ----------------------------------------------------

    def poisson(self, lam, size=None):
        """Exact Poisson variate(s); numpy uses PTRS for large means."""
        self.budget.uniform_draws += 1 if size is None else int(np.prod(size))
        return self.gen.poisson(lam, size)

    def geometric_from(self, u: np.ndarray | float, log_ratio: float):
        """Invert P(Z >= k) = a**k given uniforms ``u`` in (0, 1] and ``ln a``."""
        return np.floor(np.log(u) / log_ratio)
