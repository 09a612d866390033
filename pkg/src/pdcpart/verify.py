"""Ground truth and measurement: enumeration, chi-square tests, cost reports."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable

import numpy as np
from scipy.stats import chi2_contingency, chisquare

from .counting import C, hit_probability, partition_count, sum_distribution
from .ensemble import solve_bounded_tilt, tilt_parameter
from .rng import RandomStream
from .samplers import Partition, default_split, sample, sample_many
from .variants import (
    sample_kcore,
    sample_kcore_lucky,
    sample_plane_array,
    sample_plane_array_lucky,
    sample_setpartition_shape,
    set_partition_lucky_cost,
)

ENUMERATION_LIMIT = 60
P_THRESHOLD = 1e-3


def iter_partitions(n: int, max_part: int | None = None) -> Iterable[tuple[int, ...]]:
    """Partitions of n as nonincreasing tuples, in decreasing lexicographic order."""
    if n == 0:
        yield ()
        return
    top = n if max_part is None else min(n, max_part)
    for first in range(top, 0, -1):
        for rest in iter_partitions(n - first, first):
            yield (first,) + rest


class EnumerationIndex:
    """All partitions of n, ordered, with a reverse lookup."""

    def __init__(self, n: int, partitions: list[tuple[int, ...]]):
        self.n = n
        self.partitions = partitions
        self._index = {p: k for k, p in enumerate(partitions)}

    def __len__(self) -> int:
        return len(self.partitions)

    def __getitem__(self, k: int) -> tuple[int, ...]:
        return self.partitions[k]

    def lookup(self, p) -> int:
        key = p.parts if isinstance(p, Partition) else tuple(p)
        try:
            return self._index[key]
        except KeyError:
            raise KeyError(f"{key} is not a partition of {self.n}") from None

    def __contains__(self, p) -> bool:
        key = p.parts if isinstance(p, Partition) else tuple(p)
        return key in self._index

    def counts(self, samples: Iterable) -> np.ndarray:
        out = np.zeros(len(self), dtype=np.int64)
        for s in samples:
            out[self.lookup(s)] += 1
        return out


def enumerate_partitions(n: int, max_part: int | None = None) -> EnumerationIndex:
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n > ENUMERATION_LIMIT:
        raise ValueError(f"enumeration is capped at n = {ENUMERATION_LIMIT}")
    return EnumerationIndex(n, list(iter_partitions(n, max_part)))


# ---------------------------------------------------------------------------
# chi-square
# ---------------------------------------------------------------------------


class UndersampledError(ValueError):
    pass


def chi_square_uniform(counts) -> tuple[float, float]:
    """Pearson statistic and p-value against equal cell probabilities."""
    counts = np.asarray(counts, dtype=float)
    if counts.sum() < 5 * len(counts):
        raise UndersampledError(f"{counts.sum():.0f} draws for {len(counts)} cells; need 5 per cell")
    stat, p = chisquare(counts)
    return float(stat), float(p)


def chi_square_law(counts, probs) -> tuple[float, float]:
    """Goodness of fit against given cell probabilities (rescaled to the total)."""
    counts = np.asarray(counts, dtype=float)
    probs = np.asarray(probs, dtype=float)
    expected = counts.sum() * probs / probs.sum()
    if expected.min() < 5:
        raise UndersampledError("an expected cell count is below 5")
    stat, p = chisquare(counts, expected)
    return float(stat), float(p)


def chi_square_two_sample(a, b) -> tuple[float, float]:
    """Homogeneity test for two count vectors over the same cells (empty cells dropped)."""
    table = np.vstack([np.asarray(a, dtype=float), np.asarray(b, dtype=float)])
    table = table[:, table.sum(axis=0) > 0]
    stat, p, _, _ = chi2_contingency(table, correction=False)
    return float(stat), float(p)


def binned(values, edges) -> np.ndarray:
    """Counts of integer values in bins [e_k, e_{k+1}), with open outer bins."""
    idx = np.searchsorted(np.asarray(edges), np.asarray(values), side="right")
    return np.bincount(idx, minlength=len(edges) + 1)


def majority(test: Callable[[int], bool], seed: int, votes: int = 3) -> tuple[bool, list[bool]]:
    """Run ``test`` on seeds seed, seed+1, ... and stop once a majority is settled."""
    need = votes // 2 + 1
    results: list[bool] = []
    for k in range(votes):
        results.append(bool(test(seed + k)))
        if results.count(True) >= need or results.count(False) >= need:
            break
    return results.count(True) >= need, results


# ---------------------------------------------------------------------------
# cost measurement
# ---------------------------------------------------------------------------


@dataclass
class CostReport:
    method: str
    n: int
    trials: int
    mean_proposals: float
    mean_rng_draws: float
    theory_value: float | None
    ratio: float | None
    metric: str = "proposals"
    measured: float = 0.0
    stderr: float = 0.0
    per_level: list[float] = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)


def lucky_theory(n: int) -> float:
    """2 6**(1/4) n**(3/4) proposals."""
    return 2.0 * 6**0.25 * n**0.75


def trivial_theory(n: int) -> float:
    """Asymptotic proposals for the b = 1 split: 2 pi 6**(-1/4) n**(1/4).

    This is lucky_theory(n) * (1 - x(n)) to leading order.
    """
    return 2.0 * math.pi * 6**-0.25 * n**0.25


def trivial_theory_stated(n: int) -> float:
    """2 n**(1/4) 6**(3/4) / pi; smaller than the true cost by the factor 6/pi**2."""
    return 2.0 * n**0.25 * 6**0.75 / math.pi


def exact_trivial_cost(n: int) -> float:
    """(1 - x) / P(T = n) at x = x(n), i.e. the finite-n acceptance cost."""
    x = tilt_parameter(n)
    return (1.0 - x) / math.exp(hit_probability(n, x, max_part=n))


def exact_lucky_cost(n: int) -> float:
    x = tilt_parameter(n)
    return 1.0 / math.exp(hit_probability(n, x, max_part=n))


def exact_small_large_cost(n: int, b: int) -> float:
    """max_j q_j / P(T = n): the acceptance cost of the large-part phase."""
    x = tilt_parameter(n)
    return sum_distribution(b, n, x).max / math.exp(hit_probability(n, x, max_part=n))


def _runs(fn, trials, seed):
    props, draws, stats = [], [], []
    for i in range(trials):
        out, st = fn(RandomStream.substream(seed, i))
        props.append(st.proposals)
        draws.append(st.rng.uniform_draws)
        stats.append(st)
    return np.asarray(props, float), np.asarray(draws, float), stats


def _report(method, n, trials, props, draws, theory, metric="proposals", measured=None, stderr=None, **extras):
    measured = float(props.mean()) if measured is None else measured
    stderr = float(props.std(ddof=1) / math.sqrt(len(props))) if stderr is None else stderr
    return CostReport(
        method=method,
        n=n,
        trials=trials,
        mean_proposals=float(props.mean()),
        mean_rng_draws=float(draws.mean()),
        theory_value=theory,
        ratio=None if theory is None else measured / theory,
        metric=metric,
        measured=measured,
        stderr=stderr,
        **extras,
    )


def _speedup(slow, fast):
    s = slow.mean() / fast.mean()
    rel = math.sqrt((slow.std(ddof=1) / slow.mean()) ** 2 / len(slow) + (fast.std(ddof=1) / fast.mean()) ** 2 / len(fast))
    return float(s), float(s * rel)


def measure_cost(method: str, n: int, trials: int, seed: int, **params) -> CostReport:
    """Run ``method`` ``trials`` times on substreams of ``seed`` and compare with theory.

    Methods: lucky, trivial, trivial-speedup, small-large, recursive,
    recursive-noparity, kcore (needs k), setshape, planearray.
    """
    if trials < 2:
        raise ValueError("need at least 2 trials")
    if method == "lucky":
        p, d, _ = _runs(lambda r: sample("lucky", n, r), trials, seed)
        return _report(method, n, trials, p, d, lucky_theory(n), extras={"exact": exact_lucky_cost(n)})
    if method == "trivial":
        p, d, _ = _runs(lambda r: sample("trivial", n, r), trials, seed)
        extras = {"exact": exact_trivial_cost(n), "stated_theory": trivial_theory_stated(n)}
        return _report(method, n, trials, p, d, trivial_theory(n), extras=extras)
    if method == "trivial-speedup":
        lucky_trials = params.get("lucky_trials", trials)
        p, d, _ = _runs(lambda r: sample("trivial", n, r), trials, seed)
        q, _, _ = _runs(lambda r: sample("lucky", n, r), lucky_trials, seed + 1)
        s, se = _speedup(q, p)
        return _report(
            method, n, trials, p, d, math.sqrt(n) / C, metric="speedup", measured=s, stderr=se,
            extras={"lucky_mean": float(q.mean()), "lucky_trials": lucky_trials, "exact": 1.0 / (1.0 - tilt_parameter(n))},
        )
    if method == "small-large":
        b = params.get("b") or default_split(n)
        p, d, st = _runs(lambda r: sample("small-large", n, r, b=b), trials, seed)
        extras = {"b": b, "phase_b_mean": float(np.mean([s.phase_b_proposals for s in st]))}
        return _report(method, n, trials, p, d, exact_small_large_cost(n, b), extras=extras)
    if method in ("recursive", "recursive-noparity"):
        parity = method == "recursive"
        p, d, st = _runs(lambda r: sample("recursive", n, r, parity=parity), trials, seed)
        top = np.asarray([s.per_level[0][1] if s.per_level else 1 for s in st], float)
        depth = max(len(s.per_level) for s in st)
        per_level = [float(np.mean([s.per_level[k][1] for s in st if len(s.per_level) > k])) for k in range(depth)]
        residual = [s.per_level[1][0] / n if len(s.per_level) > 1 else float("nan") for s in st]
        extras = {
            "total_proposals_mean": float(p.mean()),
            "first_residual_fraction": residual,
            "max_depth": max(s.recursion_depth for s in st),
        }
        theory = math.sqrt(2.0) if parity else math.sqrt(8.0)
        return _report(method, n, trials, top, d, theory, metric="top-level proposals", per_level=per_level, extras=extras)
    if method == "kcore":
        k = params["k"]
        lucky_trials = params.get("lucky_trials", trials)
        p, d, _ = _runs(lambda r: sample_kcore(n, k, r), trials, seed)
        q, _, _ = _runs(lambda r: sample_kcore_lucky(n, k, r), lucky_trials, seed + 1)
        s, se = _speedup(q, p)
        theory = 1.0 / (1.0 - solve_bounded_tilt(n, k))
        return _report(method, n, trials, p, d, theory, metric="speedup", measured=s, stderr=se, extras={"k": k, "lucky_mean": float(q.mean())})
    if method == "setshape":
        p, d, st = _runs(lambda r: sample_setpartition_shape(n, r), trials, seed)
        survive = 1.0 - sum(s.hard_rejections for s in st) / p.sum()
        base = set_partition_lucky_cost(n)
        return _report(method, n, trials, p, d, None, extras={"lucky_baseline": base, "survival": survive})
    if method == "planearray":
        lucky_trials = params.get("lucky_trials", trials)
        p, d, _ = _runs(lambda r: sample_plane_array(n, r), trials, seed)
        q, _, _ = _runs(lambda r: sample_plane_array_lucky(n, r), lucky_trials, seed + 1)
        s, se = _speedup(q, p)
        return _report(method, n, trials, p, d, n ** (1.0 / 3.0), metric="speedup", measured=s, stderr=se, extras={"lucky_mean": float(q.mean())})
    raise ValueError(f"unknown method {method!r}")


COST_METHODS = (
    "lucky",
    "trivial",
    "trivial-speedup",
    "small-large",
    "recursive",
    "recursive-noparity",
    "kcore",
    "setshape",
    "planearray",
)


def verify_uniform(method: str, n: int, samples: int, seed: int, **kw) -> tuple[float, float]:
    """Chi-square of ``samples`` draws of ``method`` against the uniform law on partitions of n."""
    idx = enumerate_partitions(n)
    draws = sample_many(method, n, samples, RandomStream(seed), **kw)
    return chi_square_uniform(idx.counts(p for p, _ in draws))
