"""Exact uniform sampling of integer partitions by probabilistic divide-and-conquer."""

__version__ = "0.1.0"

from .counting import (  # noqa: E402
    C,
    CountTable,
    SumDistribution,
    build_count_table,
    hit_probability,
    hr1_log,
    partition_count,
    sum_distribution,
)
from .ensemble import (  # noqa: E402
    GrandCanonical,
    MultiplicityVector,
    ParityVector,
    propose_largest_index,
    propose_naive,
    propose_parity,
    propose_plane_array,
    propose_poisson,
    propose_set_partition,
    roaming_tilt,
    set_partition_tilt,
    solve_bounded_tilt,
    tilt_parameter,
    weighted_sum,
)
from .rng import RandomStream, RngBudget  # noqa: E402
from .samplers import (  # noqa: E402
    Partition,
    SampleStats,
    sample,
    sample_lucky,
    sample_many,
    sample_pdc_recursive,
    sample_pdc_small_large,
    sample_pdc_trivial,
    sample_table,
)
from .variants import sample_kcore, sample_plane_array, sample_setpartition_shape  # noqa: E402
from .batch import batch_mix_match, dominance_interval, dominates, opportunistic_estimate  # noqa: E402
