"""Shuffle-phase scheduling and zero-forcing simulation for MapReduce over a wireless interference channel."""

from .model import (
    DemandSet,
    Iv,
    Placement,
    ReduceAssignment,
    SystemParams,
    assign_reduce_functions,
    compute_computation_load,
    demand_set,
    placement_granularity,
    support_set,
    symmetric_placement,
    total_demand,
)
from .scheduler import (
    Block,
    Delivery,
    FeasibilityReport,
    Schedule,
    brute_force_min_blocks,
    schedule,
    schedule_high_r,
    schedule_low_r,
    validate_schedule,
)
from .metrics import (
    ConverseBound,
    LoadReport,
    ReplicationProfile,
    coded_tdma_load,
    converse_lower_bound,
    optimal_load,
    time_shared_load,
    tradeoff_table,
    uncoded_tdma_load,
)

__version__ = "0.1.0"
