"""Deterministic discrete-event simulation of PCN payment flows."""

from pcnkit.simulator.ccbt import (
    CcbtParams,
    ccbt_fit,
    ccbt_optimal_n,
    ccbt_throughput,
)
from pcnkit.simulator.config import (
    GraphSpec,
    RoutingParams,
    SimConfig,
    WorkloadSpec,
)
from pcnkit.simulator.engine import SimEngine, run
from pcnkit.simulator.metrics import (
    SimOutcome,
    compute_ntp,
    compute_tsr,
    latency_summary,
    windowed_throughput,
)
from pcnkit.simulator.scenarios import (
    concurrent_channel_sweep,
    deadlock_scenario,
    routing_choice_study,
)

__all__ = [
    "CcbtParams",
    "GraphSpec",
    "RoutingParams",
    "SimConfig",
    "SimEngine",
    "SimOutcome",
    "WorkloadSpec",
    "ccbt_fit",
    "ccbt_optimal_n",
    "ccbt_throughput",
    "compute_ntp",
    "compute_tsr",
    "concurrent_channel_sweep",
    "deadlock_scenario",
    "latency_summary",
    "routing_choice_study",
    "run",
    "windowed_throughput",
]
