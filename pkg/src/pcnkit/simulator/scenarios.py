"""Canonical simulation scenarios: deadlock demo, concurrency sweep,
routing-choice study."""

from __future__ import annotations

from dataclasses import dataclass, replace

from pcnkit.simulator.config import (
    FlowDemand,
    GraphSpec,
    RoutingParams,
    SimConfig,
    WorkloadSpec,
)
from pcnkit.simulator.engine import run
from pcnkit.topology import NodeRole, PcnGraph

NODE_A, NODE_B, NODE_C = 0, 1, 2


def deadlock_scenario(control: str = "share", duration: float = 120.0,
                      seed: int = 1) -> SimConfig:
    """Three-node relay scenario prone to directional fund depletion.

    A and B transact through relay C; C also pays B.  The configured
    demand rates drain C's outbound funds, so with rate control disabled
    all throughput collapses once C runs dry; price-based control keeps
    the relay liquid.
    """
    g = PcnGraph()
    for nid in (NODE_A, NODE_B, NODE_C):
        g.add_node(nid, NodeRole.CLIENT)
    g.add_channel(NODE_A, NODE_C, 10.0, 10.0)
    g.add_channel(NODE_C, NODE_B, 10.0, 10.0)
    return SimConfig(
        graph=GraphSpec(kind="custom", custom=g),
        routing=RoutingParams(
            control=control,
            k_paths=2,
            path_kind="edw",
            scheduler="lifo",
            min_tu=1.0,
            max_tu=4.0,
            epsilon_bal=0.1,
            initial_rate=0.5,
            r_process=50.0,
        ),
        workload=WorkloadSpec(
            kind="flows",
            deadline=3.0,
            flows=[
                FlowDemand(NODE_A, NODE_B, 1.0, tu_size=1.0),
                FlowDemand(NODE_C, NODE_B, 2.0, tu_size=1.0),
                FlowDemand(NODE_B, NODE_A, 2.0, tu_size=1.0),
            ],
        ),
        duration=duration,
        epoch=1.0,
        seed=seed,
    )


def concurrency_config(n_cc: int, seed: int = 1, duration: float = 40.0,
                       total_mesh_capacity: float = 800.0,
                       workload_rate: float = 20.0,
                       contention_sigma: float = 0.05,
                       coherence_varpi: float = 0.02) -> SimConfig:
    """Two hubs joined by ``n_cc`` parallel channels of equal split capacity.

    Hub channels share service capacity (contention) and pay a per-pair
    coherence cost, so aggregate throughput follows the scaling law while
    the offered workload stays fixed across the sweep.
    """
    g = PcnGraph(max_parallel=max(n_cc, 1))
    g.add_node(0, NodeRole.ACTIVE_HUB)
    g.add_node(1, NodeRole.ACTIVE_HUB)
    clients_a = [10, 11]
    clients_b = [20, 21]
    for c in clients_a:
        g.add_node(c, NodeRole.CLIENT)
        g.add_channel(c, 0, 600.0, 600.0)
    for c in clients_b:
        g.add_node(c, NodeRole.CLIENT)
        g.add_channel(c, 1, 600.0, 600.0)
    per_channel = total_mesh_capacity / n_cc
    for _ in range(n_cc):
        g.add_channel(0, 1, per_channel / 2, per_channel / 2)
    half = workload_rate / 2
    flows = [
        FlowDemand(clients_a[0], clients_b[0], half / 2, tu_size=2.0),
        FlowDemand(clients_a[1], clients_b[1], half / 2, tu_size=2.0),
        FlowDemand(clients_b[0], clients_a[0], half / 2, tu_size=2.0),
        FlowDemand(clients_b[1], clients_a[1], half / 2, tu_size=2.0),
    ]
    return SimConfig(
        graph=GraphSpec(kind="custom", custom=g),
        routing=RoutingParams(
            control="share",
            k_paths=1,
            path_kind="edw",
            scheduler="lifo",
            min_tu=1.0,
            max_tu=4.0,
            r_process=1000.0,
            hub_r_process=10.0,
            initial_rate=3.0,
            epsilon_bal=1.0,
        ),
        workload=WorkloadSpec(kind="flows", deadline=3.0, flows=flows),
        duration=duration,
        epoch=1.0,
        seed=seed,
        n_cc=n_cc,
        contention_sigma=contention_sigma,
        coherence_varpi=coherence_varpi,
    )


def concurrent_channel_sweep(n_cc_values=None, seed: int = 1,
                             **kwargs) -> list[tuple[int, float]]:
    """Steady-state normalized throughput per concurrency level."""
    n_cc_values = list(n_cc_values or range(1, 11))
    rows = []
    for n in n_cc_values:
        outcome = run(concurrency_config(n, seed=seed, **kwargs))
        rows.append((n, outcome.ntp))
    return rows


PATH_KINDS = ["ksp", "heuristic", "edw", "eds"]
PATH_COUNTS = [1, 3, 5, 7]
SCHEDULERS = ["fifo", "lifo", "spf", "edf"]


def choice_study_base(seed: int = 11, duration: float = 40.0) -> SimConfig:
    """Fixed seeded 100-node workload used by the routing-choice study."""
    return SimConfig(
        graph=GraphSpec(kind="small_world", n=100, ring_degree=4, rewire_p=0.1),
        routing=RoutingParams(
            control="share",
            k_paths=5,
            path_kind="edw",
            scheduler="lifo",
            min_tu=1.0,
            max_tu=4.0,
            r_process=6.0,
            initial_rate=1.0,
            initial_window=30.0,
        ),
        workload=WorkloadSpec(
            kind="poisson",
            n_pairs=30,
            rate_per_pair=0.25,
            amount_median=4.0,
            amount_mean=8.0,
            whale_fraction=0.0,
            deadline=3.0,
        ),
        duration=duration,
        epoch=1.0,
        seed=seed,
    )


@dataclass
class ChoiceRow:
    dimension: str   # path_type | path_count | scheduler
    value: str
    tsr: float
    ntp: float


def routing_choice_study(base: SimConfig | None = None) -> list[ChoiceRow]:
    """One-dimensional sweeps around the default routing choices.

    Varies the path type, the path count, and the queue scheduler one at
    a time while holding the other two at their defaults, mirroring the
    marginal layout of the routing-choice comparison table.
    """
    base = base or choice_study_base()
    cache: dict[tuple, object] = {}

    def run_combo(kind: str, k: int, sched: str):
        key = (kind, k, sched)
        if key not in cache:
            cfg = replace(
                base,
                routing=replace(base.routing, path_kind=kind, k_paths=k,
                                scheduler=sched),
            )
            cache[key] = run(cfg)
        return cache[key]

    rows: list[ChoiceRow] = []
    for kind in PATH_KINDS:
        out = run_combo(kind, base.routing.k_paths, base.routing.scheduler)
        rows.append(ChoiceRow("path_type", kind, out.tsr, out.ntp))
    for k in PATH_COUNTS:
        out = run_combo(base.routing.path_kind, k, base.routing.scheduler)
        rows.append(ChoiceRow("path_count", str(k), out.tsr, out.ntp))
    for sched in SCHEDULERS:
        out = run_combo(base.routing.path_kind, base.routing.k_paths, sched)
        rows.append(ChoiceRow("scheduler", sched, out.tsr, out.ntp))
    return rows
