"""Simulation configuration dataclasses and validation."""

from __future__ import annotations

from dataclasses import dataclass, field

from pcnkit.errors import ConfigError
from pcnkit.routing import SchedulerPolicy
from pcnkit.topology import PathKind


@dataclass
class GraphSpec:
    kind: str = "small_world"        # small_world | file | custom
    n: int = 100
    ring_degree: int = 4
    rewire_p: float = 0.1
    min_cap: float = 10.0
    mean_cap: float = 403.0
    median_cap: float = 152.0
    path: str | None = None          # for kind == "file"
    custom: object = None            # for kind == "custom": a PcnGraph

    def validate(self) -> None:
        if self.kind not in ("small_world", "file", "custom"):
            raise ConfigError(f"unknown graph kind {self.kind!r}")
        if self.kind == "small_world":
            if self.n < 3 or self.ring_degree <= 0 or self.ring_degree % 2:
                raise ConfigError("bad small-world parameters")
            if not 0 <= self.rewire_p <= 1:
                raise ConfigError("rewire_p out of range")
        if self.kind == "file" and not self.path:
            raise ConfigError("graph kind 'file' needs a path")
        if self.kind == "custom" and self.custom is None:
            raise ConfigError("graph kind 'custom' needs a graph object")


@dataclass
class RoutingParams:
    kappa: float = 0.01
    eta: float = 0.01
    alpha: float = 0.2
    t_fee: float = 0.01
    tau: float = 0.2                 # price/probe update interval
    delay_threshold: float = 0.4     # queueing delay before marking
    beta: float = 10.0
    gamma: float = 0.1
    min_tu: float = 1.0
    max_tu: float = 4.0
    k_paths: int = 5
    path_kind: str = "edw"
    scheduler: str = "lifo"
    queue_cap: float = 8000.0
    r_process: float = 50.0          # per-direction processing rate, tokens/s
    hub_r_process: float | None = None  # override for hub-to-hub channels
    initial_window: float = 40.0
    min_window: float | None = None  # None: one max-size unit
    initial_rate: float = 1.0
    r_floor: float = 1e-6            # marginal-utility saturation point
    r_max: float = 100.0
    hop_latency: float = 0.01
    epsilon_bal: float = 0.25
    delta_lockup: float | None = None  # None: measured per channel
    control: str = "share"           # share | off
    ema_alpha: float = 0.3           # smoothing for measured rates

    def validate(self) -> None:
        for name in ("kappa", "eta", "alpha", "tau", "beta", "gamma"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if not 0 < self.t_fee < 1:
            raise ConfigError("t_fee must be in (0, 1)")
        if not 0 < self.min_tu <= self.max_tu:
            raise ConfigError("need 0 < min_tu <= max_tu")
        if self.k_paths < 1:
            raise ConfigError("k_paths must be >= 1")
        if self.control not in ("share", "off"):
            raise ConfigError("control must be 'share' or 'off'")
        try:
            PathKind(self.path_kind)
            SchedulerPolicy(self.scheduler)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


@dataclass
class FlowDemand:
    source: int
    dest: int
    rate: float                      # tokens per second
    tu_size: float = 1.0


@dataclass
class WorkloadSpec:
    kind: str = "poisson"            # poisson | flows
    n_pairs: int = 20
    rate_per_pair: float = 0.3       # transactions per second per pair
    amount_median: float = 2.0
    amount_mean: float = 4.0
    whale_fraction: float = 0.0      # payments sized beyond any channel
    deadline: float = 3.0
    flows: list[FlowDemand] = field(default_factory=list)

    def validate(self) -> None:
        if self.kind not in ("poisson", "flows"):
            raise ConfigError(f"unknown workload kind {self.kind!r}")
        if self.kind == "poisson":
            if self.n_pairs < 1 or self.rate_per_pair <= 0:
                raise ConfigError("bad poisson workload parameters")
            if not 0 < self.amount_median <= self.amount_mean:
                raise ConfigError("need 0 < amount_median <= amount_mean")
            if not 0 <= self.whale_fraction < 1:
                raise ConfigError("whale_fraction out of range")
        if self.kind == "flows" and not self.flows:
            raise ConfigError("flow workload needs at least one flow")
        if self.deadline <= 0:
            raise ConfigError("deadline must be positive")


@dataclass
class SimConfig:
    graph: GraphSpec = field(default_factory=GraphSpec)
    routing: RoutingParams = field(default_factory=RoutingParams)
    workload: WorkloadSpec = field(default_factory=WorkloadSpec)
    duration: float = 60.0
    epoch: float = 1.0
    warmup_periods: int = 10         # tau periods excluded from steady metrics
    seed: int = 1
    n_cc: int = 1                    # parallel channels per hub pair
    contention_sigma: float = 0.0    # service-time share of queueing contention
    coherence_varpi: float = 0.0     # service-time share of cross-channel sync
    batch_window: float = 0.1
    trace: bool = False

    @property
    def warmup_time(self) -> float:
        return self.warmup_periods * self.routing.tau

    def validate(self) -> None:
        self.graph.validate()
        self.routing.validate()
        self.workload.validate()
        if self.duration <= self.warmup_time:
            raise ConfigError("duration must exceed the warm-up window")
        if self.routing.tau > self.epoch:
            raise ConfigError("update interval tau must not exceed the epoch")
        if self.n_cc < 1:
            raise ConfigError("n_cc must be >= 1")
        if not (0 <= self.contention_sigma < 1 and 0 <= self.coherence_varpi < 1):
            raise ConfigError("contention coefficients must be in [0, 1)")
