"""Workload generation: Poisson transaction arrivals or persistent flows.

Amounts for the transactional workload follow a log-normal matched to a
(median, mean) pair, with an optional fraction of payments sized beyond
the largest channel so they must either split across paths or fail.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from pcnkit.simulator.config import WorkloadSpec
from pcnkit.topology import PcnGraph


@dataclass
class Arrival:
    time: float
    source: int
    dest: int
    amount: float


class WorkloadSource:
    """Deterministic arrival stream for one run."""

    def __init__(self, spec: WorkloadSpec, graph: PcnGraph, seed: int,
                 duration: float):
        self.spec = spec
        self.duration = duration
        self.rng = random.Random(seed)
        self._max_cap = max((c.capacity for c in graph.channels), default=0.0)
        if spec.kind == "poisson":
            nodes = graph.nodes
            if len(nodes) < 2:
                raise ValueError("need at least two nodes")
            self.pairs = []
            seen = set()
            while len(self.pairs) < spec.n_pairs:
                s, e = self.rng.sample(nodes, 2)
                if (s, e) not in seen:
                    seen.add((s, e))
                    self.pairs.append((s, e))
            if spec.amount_mean > spec.amount_median:
                self._sigma = math.sqrt(
                    2.0 * math.log(spec.amount_mean / spec.amount_median)
                )
            else:
                self._sigma = 0.0
            self._mu = math.log(spec.amount_median)

    def _amount(self) -> float:
        spec = self.spec
        if spec.whale_fraction > 0 and self.rng.random() < spec.whale_fraction:
            return self._max_cap * self.rng.uniform(1.2, 2.0)
        if self._sigma == 0.0:
            return spec.amount_median
        return max(0.1, self.rng.lognormvariate(self._mu, self._sigma))

    def arrivals(self) -> list[Arrival]:
        """All arrivals for the run, sorted by time."""
        out: list[Arrival] = []
        if self.spec.kind == "poisson":
            for s, e in self.pairs:
                t = 0.0
                while True:
                    t += self.rng.expovariate(self.spec.rate_per_pair)
                    if t >= self.duration:
                        break
                    out.append(Arrival(t, s, e, self._amount()))
        else:
            for flow in self.spec.flows:
                step = flow.tu_size / flow.rate
                n = int(self.duration / step)
                for i in range(1, n + 1):
                    t = i * step
                    if t < self.duration:
                        out.append(Arrival(t, flow.source, flow.dest, flow.tu_size))
        out.sort(key=lambda a: (a.time, a.source, a.dest))
        return out
