"""Run metrics: success ratio, normalized throughput, latency."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def compute_tsr(completed: int, generated: int) -> float:
    """Completed over generated transaction counts; 1 for an empty run."""
    if completed > generated:
        raise ValueError("completed exceeds generated")
    if generated == 0:
        return 1.0
    return completed / generated


def compute_ntp(completed_value: float, generated_value: float) -> float:
    """Completed over generated payment value; 1 for an empty run."""
    if completed_value > generated_value + 1e-9:
        raise ValueError("completed value exceeds generated value")
    if generated_value == 0:
        return 1.0
    return completed_value / generated_value


def latency_summary(latencies: list[float]) -> tuple[float, float, float]:
    """(mean, median, 95th percentile); zeros when nothing completed."""
    if not latencies:
        return 0.0, 0.0, 0.0
    arr = np.asarray(latencies)
    return float(arr.mean()), float(np.percentile(arr, 50)), float(np.percentile(arr, 95))


def windowed_throughput(
    completions: list[tuple[float, int, int, float]],
    t0: float,
    t1: float,
    pair: tuple[int, int] | None = None,
    both_directions: bool = True,
) -> float:
    """Completed value per second inside [t0, t1], optionally per node pair."""
    if t1 <= t0:
        raise ValueError("empty window")
    total = 0.0
    for t, src, dst, value in completions:
        if not t0 <= t <= t1:
            continue
        if pair is not None:
            s, e = pair
            if (src, dst) != (s, e) and not (both_directions and (src, dst) == (e, s)):
                continue
        total += value
    return total / (t1 - t0)


@dataclass
class SimOutcome:
    tsr: float
    ntp: float
    latency_mean: float
    latency_p50: float
    latency_p95: float
    generated_count: int
    completed_count: int
    aborted_count: int
    generated_value: float
    completed_value: float
    deadlock: bool
    duration: float
    warmup: float
    constraint_samples: int = 0
    capacity_violations: int = 0
    balance_violations: int = 0
    completions: list = field(default_factory=list, repr=False)
    rate_samples: list = field(default_factory=list, repr=False)
    trace_rows: list = field(default_factory=list, repr=False)
    final_rates: dict = field(default_factory=dict, repr=False)

    def outcome_row(self) -> dict:
        """Flat mapping for CSV export (stable key order)."""
        return {
            "tsr": self.tsr,
            "ntp": self.ntp,
            "latency_mean": self.latency_mean,
            "latency_p50": self.latency_p50,
            "latency_p95": self.latency_p95,
            "generated_count": self.generated_count,
            "completed_count": self.completed_count,
            "aborted_count": self.aborted_count,
            "generated_value": self.generated_value,
            "completed_value": self.completed_value,
            "deadlock": int(self.deadlock),
            "constraint_samples": self.constraint_samples,
            "capacity_violations": self.capacity_violations,
            "balance_violations": self.balance_violations,
        }
