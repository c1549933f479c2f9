"""Concurrency-throughput model: scaling law evaluation and fitting.

Throughput in the number of parallel channels follows the universal
scalability form: linear gain damped by a contention term (serialized
resource access) and a coherence term (pairwise state synchronization).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares


@dataclass(frozen=True)
class CcbtParams:
    epsilon: float           # baseline throughput at one channel
    sigma_contention: float  # queueing/contention share, in [0, 1)
    varpi_coherence: float   # pairwise synchronization share, in [0, 1)

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if not (0 <= self.sigma_contention < 1 and 0 <= self.varpi_coherence < 1):
            raise ValueError("contention and coherence must be in [0, 1)")


def ccbt_throughput(n_cc: int, params: CcbtParams) -> float:
    """Modeled throughput with ``n_cc`` concurrent channels."""
    if n_cc < 1:
        raise ValueError("n_cc must be >= 1")
    n = float(n_cc)
    denom = 1.0 + params.sigma_contention * (n - 1.0) + params.varpi_coherence * n * (n - 1.0)
    return params.epsilon * n / denom


def ccbt_optimal_n(params: CcbtParams, n_max: int = 100) -> int:
    """Concurrency level maximizing modeled throughput (grid scan)."""
    best_n, best_t = 1, ccbt_throughput(1, params)
    for n in range(2, n_max + 1):
        t = ccbt_throughput(n, params)
        if t > best_t:
            best_n, best_t = n, t
    return best_n


def ccbt_fit(measured: list[tuple[int, float]]) -> tuple[CcbtParams, float]:
    """Least-squares fit of the scaling parameters to measured points.

    Needs at least three distinct concurrency levels.  Returns the fitted
    parameters and the root-mean-square residual.
    """
    ns = np.asarray([n for n, _ in measured], dtype=float)
    ts = np.asarray([t for _, t in measured], dtype=float)
    if len(set(ns.tolist())) < 3:
        raise ValueError("need at least 3 distinct concurrency levels")

    def residuals(theta):
        eps, sig, var = theta
        denom = 1.0 + sig * (ns - 1.0) + var * ns * (ns - 1.0)
        return eps * ns / denom - ts

    t1 = ts[ns == ns.min()]
    eps0 = float(t1[0] / ns.min()) if t1.size else float(ts.max() / ns.max())
    result = least_squares(
        residuals,
        x0=[max(eps0, 1e-6), 0.1, 0.01],
        bounds=([1e-12, 0.0, 0.0], [np.inf, 1.0 - 1e-9, 1.0 - 1e-9]),
        xtol=1e-15,
        ftol=1e-15,
        gtol=1e-15,
    )
    eps, sig, var = result.x
    rms = float(np.sqrt(np.mean(result.fun**2)))
    return CcbtParams(float(eps), float(sig), float(var)), rms
