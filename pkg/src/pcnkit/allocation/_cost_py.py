"""Pure-Python assignment/cost kernel.

Fallback for the compiled extension.  The arithmetic (operation order,
tie-breaking) is kept identical to the Cython kernel so both backends
produce bitwise-equal results: plain left-to-right float64 sums, strict
less-than comparisons.
"""

from __future__ import annotations


def assign_eval(
    zeta_rows: list[list[float]],
    delta_rows: list[list[float]],
    eps_rows: list[list[float]],
    omega: float,
    deployed: list[int],
) -> tuple[float, float, list[int]]:
    """Optimal per-client assignment over ``deployed`` candidate positions.

    Returns (management cost, raw synchronization cost, assignment) where
    the assignment lists the chosen candidate position per client and the
    sync cost sums ordered candidate pairs.
    """
    d = len(deployed)
    dsum = [0.0] * d
    for j in range(d):
        row = delta_rows[deployed[j]]
        acc = 0.0
        for jj in range(d):
            acc += row[deployed[jj]]
        dsum[j] = acc
    c_m = 0.0
    loads = [0] * d
    assign = []
    for row in zeta_rows:
        best = row[deployed[0]] + omega * dsum[0]
        best_j = 0
        for j in range(1, d):
            v = row[deployed[j]] + omega * dsum[j]
            if v < best:
                best = v
                best_j = j
        assign.append(deployed[best_j])
        c_m += row[deployed[best_j]]
        loads[best_j] += 1
    c_s = 0.0
    for j in range(d):
        c_s += loads[j] * dsum[j]
    for j in range(d):
        row = eps_rows[deployed[j]]
        for jj in range(d):
            c_s += row[deployed[jj]]
    return c_m, c_s, assign
