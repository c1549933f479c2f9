"""Exact and approximate deployment solvers.

The exact path is a depth-first branch and bound over the binary
deployment vector.  The closed-form assignment rule resolves clients at
every complete node, so the search space is only the candidate subsets.
Partial nodes are bounded by an admissible relaxation: every client takes
its best-case cost over the not-yet-excluded candidates (counting only
sync terms toward already-included hubs), plus the constant sync cost
among the included hubs.

The approximate path is the randomized double greedy on the complementary
function ``f_ub - f``, which is nonnegative, vanishes on the empty set,
and is submodular whenever the cost function is supermodular.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass

import numpy as np

from pcnkit.allocation.instance import (
    AllocationInstance,
    AssignmentPlan,
    DeploymentPlan,
    LinearizedWitness,
    build_witness,
    check_witness,
    f_upper_bound,
)
from pcnkit.errors import InfeasibleError, SolverSizeError

DEFAULT_EXACT_BOUND = 20


@dataclass
class SolveResult:
    deployment: DeploymentPlan
    assignment: AssignmentPlan
    cost: float
    c_m: float
    c_s: float
    solver: str
    witness: LinearizedWitness | None = None
    nodes_explored: int = 0


def solve_exact(
    instance: AllocationInstance, exact_bound: int = DEFAULT_EXACT_BOUND
) -> SolveResult:
    """Globally optimal deployment by branch and bound.

    Also builds the linearization witness for the returned solution and
    asserts its constraints and cost agreement.
    """
    n = instance.n_candidates
    if n == 0:
        raise InfeasibleError("no candidates")
    if n > exact_bound:
        raise SolverSizeError(
            f"{n} candidates exceeds the exact-solver bound {exact_bound}; "
            "use the approximate solver"
        )
    omega_eff = instance.omega_eff
    zeta = instance.zeta
    delta = instance.delta
    eps_row_total = instance.eps  # symmetric, zero diagonal

    best: dict = {"cost": np.inf, "positions": None, "assign": None, "nodes": 0}

    def consider(positions: list[int]) -> None:
        c_m, c_s, c_b, assign = instance.eval_deployed(positions)
        if c_b < best["cost"]:
            best.update(cost=c_b, positions=list(positions), assign=assign,
                        c_m=c_m, c_s=c_s)

    consider(list(range(n)))
    for j in range(n):
        consider([j])

    included: list[int] = []
    # dsum_in[p] = sum of delta toward included hubs; eps_in = ordered-pair
    # constant cost among included hubs.  Both maintained incrementally.
    dsum_in = np.zeros(n, dtype=np.float64)
    state = {"eps_in": 0.0}
    allowed = np.ones(n, dtype=bool)  # not yet excluded

    def lower_bound() -> float:
        idx = np.flatnonzero(allowed)
        if idx.size == 0:
            return np.inf
        per_client = (zeta[:, idx] + omega_eff * dsum_in[idx]).min(axis=1)
        return float(per_client.sum()) + omega_eff * state["eps_in"]

    def descend(pos: int) -> None:
        best["nodes"] += 1
        if pos == n:
            if included:
                consider(included)
            return
        if lower_bound() >= best["cost"]:
            return
        # include branch
        inc_eps = float(eps_row_total[pos, included].sum()) * 2.0 if included else 0.0
        included.append(pos)
        np.add(dsum_in, delta[pos], out=dsum_in)
        state["eps_in"] += inc_eps
        descend(pos + 1)
        state["eps_in"] -= inc_eps
        np.subtract(dsum_in, delta[pos], out=dsum_in)
        included.pop()
        # exclude branch
        allowed[pos] = False
        descend(pos + 1)
        allowed[pos] = True

    descend(0)

    if best["positions"] is None:
        raise InfeasibleError("no feasible deployment found")
    deployment, assignment = instance.plans_from_positions(best["positions"], best["assign"])
    witness = build_witness(instance, deployment, assignment)
    check_witness(instance, deployment, assignment, witness)
    return SolveResult(
        deployment=deployment,
        assignment=assignment,
        cost=best["cost"],
        c_m=best["c_m"],
        c_s=best["c_s"],
        solver="exact",
        witness=witness,
        nodes_explored=best["nodes"],
    )


def double_greedy(instance: AllocationInstance, seed: int = 0) -> SolveResult:
    """Randomized double greedy on the complementary function.

    Walks the candidates in id order keeping a growing set X and a
    shrinking set Y; each element joins X with probability proportional to
    its clamped marginal gain, else leaves Y.  When both clamped marginals
    are zero the element is included.  An empty outcome falls back to the
    best singleton, since an empty deployment is infeasible.
    """
    n = instance.n_candidates
    if n == 0:
        raise InfeasibleError("no candidates")
    rng = random.Random(seed)
    f_ub = f_upper_bound(instance)

    def f_hat(positions: frozenset) -> float:
        if not positions:
            return 0.0
        _, _, c_b, _ = instance.eval_deployed(positions)
        return f_ub - c_b

    x_set: frozenset = frozenset()
    y_set: frozenset = frozenset(range(n))
    fx = f_hat(x_set)
    fy = f_hat(y_set)
    for u in range(n):
        x_with = x_set | {u}
        y_without = y_set - {u}
        fx_with = f_hat(x_with)
        fy_without = f_hat(y_without)
        a = max(fx_with - fx, 0.0)
        b = max(fy_without - fy, 0.0)
        p = 1.0 if a == b == 0.0 else a / (a + b)
        if rng.random() < p:
            x_set, fx = x_with, fx_with
        else:
            y_set, fy = y_without, fy_without
    assert x_set == y_set
    positions = sorted(x_set)
    if not positions:
        singles = [(instance.eval_deployed([j])[2], j) for j in range(n)]
        positions = [min(singles)[1]]
    c_m, c_s, c_b, assign = instance.eval_deployed(positions)
    deployment, assignment = instance.plans_from_positions(positions, assign)
    return SolveResult(
        deployment=deployment,
        assignment=assignment,
        cost=c_b,
        c_m=c_m,
        c_s=c_s,
        solver="double_greedy",
    )


@dataclass
class SweepRow:
    omega: float
    hub_count: int
    c_m: float
    c_s: float
    c_b: float
    solver: str
    wall_time: float


def omega_sweep(
    instance: AllocationInstance,
    omegas,
    exact_bound: int = DEFAULT_EXACT_BOUND,
    seed: int = 0,
) -> list[SweepRow]:
    """Cost-tradeoff frontier: one solve per weight value."""
    rows = []
    for w in omegas:
        inst_w = instance.with_omega(float(w))
        t0 = time.perf_counter()
        if instance.n_candidates <= exact_bound:
            res = solve_exact(inst_w, exact_bound)
        else:
            res = double_greedy(inst_w, seed)
        elapsed = time.perf_counter() - t0
        rows.append(
            SweepRow(
                omega=float(w),
                hub_count=len(res.deployment.deployed()),
                c_m=res.c_m,
                c_s=res.c_s,
                c_b=res.cost,
                solver=res.solver,
                wall_time=elapsed,
            )
        )
    return rows
