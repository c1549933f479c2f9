"""Balanced-cost allocation model: instance, plans, costs, linearization.

The objective splits into a management part (client-to-hub costs) and a
synchronization part (between deployed hubs, with a per-client-load term
and a constant term), traded off by a weight ``omega``.  The sync part
sums ordered hub pairs; set ``halve_sync=True`` to count unordered pairs
instead (both conventions keep the closed-form optimal assignment valid).
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from pcnkit.allocation import kernel
from pcnkit.errors import InfeasibleError, InvariantViolation


@dataclass(frozen=True)
class DeploymentPlan:
    """Binary deployment decision per candidate."""

    x: dict[int, int]

    def deployed(self) -> list[int]:
        return sorted(n for n, flag in self.x.items() if flag)

    def __post_init__(self):
        for n, flag in self.x.items():
            if flag not in (0, 1):
                raise ValueError(f"x[{n}] must be 0/1")


@dataclass(frozen=True)
class AssignmentPlan:
    """Client-to-candidate assignment; exactly one hub per client."""

    assigned: dict[int, int]

    def y(self, client: int, candidate: int) -> int:
        return 1 if self.assigned.get(client) == candidate else 0

    def load_of(self, candidate: int) -> int:
        return sum(1 for h in self.assigned.values() if h == candidate)


@dataclass(eq=False)
class AllocationInstance:
    clients: tuple[int, ...]
    candidates: tuple[int, ...]
    zeta: np.ndarray   # (clients, candidates) management costs
    delta: np.ndarray  # (candidates, candidates) per-load sync costs
    eps: np.ndarray    # (candidates, candidates) constant sync costs
    omega: float
    halve_sync: bool = False
    _zeta_rows: list = field(default=None, repr=False)
    _delta_rows: list = field(default=None, repr=False)
    _eps_rows: list = field(default=None, repr=False)

    def __post_init__(self):
        m, n = len(self.clients), len(self.candidates)
        self.zeta = np.ascontiguousarray(self.zeta, dtype=np.float64)
        self.delta = np.ascontiguousarray(self.delta, dtype=np.float64)
        self.eps = np.ascontiguousarray(self.eps, dtype=np.float64)
        if self.zeta.shape != (m, n):
            raise ValueError(f"zeta shape {self.zeta.shape} != ({m}, {n})")
        for name, mat in (("delta", self.delta), ("eps", self.eps)):
            if mat.shape != (n, n):
                raise ValueError(f"{name} shape {mat.shape} != ({n}, {n})")
            if not np.allclose(mat, mat.T):
                raise ValueError(f"{name} must be symmetric")
            if np.any(np.diag(mat) != 0):
                raise ValueError(f"{name} must have a zero diagonal")
        if np.any(self.zeta < 0) or np.any(self.delta < 0) or np.any(self.eps < 0):
            raise ValueError("costs must be nonnegative")
        if self.omega < 0:
            raise ValueError("omega must be nonnegative")
        self._zeta_rows = [list(row) for row in self.zeta]
        self._delta_rows = [list(row) for row in self.delta]
        self._eps_rows = [list(row) for row in self.eps]

    # -- bookkeeping ----------------------------------------------------

    @property
    def n_candidates(self) -> int:
        return len(self.candidates)

    @property
    def omega_eff(self) -> float:
        """Sync weight as seen by the assignment rule and the cost sum."""
        return self.omega * 0.5 if self.halve_sync else self.omega

    def candidate_pos(self, candidate: int) -> int:
        return self.candidates.index(candidate)

    def with_omega(self, omega: float) -> "AllocationInstance":
        return AllocationInstance(
            self.clients, self.candidates, self.zeta, self.delta, self.eps,
            omega, self.halve_sync,
        )

    # -- core evaluation --------------------------------------------------

    def eval_deployed(self, deployed_pos: Iterable[int]):
        """(c_m, c_s, c_b, assignment positions) for a deployed position set.

        Assignment follows the closed-form rule: each client goes to the
        deployed candidate minimizing ``zeta + omega_eff * sum-of-delta``,
        ties to the lowest candidate position.
        """
        positions = sorted(deployed_pos)
        if not positions:
            raise InfeasibleError("empty deployment")
        if kernel.compiled_assign_eval is not None:
            c_m, c_s_raw, assign = kernel.compiled_assign_eval(
                self.zeta, self.delta, self.eps, self.omega_eff,
                np.asarray(positions, dtype=np.int32),
            )
            assign = [int(a) for a in assign]
        else:
            c_m, c_s_raw, assign = kernel.python_assign_eval(
                self._zeta_rows, self._delta_rows, self._eps_rows,
                self.omega_eff, positions,
            )
        c_s = c_s_raw * 0.5 if self.halve_sync else c_s_raw
        c_b = c_m + self.omega_eff * c_s_raw
        return c_m, c_s, c_b, assign

    def plans_from_positions(self, deployed_pos, assign_pos) -> tuple[DeploymentPlan, AssignmentPlan]:
        dep = set(deployed_pos)
        x = {n: (1 if i in dep else 0) for i, n in enumerate(self.candidates)}
        assigned = {m: self.candidates[assign_pos[i]] for i, m in enumerate(self.clients)}
        return DeploymentPlan(x), AssignmentPlan(assigned)


def instance_from_hops(
    hops: np.ndarray,
    clients: Iterable[int],
    candidates: Iterable[int],
    omega: float,
    zeta_rate: float = 0.02,
    delta_rate: float = 0.01,
    eps_rate: float = 0.05,
    halve_sync: bool = False,
) -> AllocationInstance:
    """Hop-proportional cost instance (rates per hop of each cost kind)."""
    clients = tuple(sorted(clients))
    candidates = tuple(sorted(candidates))
    zeta = zeta_rate * hops[np.ix_(clients, candidates)].astype(np.float64)
    cand_hops = hops[np.ix_(candidates, candidates)].astype(np.float64)
    delta = delta_rate * cand_hops
    eps = eps_rate * cand_hops
    return AllocationInstance(clients, candidates, zeta, delta, eps, omega, halve_sync)


# ---------------------------------------------------------------------------
# Cost operations on explicit plans
# ---------------------------------------------------------------------------


def _check_feasible(instance: AllocationInstance, x: DeploymentPlan, y: AssignmentPlan) -> None:
    deployed = set(x.deployed())
    if not deployed:
        raise InfeasibleError("no deployed candidate")
    for m in instance.clients:
        if m not in y.assigned:
            raise InfeasibleError(f"client {m} unassigned")
        if y.assigned[m] not in deployed:
            raise InfeasibleError(f"client {m} assigned to undeployed {y.assigned[m]}")


def management_cost(instance: AllocationInstance, y: AssignmentPlan) -> float:
    cost = 0.0
    pos = {n: i for i, n in enumerate(instance.candidates)}
    for mi, m in enumerate(instance.clients):
        if m not in y.assigned:
            raise InfeasibleError(f"client {m} unassigned")
        cost += instance._zeta_rows[mi][pos[y.assigned[m]]]
    return cost


def synchronization_cost(
    instance: AllocationInstance, x: DeploymentPlan, y: AssignmentPlan
) -> float:
    _check_feasible(instance, x, y)
    pos = {n: i for i, n in enumerate(instance.candidates)}
    deployed = [pos[n] for n in x.deployed()]
    loads = {j: 0 for j in deployed}
    for m in instance.clients:
        loads[pos[y.assigned[m]]] += 1
    cost = 0.0
    for j in deployed:
        dsum = 0.0
        for jj in deployed:
            dsum += instance._delta_rows[j][jj]
        cost += loads[j] * dsum
    for j in deployed:
        for jj in deployed:
            cost += instance._eps_rows[j][jj]
    return cost * 0.5 if instance.halve_sync else cost


def balanced_cost(instance: AllocationInstance, x: DeploymentPlan, y: AssignmentPlan) -> float:
    return management_cost(instance, y) + instance.omega * synchronization_cost(instance, x, y)


def optimal_assignment(instance: AllocationInstance, x: DeploymentPlan) -> AssignmentPlan:
    """Closed-form optimal assignment for a given deployment."""
    deployed = x.deployed()
    if not deployed:
        raise InfeasibleError("empty deployment")
    pos = {n: i for i, n in enumerate(instance.candidates)}
    _, _, _, assign = instance.eval_deployed([pos[n] for n in deployed])
    assigned = {m: instance.candidates[assign[i]] for i, m in enumerate(instance.clients)}
    return AssignmentPlan(assigned)


# ---------------------------------------------------------------------------
# Set-function view and its upper bound
# ---------------------------------------------------------------------------


def f_upper_bound(instance: AllocationInstance) -> float:
    """Certified upper bound on the balanced cost over nonempty deployments."""
    if not instance.clients:
        zeta_part = 0.0
    else:
        zeta_part = float(instance.zeta.max(axis=1).sum())
    m_count = len(instance.clients)
    pair_part = float((instance.delta * m_count + instance.eps).sum())
    if instance.halve_sync:
        pair_part *= 0.5
    return zeta_part + instance.omega * pair_part


def set_function_f(instance: AllocationInstance, subset: Iterable[int]) -> float:
    """Balanced cost of deploying ``subset`` (candidate ids) optimally.

    The empty set maps to the upper bound: it stands in for the infeasible
    no-hub deployment so the complementary function vanishes at the empty
    set.
    """
    ids = sorted(set(subset))
    if not ids:
        return f_upper_bound(instance)
    pos = {n: i for i, n in enumerate(instance.candidates)}
    _, _, c_b, _ = instance.eval_deployed([pos[n] for n in ids])
    return c_b


def sample_supermodularity(
    instance: AllocationInstance, trials: int, seed: int, tol: float = 1e-9
) -> tuple[int, int]:
    """Count violations of the increasing-marginals inequality.

    Samples (A subset-of B, i not in B) with nonempty A; the empty set is
    excluded because it is an infeasibility sentinel, not a real
    deployment.  Returns (violations, usable trials).
    """
    rng = random.Random(seed)
    cands = list(instance.candidates)
    if len(cands) < 3:
        raise ValueError("need at least 3 candidates to sample triples")
    violations = 0
    done = 0
    while done < trials:
        i = rng.choice(cands)
        rest = [c for c in cands if c != i]
        b_size = rng.randint(1, len(rest))
        b = sorted(rng.sample(rest, b_size))
        a_size = rng.randint(1, len(b))
        a = sorted(rng.sample(b, a_size))
        lhs = set_function_f(instance, a + [i]) - set_function_f(instance, a)
        rhs = set_function_f(instance, b + [i]) - set_function_f(instance, b)
        if lhs > rhs + tol:
            violations += 1
        done += 1
    return violations, done


# ---------------------------------------------------------------------------
# Linearization witness
# ---------------------------------------------------------------------------


@dataclass
class LinearizedWitness:
    """Product variables validating the linearized sync cost."""

    theta: dict[tuple[int, int], int]       # (n, l) -> x_n * x_l
    phi: dict[tuple[int, int, int], int]    # (n, l, m) -> theta_nl * y_mn


def build_witness(
    instance: AllocationInstance, x: DeploymentPlan, y: AssignmentPlan
) -> LinearizedWitness:
    theta = {}
    phi = {}
    for n in instance.candidates:
        for l in instance.candidates:
            t = x.x[n] * x.x[l]
            theta[(n, l)] = t
            for m in instance.clients:
                phi[(n, l, m)] = t * y.y(m, n)
    return LinearizedWitness(theta, phi)


def check_witness(
    instance: AllocationInstance,
    x: DeploymentPlan,
    y: AssignmentPlan,
    witness: LinearizedWitness,
) -> None:
    """Assert the linear constraints and that the linearized cost matches.

    Raises InvariantViolation on any failed constraint or cost mismatch.
    """
    for n in instance.candidates:
        for l in instance.candidates:
            t = witness.theta[(n, l)]
            if not (t <= x.x[n] and t <= x.x[l] and t >= x.x[n] + x.x[l] - 1):
                raise InvariantViolation(f"theta constraint violated at ({n},{l})")
            for m in instance.clients:
                p = witness.phi[(n, l, m)]
                if not (p <= t and p <= y.y(m, n) and p >= t + y.y(m, n) - 1):
                    raise InvariantViolation(f"phi constraint violated at ({n},{l},{m})")
    pos = {c: i for i, c in enumerate(instance.candidates)}
    linearized = 0.0
    for n in instance.candidates:
        for l in instance.candidates:
            d = instance._delta_rows[pos[n]][pos[l]]
            for m in instance.clients:
                linearized += d * witness.phi[(n, l, m)]
            linearized += instance._eps_rows[pos[n]][pos[l]] * witness.theta[(n, l)]
    if instance.halve_sync:
        linearized *= 0.5
    direct = synchronization_cost(instance, x, y)
    if not math.isclose(linearized, direct, rel_tol=1e-12, abs_tol=1e-12):
        raise InvariantViolation(
            f"linearized sync cost {linearized!r} != direct {direct!r}"
        )
