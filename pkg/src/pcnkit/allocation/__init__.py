"""Hub allocation: balanced-cost model, exact and approximate solvers."""

from pcnkit.allocation.instance import (
    AllocationInstance,
    AssignmentPlan,
    DeploymentPlan,
    LinearizedWitness,
    balanced_cost,
    build_witness,
    check_witness,
    f_upper_bound,
    instance_from_hops,
    management_cost,
    optimal_assignment,
    sample_supermodularity,
    set_function_f,
    synchronization_cost,
)
from pcnkit.allocation.kernel import BACKEND as KERNEL_BACKEND
from pcnkit.allocation.solvers import (
    SolveResult,
    SweepRow,
    double_greedy,
    omega_sweep,
    solve_exact,
)

__all__ = [
    "AllocationInstance",
    "AssignmentPlan",
    "DeploymentPlan",
    "KERNEL_BACKEND",
    "LinearizedWitness",
    "SolveResult",
    "SweepRow",
    "balanced_cost",
    "build_witness",
    "check_witness",
    "double_greedy",
    "f_upper_bound",
    "instance_from_hops",
    "management_cost",
    "omega_sweep",
    "optimal_assignment",
    "sample_supermodularity",
    "set_function_f",
    "solve_exact",
    "synchronization_cost",
]
