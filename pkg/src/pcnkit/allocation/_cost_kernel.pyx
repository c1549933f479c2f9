# cython: boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled assignment/cost kernel.

Hot loop of the exact branch-and-bound and the double-greedy solver.
Must stay arithmetically identical to ``_cost_py.assign_eval``:
left-to-right float64 sums, strict less-than tie-breaking.
"""

import numpy as np


def assign_eval(double[:, ::1] zeta, double[:, ::1] delta, double[:, ::1] eps,
                double omega, int[::1] deployed):
    """Optimal per-client assignment over deployed candidate positions.

    Returns (management cost, raw synchronization cost, assignment array).
    """
    cdef Py_ssize_t m_count = zeta.shape[0]
    cdef Py_ssize_t d = deployed.shape[0]
    cdef Py_ssize_t m, j, jj
    cdef double acc, v, best, c_m, c_s
    cdef int best_j

    dsum_arr = np.zeros(d, dtype=np.float64)
    loads_arr = np.zeros(d, dtype=np.int64)
    assign_arr = np.zeros(m_count, dtype=np.int32)
    cdef double[::1] dsum = dsum_arr
    cdef long[::1] loads = loads_arr
    cdef int[::1] assign = assign_arr

    for j in range(d):
        acc = 0.0
        for jj in range(d):
            acc += delta[deployed[j], deployed[jj]]
        dsum[j] = acc

    c_m = 0.0
    for m in range(m_count):
        best = zeta[m, deployed[0]] + omega * dsum[0]
        best_j = 0
        for j in range(1, d):
            v = zeta[m, deployed[j]] + omega * dsum[j]
            if v < best:
                best = v
                best_j = j
        assign[m] = deployed[best_j]
        c_m += zeta[m, deployed[best_j]]
        loads[best_j] += 1

    c_s = 0.0
    for j in range(d):
        c_s += loads[j] * dsum[j]
    for j in range(d):
        for jj in range(d):
            c_s += eps[deployed[j], deployed[jj]]
    return c_m, c_s, assign_arr
