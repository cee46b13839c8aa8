"""Independent reference computations used by several test modules."""
import numpy as np
from scipy.optimize import linprog

LP_OPTIONS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}


def _weight_constraints(u, v):
    m, k = len(u), len(v)
    eq = np.zeros((2, m + k))
    eq[0, :m] = 1.0
    eq[1, m:] = 1.0
    return eq, np.ones(2)


def hulls_intersect_lp(u, v) -> bool:
    """Feasibility of sum a_i u_i = sum b_j v_j with a, b convex weights."""
    u, v = np.asarray(u, float), np.asarray(v, float)
    n = u.shape[1]
    w_eq, w_rhs = _weight_constraints(u, v)
    eq = np.vstack([np.hstack([u.T, -v.T]), w_eq])
    rhs = np.r_[np.zeros(n), w_rhs]
    res = linprog(np.zeros(eq.shape[1]), A_eq=eq, b_eq=rhs, bounds=(0, None), method="highs", options=LP_OPTIONS)
    return res.status == 0


def hull_distance_inf(u, v) -> float:
    """Max-norm distance between two convex hulls, as a linear program.

    Minimizes t subject to |sum a_i u_i - sum b_j v_j| <= t componentwise.
    The Euclidean distance lies between this value and sqrt(n) times it.
    """
    u, v = np.asarray(u, float), np.asarray(v, float)
    n = u.shape[1]
    diff = np.hstack([u.T, -v.T])
    ub = np.vstack([np.hstack([diff, -np.ones((n, 1))]), np.hstack([-diff, -np.ones((n, 1))])])
    w_eq, w_rhs = _weight_constraints(u, v)
    eq = np.hstack([w_eq, np.zeros((2, 1))])
    c = np.zeros(eq.shape[1])
    c[-1] = 1.0
    res = linprog(c, A_ub=ub, b_ub=np.zeros(2 * n), A_eq=eq, b_eq=w_rhs, bounds=(0, None), method="highs",
                  options=LP_OPTIONS)
    if res.status != 0:
        raise RuntimeError(res.message)
    return float(res.fun)
