"""Linear, Newton and saddle-point solvers; error norms and convergence tables."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .femspace import FiniteElementSpace
from .quadrature import rule_for_degree

__all__ = [
    "ConvergenceError",
    "ConvergenceTable",
    "SingularMatrixError",
    "SolveReport",
    "convergence_rates",
    "convergence_study",
    "error_norm",
    "integral_mean",
    "solve_linear",
    "solve_newton",
    "solve_saddle",
]

RESIDUAL_RTOL = 1e-10


class SingularMatrixError(np.linalg.LinAlgError):
    pass


class ConvergenceError(RuntimeError):
    pass


@dataclass
class SolveReport:
    solution: np.ndarray
    iterations: int
    residual_norm: float
    wall_time: float
    history: list = field(default_factory=list)


def _factorize(a):
    try:
        return spla.splu(sp.csc_matrix(a))
    except RuntimeError as exc:  # "Factor is exactly singular"
        raise SingularMatrixError(str(exc)) from exc


def solve_linear(a, b, method: str = "direct", rtol: float = 1e-12, maxiter: int | None = None) -> SolveReport:
    """Solve ``A x = b`` and check ``|Ax - b| <= 1e-10 (1 + |b|)``.

    ``method`` is ``"direct"`` (sparse LU) or ``"cg"`` (Jacobi-preconditioned
    conjugate gradients, for symmetric positive definite ``A``).
    """
    t0 = time.perf_counter()
    a = sp.csr_matrix(a)
    b = np.asarray(b, dtype=float)
    if a.shape[0] != a.shape[1] or a.shape[0] != len(b):
        raise ValueError(f"shape mismatch: A {a.shape}, b {b.shape}")
    iters = 1
    if method == "direct":
        x = _factorize(a).solve(b)
    elif method == "cg":
        diag = a.diagonal()
        if np.any(diag <= 0):
            raise ValueError("cg needs a positive diagonal")
        m = spla.LinearOperator(a.shape, matvec=lambda r: r / diag)
        count = [0]

        def cb(_):
            count[0] += 1

        x, info = spla.cg(a, b, rtol=rtol, atol=0.0, M=m, maxiter=maxiter or 10 * len(b), callback=cb)
        if info != 0:
            raise ConvergenceError(f"cg stopped with info={info}")
        iters = count[0]
    else:
        raise ValueError(f"unknown method {method!r}")
    res = float(np.linalg.norm(a @ x - b))
    if not np.isfinite(res) or res > RESIDUAL_RTOL * (1 + np.linalg.norm(b)):
        raise SingularMatrixError(f"residual {res:.3e} above tolerance; matrix singular or ill-conditioned")
    return SolveReport(x, iters, res, time.perf_counter() - t0)


def _linear_solve_any(j, r):
    if sp.issparse(j):
        return _factorize(j).solve(r)
    j = np.atleast_2d(np.asarray(j, dtype=float))
    try:
        return np.linalg.solve(j, r)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(str(exc)) from exc


def solve_newton(residual, jacobian, x0, tol: float = 1e-10, max_iter: int = 50) -> SolveReport:
    """Plain Newton iteration ``x <- x - J(x)^{-1} F(x)`` until ``|F|_2 <= tol``.

    Raises :class:`ConvergenceError` after ``max_iter`` steps or when the
    residual grows for 5 consecutive steps.
    """
    t0 = time.perf_counter()
    x = np.array(x0, dtype=float).reshape(-1)
    r = np.asarray(residual(x), dtype=float).reshape(-1)
    hist = [float(np.linalg.norm(r))]
    growth = 0
    for k in range(max_iter + 1):
        if hist[-1] <= tol:
            return SolveReport(x, k, hist[-1], time.perf_counter() - t0, hist)
        if k == max_iter:
            break
        dx = _linear_solve_any(jacobian(x), r)
        if not np.all(np.isfinite(dx)):
            raise SingularMatrixError("Newton step is not finite")
        x = x - dx
        r = np.asarray(residual(x), dtype=float).reshape(-1)
        hist.append(float(np.linalg.norm(r)))
        growth = growth + 1 if hist[-1] > hist[-2] else 0
        if growth >= 5:
            raise ConvergenceError(f"Newton diverging: residual grew 5 steps in a row (now {hist[-1]:.3e})")
    raise ConvergenceError(f"Newton did not converge in {max_iter} iterations (residual {hist[-1]:.3e})")


def integral_mean(full, space: FiniteElementSpace, degree: int = 5) -> float:
    """Mean over the domain of a node-coefficient field."""
    rule = rule_for_degree(space.mesh.dim, degree)
    _, jxw, _, _ = space.tables(rule)
    u, _ = space.field_at_nodes(np.asarray(full, dtype=float), rule)
    return float((u * jxw).sum() / jxw.sum())


def solve_saddle(a, b, f, g, pressure_space: FiniteElementSpace | None = None):
    """Solve ``[[A, B^T], [B, 0]] [u; p] = [f; g]``.

    The constant pressure mode is removed by fixing pressure dof 0 to zero
    and afterwards shifting ``p`` to zero mean (integral mean when
    ``pressure_space`` is given, arithmetic mean otherwise).

    Returns ``(u, p, report)``.
    """
    t0 = time.perf_counter()
    a, b = sp.csr_matrix(a), sp.csr_matrix(b)
    nu, npr = a.shape[0], b.shape[0]
    if a.shape != (nu, nu) or b.shape[1] != nu or len(f) != nu or len(g) != npr:
        raise ValueError("inconsistent saddle-point block sizes")
    k = sp.bmat([[a, b.T], [b, None]], format="csr")
    rhs = np.concatenate([f, g])
    keep = np.r_[np.arange(nu), nu + np.arange(1, npr)]
    kr = k[keep][:, keep]
    try:
        lu = spla.splu(sp.csc_matrix(kr))
    except RuntimeError as exc:
        raise SingularMatrixError(f"saddle system rank deficient beyond the constant pressure: {exc}") from exc
    sol = lu.solve(rhs[keep])
    res = float(np.linalg.norm(kr @ sol - rhs[keep]))
    if not np.isfinite(res) or res > RESIDUAL_RTOL * (1 + np.linalg.norm(rhs)):
        raise SingularMatrixError(f"saddle residual {res:.3e} above tolerance")
    u = sol[:nu]
    p = np.concatenate([[0.0], sol[nu:]])
    if pressure_space is not None:
        p = p - integral_mean(pressure_space.full_coefficients(p), pressure_space)
    else:
        p = p - p.mean()
    return u, p, SolveReport(sol, 1, res, time.perf_counter() - t0)


def error_norm(full, space: FiniteElementSpace, exact, norm: str = "L2", degree: int | None = None, mean_free=False):
    """``L2`` or ``Linf`` error of a node-coefficient field against ``exact``.

    ``full`` holds values on every node (use
    :meth:`FiniteElementSpace.full_coefficients`). L2 uses
    Grundmann-Moeller quadrature of degree ``max(5, 2 * degree + 3)`` on
    each simplex. Linf is the maximum over the degree-7 quadrature nodes and
    the Lagrange nodes, an approximation of the true supremum. With
    ``mean_free`` both fields are shifted to zero integral mean first.
    """
    n = space.mesh.dim
    full = np.asarray(full, dtype=float)
    if degree is None:
        degree = 7 if norm.upper() == "LINF" else max(5, 2 * space.degree + 3)
    rule = rule_for_degree(n, degree)
    x, jxw, _, _ = space.tables(rule)
    uh, _ = space.field_at_nodes(full, rule)
    ue = np.asarray(exact(x.reshape(-1, n)), dtype=float).reshape(uh.shape)
    if mean_free:
        vol = jxw.sum()
        uh = uh - (uh * jxw).sum() / vol
        ue = ue - (ue * jxw).sum() / vol
    err = uh - ue
    if norm.upper() == "L2":
        # signed weights can push a vanishing error slightly below zero
        return float(np.sqrt(max((err**2 * jxw).sum(), 0.0)))
    if norm.upper() == "LINF":
        at_nodes = full - np.asarray(exact(space.node_coords), dtype=float)
        if mean_free:
            raise ValueError("mean_free is only meaningful for L2")
        return float(max(np.abs(err).max(), np.abs(at_nodes).max()))
    raise ValueError(f"unknown norm {norm!r}")


def convergence_rates(hs, errors):
    """``log(e_{k-1}/e_k) / log(h_{k-1}/h_k)``; first entry is NaN."""
    hs, errors = np.asarray(hs, float), np.asarray(errors, float)
    rates = np.full(len(hs), np.nan)
    rates[1:] = np.log(errors[:-1] / errors[1:]) / np.log(hs[:-1] / hs[1:])
    return rates


@dataclass
class ConvergenceTable:
    """Per-level results of a refinement study.

    ``rows`` are dicts with at least ``h`` (realized mesh size) and the
    error columns; ``rate_<name>`` columns are filled in for each error.
    """

    rows: list
    error_names: tuple

    def column(self, name):
        return np.array([r[name] for r in self.rows], dtype=float)

    def rates(self, name):
        return self.column(f"rate_{name}")


def convergence_study(run, h_sequence, error_names=None) -> ConvergenceTable:
    """Run ``run(h) -> dict`` for each target ``h`` and attach rates.

    Each result dict must contain the realized ``h`` and an ``errors``
    mapping. Levels must get strictly finer.
    """
    rows = []
    for h in h_sequence:
        res = dict(run(h))
        errs = res.pop("errors")
        res.update(errs)
        rows.append(res)
        if error_names is None:
            error_names = tuple(errs)
    hs = np.array([r["h"] for r in rows])
    if np.any(np.diff(hs) >= 0):
        raise ValueError("mesh sizes must be strictly decreasing")
    for name in error_names:
        rates = convergence_rates(hs, [r[name] for r in rows])
        for r, q in zip(rows, rates):
            r[f"rate_{name}"] = None if math.isnan(q) else float(q)
    return ConvergenceTable(rows, tuple(error_names))
