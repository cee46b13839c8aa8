"""The four model problems, each runnable at a given mesh size.

Every ``run_*`` function returns a dict with the realized mesh size
``h``, the number of unknowns ``ndof``, an ``errors`` mapping (empty when
no exact solution is known), the Newton ``iterations`` (1 for linear
problems) and the pieces needed for further inspection under
``"solution"``.
"""
from __future__ import annotations

import time

import numpy as np

from .assembly import (
    L2Load,
    PointLoad,
    PointwiseForm,
    assemble_bilinear,
    assemble_jacobian,
    assemble_linear,
    assemble_nonlinear_residual,
    assemble_stokes,
    gradient_form,
    space_pattern,
)
from .femspace import FiniteElementSpace, VectorSpace, build_p1_space, build_p2_space, interpolate_boundary
from .mesh import select_facets, uniform_interval_mesh, uniform_rectangle_mesh
from .solve import error_norm, solve_linear, solve_newton, solve_saddle

__all__ = ["PROBLEMS", "run_convdiff", "run_nonlinear", "run_poisson", "run_stokes"]

PI = np.pi


def poisson_exact(x):
    x, y = x[:, 0], x[:, 1]
    return -(x**3 - x) * (y**3 - y)


def poisson_source(x):
    x, y = x[:, 0], x[:, 1]
    return 6 * (x**2 + y**2 - 2) * x * y


def run_poisson(h, geometric_pattern: bool = True, quad_degree=None):
    """-lap u = f on (-1, 1)^2, u = 0 on the boundary, P1 elements."""
    t0 = time.perf_counter()
    mesh = uniform_rectangle_mesh((-1, 1), (-1, 1), h)
    space = build_p1_space(mesh)
    pattern = space_pattern(space, space) if geometric_pattern else None
    a = assemble_bilinear(gradient_form(), space, space, pattern, degree=quad_degree)
    b = assemble_linear(L2Load(poisson_source, degree=4), space, degree=quad_degree)
    rep = solve_linear(a, b)
    full = space.full_coefficients(rep.solution)
    errors = {"L2": error_norm(full, space, poisson_exact, "L2")}
    return {
        "h": mesh.max_edge_length,
        "ndof": space.dim,
        "errors": errors,
        "iterations": 1,
        "wall_time": time.perf_counter() - t0,
        "solution": {"space": space, "coefficients": full},
    }


def convdiff_form(eps: float = 1.0) -> PointwiseForm:
    """``eps grad u . grad v - u_y v``."""
    return PointwiseForm(lambda u, du, v, dv, x: eps * (du * dv).sum(-1) - du[..., 1] * v)


def run_convdiff(
    h, source=(0.5, 1.0), magnitude: float = 1.0, eps: float = 1.0, geometric_pattern=True, quad_degree=None
):
    """-eps lap u - u_y = M delta_p on (0, 1) x (0, 2).

    u = 0 on x = 0, x = 1 and y = 2; u_y = 0 on y = 0 (the active boundary).
    The mesh is mirror-symmetric about x = 1/2.
    """
    t0 = time.perf_counter()
    mesh = uniform_rectangle_mesh((0, 1), (0, 2), h, diagonal="mirror")
    mesh = mesh.with_active(select_facets(mesh, lambda p: np.isclose(p[:, 1], 0.0)))
    space = build_p1_space(mesh)
    pattern = space_pattern(space, space) if geometric_pattern else None
    a = assemble_bilinear(convdiff_form(eps), space, space, pattern, degree=quad_degree)
    b = assemble_linear(PointLoad(magnitude, source), space)
    rep = solve_linear(a, b)
    full = space.full_coefficients(rep.solution)
    return {
        "h": mesh.max_edge_length,
        "ndof": space.dim,
        "errors": {},
        "iterations": 1,
        "wall_time": time.perf_counter() - t0,
        "solution": {"space": space, "coefficients": full},
    }


def nonlinear_exact(x):
    return np.sin(PI * x[:, 0])


def nonlinear_source(x):
    s = np.sin(PI * x[:, 0])
    return PI**2 * s + s**3


def run_nonlinear(h, geometric_pattern=True, tol=1e-10, quad_degree=None):
    """-u'' + u^3 = f on (0, 1), u(0) = u(1) = 0, Newton from zero."""
    t0 = time.perf_counter()
    mesh = uniform_interval_mesh((0, 1), h)
    space = build_p1_space(mesh)
    pattern = space_pattern(space, space) if geometric_pattern else None
    rep = solve_newton(
        lambda u: assemble_nonlinear_residual(u, space, nonlinear_source, degree=quad_degree),
        lambda u: assemble_jacobian(u, space, pattern, degree=quad_degree),
        np.zeros(space.dim),
        tol=tol,
    )
    full = space.full_coefficients(rep.solution)
    errors = {
        "Linf": error_norm(full, space, nonlinear_exact, "Linf"),
        "L2": error_norm(full, space, nonlinear_exact, "L2"),
    }
    return {
        "h": mesh.max_edge_length,
        "ndof": space.dim,
        "errors": errors,
        "iterations": rep.iterations,
        "residual": rep.residual_norm,
        "wall_time": time.perf_counter() - t0,
        "solution": {"space": space, "coefficients": full, "history": rep.history},
    }


def stokes_velocity(x):
    x, y = x[:, 0], x[:, 1]
    return np.column_stack([20 * x * y**3, 5 * x**4 - 5 * y**4])


def stokes_pressure(x):
    """Pressure matching ``stokes_velocity``; the y-momentum balance fixes the sign of the cubic term."""
    x, y = x[:, 0], x[:, 1]
    return 60 * x**2 * y - 20 * y**3


def run_stokes(h, quad_degree=None):
    """Colliding flow on (-1, 1)^2 with Taylor-Hood P2/P1 elements."""
    t0 = time.perf_counter()
    mesh = uniform_rectangle_mesh((-1, 1), (-1, 1), h)
    vel_scalar = build_p2_space(mesh)
    velocity = VectorSpace(vel_scalar, 2)
    pressure = FiniteElementSpace(mesh, 1, None)
    full_p2 = FiniteElementSpace(mesh, 2, None)
    lift = interpolate_boundary(full_p2, stokes_velocity)
    system = assemble_stokes(velocity, pressure, lift, degree=quad_degree)
    u, p, rep = solve_saddle(system.a, system.b, system.f, system.g, pressure)
    u_full = system.lift.copy()
    u_full[system.free] += u
    nn = full_p2.n_nodes
    errors = {
        "pressure_L2": error_norm(p, pressure, stokes_pressure, "L2", mean_free=True),
        "velocity_L2": float(
            np.hypot(
                *(
                    error_norm(u_full[c * nn : (c + 1) * nn], full_p2, lambda x, c=c: stokes_velocity(x)[:, c], "L2")
                    for c in range(2)
                )
            )
        ),
    }
    return {
        "h": mesh.max_edge_length,
        "ndof": velocity.dim + pressure.dim,
        "errors": errors,
        "iterations": 1,
        "divergence": float(np.abs(system.b_full @ u_full).max()),
        "wall_time": time.perf_counter() - t0,
        "solution": {"velocity": u_full, "pressure": p, "system": system, "space": full_p2, "pressure_space": pressure},
    }


PROBLEMS = {
    "poisson": run_poisson,
    "convdiff": run_convdiff,
    "nonlinear": run_nonlinear,
    "stokes": run_stokes,
}
