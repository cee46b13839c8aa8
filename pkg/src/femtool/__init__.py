"""Finite elements on simplicial meshes with geometric sparsity patterns.

Basis functions are Lagrange P1/P2 functions on a conforming simplicial
mesh; integrals use Grundmann-Moeller quadrature, and the nonzero pattern
of an operator is derived from intersection tests between the convex hulls
of basis supports.
"""
from .assembly import (
    L2Load,
    PointLoad,
    PointwiseForm,
    assemble_bilinear,
    assemble_jacobian,
    assemble_linear,
    assemble_nonlinear_residual,
    assemble_stokes,
    common_support,
    gradient_form,
    mass_form,
    space_pattern,
)
from .femspace import (
    BasisFunction,
    FiniteElementSpace,
    VectorSpace,
    build_p1_space,
    build_p2_space,
    interpolate_boundary,
    support_hull,
)
from .geometry import ConvexPolytope, SparsityPattern, closest_pair, convex_intersection, sparsity_pattern
from .mesh import (
    MeshFormatError,
    MeshValidationError,
    SimplicialMesh,
    load_mesh,
    locate_simplex,
    save_mesh,
    uniform_interval_mesh,
    uniform_rectangle_mesh,
)
from .quadrature import error_factor, grundmann_moeller, integrate_on_simplex, rule_cost, rule_for_degree
from .solve import (
    ConvergenceError,
    SingularMatrixError,
    convergence_study,
    error_norm,
    solve_linear,
    solve_newton,
    solve_saddle,
)

__version__ = "0.1.0"
