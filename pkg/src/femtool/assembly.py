"""Assembly of bilinear and linear forms over Lagrange spaces.

A form ``a(u, v) = integral of F(u, grad u, v, grad v, x)`` is only
integrated where both supports overlap. Two routes compute the same
entries:

* :func:`assemble_bilinear` evaluates every simplex once, vectorized, and
  scatters local contributions onto the pairs of a sparsity pattern;
* :func:`bilinear_entry` / :func:`assemble_bilinear_pairwise` integrate one
  basis pair at a time over the simplices of their common support.

Matrices are ``scipy.sparse.csr_matrix`` with rows indexed by the test
space and columns by the trial space, so ``A @ u`` is the discrete
operator applied to trial coefficients.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .femspace import BasisFunction, FiniteElementSpace, VectorSpace, support_hull
from .geometry import SparsityPattern, sparsity_pattern
from .mesh import locate_simplex, reference_map
from .quadrature import integrate_on_simplex, rule_for_degree

__all__ = [
    "L2Load",
    "PointLoad",
    "PointwiseForm",
    "StokesSystem",
    "assemble_bilinear",
    "assemble_bilinear_pairwise",
    "assemble_jacobian",
    "assemble_linear",
    "assemble_nonlinear_residual",
    "assemble_stokes",
    "bilinear_entry",
    "common_support",
    "gradient_form",
    "mass_form",
    "space_pattern",
]

# smallest Grundmann-Moeller degree used for bilinear forms
MIN_DEGREE = 3


@dataclass(frozen=True)
class PointwiseForm:
    """Integrand ``integrand(u, du, v, dv, x)`` of a bilinear form.

    ``u``/``v`` are trial/test values, ``du``/``dv`` their gradients with
    the spatial index last, ``x`` the physical points. The integrand must
    broadcast over leading axes. ``degree`` is the polynomial degree of
    the integrand on one simplex; when ``None`` it is bounded by the sum of
    the space degrees plus ``x_degree``.
    """

    integrand: Callable
    degree: int | None = None
    x_degree: int = 0

    def __call__(self, u, du, v, dv, x):
        return self.integrand(u, du, v, dv, x)

    def quadrature_degree(self, trial, test) -> int:
        d = self.degree if self.degree is not None else trial.degree + test.degree + self.x_degree
        return max(d, MIN_DEGREE)


def gradient_form(coefficient: float = 1.0) -> PointwiseForm:
    """``coefficient * grad u . grad v``."""
    return PointwiseForm(lambda u, du, v, dv, x: coefficient * (du * dv).sum(-1))


def mass_form() -> PointwiseForm:
    """``u * v``."""
    return PointwiseForm(lambda u, du, v, dv, x: u * v)


@dataclass(frozen=True)
class L2Load:
    """``L(v) = integral of f v``; ``f`` maps (k, n) points to k values."""

    f: Callable
    degree: int = 3


@dataclass(frozen=True)
class PointLoad:
    """``L(v) = magnitude * v(location)``."""

    magnitude: float
    location: tuple


def common_support(u: BasisFunction, v: BasisFunction) -> list:
    """Simplices in the supports of both ``u`` and ``v``."""
    if u.space.mesh is not v.space.mesh:
        raise ValueError("basis functions live on different meshes")
    return sorted(set(u.support) & set(v.support))


def space_pattern(trial: FiniteElementSpace, test: FiniteElementSpace, **kw) -> SparsityPattern:
    """Sparsity pattern from the convex hulls of the basis supports."""
    hull_u = [support_hull(f) for f in trial.basis]
    hull_v = hull_u if test is trial else [support_hull(f) for f in test.basis]
    return sparsity_pattern(hull_u, hull_v, **kw)


def _check_same_mesh(a, b):
    if a.mesh is not b.mesh:
        raise ValueError("trial and test spaces are defined on different meshes")


def _scatter(local, trial, test, pattern=None):
    """Sum local element matrices (E, a, b) into a csr (n_test, n_trial)."""
    cols = trial.node_to_basis[trial.element_nodes]
    rows = test.node_to_basis[test.element_nodes]
    ii = np.broadcast_to(cols[:, :, None], local.shape).ravel()
    jj = np.broadcast_to(rows[:, None, :], local.shape).ravel()
    vals = local.ravel()
    keep = (ii >= 0) & (jj >= 0)
    ii, jj, vals = ii[keep], jj[keep], vals[keep]
    shape = (test.dim, trial.dim)
    if pattern is not None:
        if (pattern.rows, pattern.cols) != (trial.dim, test.dim):
            raise ValueError("pattern size does not match the spaces")
        pairs = pattern.as_array()
        keys = pairs[:, 0] * test.dim + pairs[:, 1]
        inp = np.isin(ii * test.dim + jj, keys)
        ii, jj, vals = ii[inp], jj[inp], vals[inp]
        # allocate every pattern entry, even if it stays zero
        ii = np.concatenate([pairs[:, 0], ii])
        jj = np.concatenate([pairs[:, 1], jj])
        vals = np.concatenate([np.zeros(len(pairs)), vals])
    a = sp.coo_matrix((vals, (jj, ii)), shape=shape).tocsr()
    a.sum_duplicates()
    a.sort_indices()
    return a


def assemble_bilinear(form: PointwiseForm, trial, test, pattern: SparsityPattern | None = None, degree=None):
    """Matrix ``A[j, i] = a(trial_i, test_j)``.

    Only pairs in ``pattern`` are stored (all of them, zeros included);
    with ``pattern=None`` every pair sharing a simplex is kept.
    """
    _check_same_mesh(trial, test)
    rule = rule_for_degree(trial.mesh.dim, degree or form.quadrature_degree(trial, test))
    x, jxw, vu, gu = trial.tables(rule)
    _, _, vv, gv = test.tables(rule)
    res = form(
        vu[None, :, None, :],
        gu[:, :, None],
        vv[None, None, :, :],
        gv[:, None, :],
        x[:, None, None],
    )
    e, a, b = trial.mesh.n_simplices, vu.shape[0], vv.shape[0]
    res = np.broadcast_to(res, (e, a, b, len(rule)))
    local = np.einsum("eabq,eq->eab", res, jxw)
    return _scatter(local, trial, test, pattern)


def bilinear_entry(form: PointwiseForm, u: BasisFunction, v: BasisFunction, rule=None, simplices=None) -> float:
    """``a(u, v)`` integrated simplex by simplex.

    ``simplices`` defaults to :func:`common_support`.
    """
    if rule is None:
        rule = rule_for_degree(u.space.mesh.dim, form.quadrature_degree(u.space, v.space))
    if simplices is None:
        simplices = common_support(u, v)
    mesh = u.space.mesh
    total = 0.0
    for s in simplices:

        def integrand(x, s=s):
            uu, du = u.evaluate_on(s, x)
            vv, dv = v.evaluate_on(s, x)
            return np.broadcast_to(form(uu, du, vv, dv, x), (len(x),))

        total += integrate_on_simplex(rule, reference_map(mesh, s), integrand)
    return total


def assemble_bilinear_pairwise(form, trial, test, pattern: SparsityPattern, degree=None):
    """Reference assembly looping over pattern pairs and their common support."""
    _check_same_mesh(trial, test)
    rule = rule_for_degree(trial.mesh.dim, degree or form.quadrature_degree(trial, test))
    pairs = pattern.as_array()
    vals = np.array([bilinear_entry(form, trial[i], test[j], rule) for i, j in pairs])
    if len(pairs) == 0:
        return sp.csr_matrix((test.dim, trial.dim))
    a = sp.coo_matrix((vals, (pairs[:, 1], pairs[:, 0])), shape=(test.dim, trial.dim)).tocsr()
    a.sort_indices()
    return a


def assemble_linear(load, test: FiniteElementSpace, degree=None) -> np.ndarray:
    """Load vector ``b_j = L(test_j)``."""
    mesh = test.mesh
    if isinstance(load, PointLoad):
        p = np.asarray(load.location, dtype=float)
        s = locate_simplex(mesh, p)
        if s is None:
            raise ValueError(f"point load at {tuple(p)} lies outside the mesh")
        lam = mesh.barycentric(p, [s])[0]
        shape_vals = test.element.values(lam)[0]
        b = np.zeros(test.dim)
        idx = test.node_to_basis[test.element_nodes[s]]
        ok = idx >= 0
        b[idx[ok]] += load.magnitude * shape_vals[ok]
        return b
    if isinstance(load, L2Load):
        rule = rule_for_degree(mesh.dim, degree or load.degree + test.degree)
        x, jxw, vals, _ = test.tables(rule)
        fx = np.asarray(load.f(x.reshape(-1, mesh.dim)), dtype=float).reshape(jxw.shape)
        local = np.einsum("eq,bq,eq->eb", fx, vals, jxw)
        return _scatter_vector(local, test)
    raise TypeError(f"unsupported load {type(load).__name__}")


def _scatter_vector(local, space):
    idx = space.node_to_basis[space.element_nodes].ravel()
    vals = local.ravel()
    keep = idx >= 0
    return np.bincount(idx[keep], weights=vals[keep], minlength=space.dim)


def _semilinear_degree(space):
    return 4 * space.degree


def assemble_nonlinear_residual(u, space: FiniteElementSpace, f, degree=None) -> np.ndarray:
    """Residual of ``-div grad u + u^3 = f`` in weak form.

    ``F_i(u) = integral of grad u_h . grad phi_i + u_h^3 phi_i - f phi_i``.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (space.dim,):
        raise ValueError(f"expected {space.dim} coefficients, got shape {u.shape}")
    rule = rule_for_degree(space.mesh.dim, degree or _semilinear_degree(space))
    x, jxw, vals, grads = space.tables(rule)
    uh, duh = space.field_at_nodes(space.full_coefficients(u), rule)
    fx = np.asarray(f(x.reshape(-1, space.mesh.dim)), dtype=float).reshape(jxw.shape)
    local = np.einsum("eqd,ebqd,eq->eb", duh, grads, jxw)
    local += np.einsum("eq,bq,eq->eb", uh**3 - fx, vals, jxw)
    return _scatter_vector(local, space)


def assemble_jacobian(u, space: FiniteElementSpace, pattern=None, degree=None):
    """Derivative of :func:`assemble_nonlinear_residual` with respect to ``u``.

    ``J[i, j] = integral of grad phi_j . grad phi_i + 3 u_h^2 phi_j phi_i``.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (space.dim,):
        raise ValueError(f"expected {space.dim} coefficients, got shape {u.shape}")
    rule = rule_for_degree(space.mesh.dim, degree or _semilinear_degree(space))
    x, jxw, vals, grads = space.tables(rule)
    uh, _ = space.field_at_nodes(space.full_coefficients(u), rule)
    local = np.einsum("eaqd,ebqd,eq->eab", grads, grads, jxw)
    local += np.einsum("eq,aq,bq,eq->eab", 3 * uh**2, vals, vals, jxw)
    return _scatter(local, space, space, pattern)


@dataclass
class StokesSystem:
    """Blocks of ``[[A, B^T], [B, 0]] [u; p] = [f; g]`` after lifting.

    ``A`` and ``B`` act on the free velocity dofs (component-major);
    ``b_full`` is the divergence block on all velocity nodes, used to check
    the discrete constraint on ``lift + correction``.
    """

    a: sp.csr_matrix
    b: sp.csr_matrix
    f: np.ndarray
    g: np.ndarray
    b_full: sp.csr_matrix
    free: np.ndarray
    lift: np.ndarray


def assemble_stokes(velocity: VectorSpace, pressure: FiniteElementSpace, lift=None, degree=None) -> StokesSystem:
    """Taylor-Hood blocks for ``-lap u + grad p = 0, div u = 0``.

    ``velocity`` wraps a scalar P2 space whose constrained nodes are the
    Dirichlet velocity nodes; ``lift`` holds node values (component-major,
    length ``components * n_nodes``) carrying the boundary data. The block
    ``B`` is ``-integral of q div v`` so that the system is symmetric.
    """
    scalar = velocity.scalar
    _check_same_mesh(scalar, pressure)
    ncomp, nn = velocity.components, scalar.n_nodes
    full = FiniteElementSpace(scalar.mesh, scalar.degree, None)
    lift = np.zeros(ncomp * nn) if lift is None else np.asarray(lift, dtype=float)
    if lift.shape != (ncomp * nn,):
        raise ValueError(f"lift must have length {ncomp * nn}")

    k_full = assemble_bilinear(gradient_form(), full, full, degree=degree)
    div = [
        assemble_bilinear(PointwiseForm(lambda u, du, v, dv, x, c=c: -v * du[..., c]), full, pressure, degree=degree)
        for c in range(ncomp)
    ]
    b_full = sp.hstack(div).tocsr()

    free_nodes = scalar.basis_nodes
    free = np.concatenate([c * nn + free_nodes for c in range(ncomp)])
    a_full = sp.block_diag([k_full] * ncomp, format="csr")
    a = a_full[free][:, free].tocsr()
    b = b_full[:, free].tocsr()
    f = -(a_full[free] @ lift)
    g = -(b_full @ lift)
    return StokesSystem(a, b, f, g, b_full, free, lift)

