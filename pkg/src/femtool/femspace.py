"""Lagrange finite element spaces built from support + evaluator basis objects.

A basis function knows the simplices of its support and how to evaluate
its value and first derivatives at points. Spaces also expose the
element-wise tables (local shape values and gradients at quadrature
nodes) that vectorized assembly needs.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .geometry import ConvexPolytope
from .mesh import LOCATE_TOL, SimplicialMesh, locate_simplex

__all__ = [
    "BasisFunction",
    "FiniteElementSpace",
    "VectorSpace",
    "build_p1_space",
    "build_p2_space",
    "interpolate_boundary",
    "support_hull",
]


class _P1:
    degree = 1

    def __init__(self, n):
        self.n = n
        self.nloc = n + 1

    def values(self, lam):
        return lam

    def dlam(self, lam):
        """d(shape)/d(lambda), shape (..., nloc, n + 1)."""
        return np.broadcast_to(np.eye(self.n + 1), lam.shape[:-1] + (self.nloc, self.n + 1))


# local P2 numbering: vertices 0..2, then edges (0,1), (1,2), (0,2)
P2_EDGES = ((0, 1), (1, 2), (0, 2))


class _P2Tri:
    degree = 2
    nloc = 6
    n = 2

    def values(self, lam):
        out = [lam[..., k] * (2 * lam[..., k] - 1) for k in range(3)]
        out += [4 * lam[..., a] * lam[..., b] for a, b in P2_EDGES]
        return np.stack(out, axis=-1)

    def dlam(self, lam):
        d = np.zeros(lam.shape[:-1] + (6, 3))
        for k in range(3):
            d[..., k, k] = 4 * lam[..., k] - 1
        for e, (a, b) in enumerate(P2_EDGES):
            d[..., 3 + e, a] = 4 * lam[..., b]
            d[..., 3 + e, b] = 4 * lam[..., a]
        return d


@dataclass(frozen=True, eq=False)
class BasisFunction:
    """One global basis function of a :class:`FiniteElementSpace`."""

    space: "FiniteElementSpace"
    index: int

    @property
    def node(self) -> int:
        return int(self.space.basis_nodes[self.index])

    @property
    def support(self) -> tuple:
        """Indices of the simplices on which the function is nonzero."""
        return self.space.node_support(self.node)

    @property
    def dof_location(self) -> np.ndarray:
        return self.space.node_coords[self.node]

    @property
    def kind(self) -> str:
        return self.space.node_kinds[self.node]

    def local_index(self, simplex: int):
        row = self.space.element_nodes[simplex]
        hit = np.flatnonzero(row == self.node)
        return int(hit[0]) if hit.size else None

    def evaluate_on(self, simplex: int, points):
        """Value and gradient of the restriction to ``simplex`` at ``points``.

        The polynomial piece is extended beyond the simplex; zero if the
        simplex is outside the support.
        """
        points = np.atleast_2d(points)
        a = self.local_index(simplex)
        n = self.space.mesh.dim
        if a is None:
            return np.zeros(len(points)), np.zeros((len(points), n))
        lam = self.space.mesh.barycentric(points, [simplex])[:, 0]
        el = self.space.element
        val = el.values(lam)[:, a]
        grad = el.dlam(lam)[:, a] @ self.space.grad_lambda[simplex]
        return val, grad

    def evaluate(self, points, requests=None):
        """Values and first derivatives at ``points``.

        Parameters
        ----------
        points : array, shape (k, n)
        requests : sequence of derivative multi-indices
            Each a length-n tuple of nonnegative ints with total order at
            most 1. The default asks for the value only.

        Returns
        -------
        array, shape (k, len(requests))

        On faces shared by several simplices the piece from the
        lowest-numbered containing simplex is used.
        """
        mesh = self.space.mesh
        n = mesh.dim
        points = np.asarray(points, dtype=float).reshape(-1, n)
        if requests is None:
            requests = [(0,) * n]
        requests = [tuple(int(c) for c in r) for r in requests]
        for r in requests:
            if len(r) != n or min(r) < 0:
                raise ValueError(f"bad derivative request {r}")
            if sum(r) > 1:
                raise ValueError(f"derivatives of order {sum(r)} are not supported")
        out = np.zeros((len(points), len(requests)))
        supp = np.array(self.support)
        lam_all = mesh.barycentric(points, supp)
        for k, x in enumerate(points):
            inside = np.flatnonzero(np.all(lam_all[k] >= -LOCATE_TOL, axis=1))
            if inside.size == 0:
                continue
            s = int(supp[inside[0]])
            if np.any(lam_all[k, inside[0]] <= LOCATE_TOL):
                # on a face: defer to the mesh-wide tie-break
                s = locate_simplex(mesh, x)
                if s is None or s not in self.support:
                    continue
            val, grad = self.evaluate_on(s, x[None])
            for r, req in enumerate(requests):
                out[k, r] = val[0] if sum(req) == 0 else grad[0, req.index(1)]
        return out


class FiniteElementSpace:
    """Scalar Lagrange space of degree 1 (any dimension) or 2 (triangles).

    Nodes are numbered vertices first, then edges. Constrained nodes (those
    on the Dirichlet boundary) carry no basis function; ``node_to_basis``
    maps them to -1.

    Attributes
    ----------
    mesh : SimplicialMesh
    degree : int
    node_coords : array, shape (n_nodes, n)
    element_nodes : int array, shape (n_simplices, nloc)
    basis_nodes : int array
        Node of each basis function, in basis order.
    node_to_basis : int array, shape (n_nodes,)
    """

    def __init__(self, mesh: SimplicialMesh, degree: int, dirichlet=None):
        self.mesh = mesh
        self.degree = degree
        n = mesh.dim
        if degree == 1:
            self.element = _P1(n)
            self.node_coords = mesh.points
            self.element_nodes = mesh.simplices
            self.node_kinds = np.array(["P1-vertex"] * mesh.n_points)
            node_vertices = [(i,) for i in range(mesh.n_points)]
        elif degree == 2:
            if n != 2:
                raise ValueError(f"P2 is implemented on triangles only, mesh has dimension {n}")
            self.element = _P2Tri()
            edges = mesh.edges
            key = {tuple(e): k for k, e in enumerate(edges.tolist())}
            s = mesh.simplices
            loc = np.array(
                [[key[tuple(sorted((int(t[a]), int(t[b]))))] for a, b in P2_EDGES] for t in s], dtype=np.int64
            ).reshape(-1, 3)
            self.element_nodes = np.hstack([s, mesh.n_points + loc])
            self.node_coords = np.vstack([mesh.points, mesh.points[edges].mean(axis=1)])
            self.node_kinds = np.array(["P2-vertex"] * mesh.n_points + ["P2-edge"] * len(edges))
            node_vertices = [(i,) for i in range(mesh.n_points)] + [tuple(e) for e in edges.tolist()]
        else:
            raise ValueError(f"unsupported degree {degree}")
        self.node_coords.setflags(write=False)

        dirichlet = np.zeros((0, n), np.int64) if dirichlet is None else np.asarray(dirichlet, np.int64).reshape(-1, n)
        self.dirichlet = dirichlet
        facet_sets = [set(f.tolist()) for f in dirichlet]
        on_dirichlet_vertex = np.zeros(mesh.n_points, bool)
        if len(dirichlet):
            on_dirichlet_vertex[np.unique(dirichlet)] = True
        constrained = np.zeros(len(node_vertices), bool)
        for k, verts in enumerate(node_vertices):
            if not on_dirichlet_vertex[list(verts)].all():
                continue
            constrained[k] = len(verts) == 1 or any(set(verts) <= f for f in facet_sets)
        self.constrained = constrained
        self.basis_nodes = np.flatnonzero(~constrained)
        self.node_to_basis = np.full(len(node_vertices), -1, np.int64)
        self.node_to_basis[self.basis_nodes] = np.arange(len(self.basis_nodes))

    @property
    def n_nodes(self) -> int:
        return len(self.node_coords)

    @property
    def dim(self) -> int:
        """Number of basis functions."""
        return len(self.basis_nodes)

    def __len__(self):
        return self.dim

    def __getitem__(self, i) -> BasisFunction:
        if not -self.dim <= i < self.dim:
            raise IndexError(i)
        return BasisFunction(self, int(i) % self.dim)

    @property
    def basis(self):
        return [BasisFunction(self, i) for i in range(self.dim)]

    @cached_property
    def _supports(self):
        en = self.element_nodes
        flat = en.ravel()
        order = np.argsort(flat, kind="stable")
        elem = order // en.shape[1]
        bounds = np.searchsorted(flat[order], np.arange(self.n_nodes + 1))
        return elem, bounds

    def node_support(self, node: int) -> tuple:
        elem, bounds = self._supports
        return tuple(int(e) for e in elem[bounds[node] : bounds[node + 1]])

    @cached_property
    def grad_lambda(self):
        """Gradients of the barycentric coordinates, shape (n_simplices, n + 1, n)."""
        g = self.mesh.inverse_jacobians
        g0 = -g.sum(axis=1, keepdims=True)
        out = np.concatenate([g0, g], axis=1)
        out.setflags(write=False)
        return out

    def tables(self, rule):
        """Element tables for a quadrature rule.

        Returns
        -------
        x : array, shape (E, Q, n)
            Physical quadrature nodes.
        jxw : array, shape (E, Q)
            Weights times |det J|.
        values : array, shape (nloc, Q)
        grads : array, shape (E, nloc, Q, n)
        """
        key = (id(rule), rule.dim, rule.degree)
        cache = self.__dict__.setdefault("_tables", {})
        if key in cache:
            return cache[key]
        mesh = self.mesh
        lam = rule.nodes
        x = mesh.points[mesh.simplices[:, 0]][:, None, :] + np.einsum("eij,qj->eqi", mesh.jacobians, rule.points)
        jxw = mesh.abs_dets[:, None] * rule.weights[None, :]
        values = self.element.values(lam).T
        dl = self.element.dlam(lam)
        grads = np.einsum("qak,ekd->eaqd", dl, self.grad_lambda)
        out = (x, jxw, np.ascontiguousarray(values), grads)
        cache[key] = out
        return out

    def full_coefficients(self, coeffs, lift=None):
        """Node-indexed coefficients from basis coefficients (+ optional node lift)."""
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (self.dim,):
            raise ValueError(f"expected {self.dim} coefficients, got shape {coeffs.shape}")
        full = np.zeros(self.n_nodes) if lift is None else np.array(lift, dtype=float)
        full[self.basis_nodes] += coeffs
        return full

    def field_at_nodes(self, full, rule):
        """Value and gradient of a node-coefficient field at all quadrature nodes."""
        x, jxw, values, grads = self.tables(rule)
        loc = full[self.element_nodes]
        u = loc @ values
        du = np.einsum("ea,eaqd->eqd", loc, grads)
        return u, du


def build_p1_space(mesh: SimplicialMesh, dirichlet=None) -> FiniteElementSpace:
    """Piecewise linear space; vertices on Dirichlet facets are dropped.

    ``dirichlet`` defaults to the non-active part of the mesh boundary.
    """
    return FiniteElementSpace(mesh, 1, mesh.dirichlet if dirichlet is None else dirichlet)


def build_p2_space(mesh: SimplicialMesh, dirichlet=None) -> FiniteElementSpace:
    """Piecewise quadratic space on a triangulation."""
    return FiniteElementSpace(mesh, 2, mesh.dirichlet if dirichlet is None else dirichlet)


class VectorSpace:
    """Component-wise copies of a scalar space.

    Basis function ``c * N + i`` is the i-th scalar function placed in
    component ``c``.
    """

    def __init__(self, scalar: FiniteElementSpace, components: int):
        self.scalar = scalar
        self.components = components

    @property
    def dim(self) -> int:
        return self.components * self.scalar.dim

    def __len__(self):
        return self.dim

    def split(self, index: int):
        """``(component, scalar_index)`` of a vector basis index."""
        return divmod(int(index), self.scalar.dim)


def support_hull(f: BasisFunction) -> ConvexPolytope:
    """Convex hull of the mesh vertices of the support simplices."""
    mesh = f.space.mesh
    verts = np.unique(mesh.simplices[list(f.support)])
    return ConvexPolytope(mesh.points[verts])


def interpolate_boundary(space: FiniteElementSpace, g, dirichlet=None):
    """Nodal interpolant of ``g`` on Dirichlet nodes, zero elsewhere.

    ``space`` should be unconstrained (every node carries a function).
    ``g`` maps an (k, n) array of points to k values or to a (k, c) array;
    vector data is returned component-major, matching :class:`VectorSpace`.
    """
    mesh = space.mesh
    if dirichlet is None:
        dirichlet = mesh.dirichlet
    marker = FiniteElementSpace(mesh, space.degree, dirichlet)
    nodes = np.flatnonzero(marker.constrained)
    vals = np.asarray(g(space.node_coords[nodes]), dtype=float)
    if vals.ndim == 1:
        out = np.zeros(space.n_nodes)
        out[nodes] = vals
        return out
    out = np.zeros((vals.shape[1], space.n_nodes))
    out[:, nodes] = vals.T
    return out.reshape(-1)
