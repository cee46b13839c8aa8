import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from femtool.assembly import (
    L2Load,
    PointLoad,
    PointwiseForm,
    assemble_bilinear,
    assemble_bilinear_pairwise,
    assemble_jacobian,
    assemble_linear,
    assemble_nonlinear_residual,
    assemble_stokes,
    bilinear_entry,
    common_support,
    gradient_form,
    mass_form,
    space_pattern,
)
from femtool.femspace import FiniteElementSpace, VectorSpace, build_p1_space, build_p2_space, interpolate_boundary
from femtool.geometry import SparsityPattern
from femtool.mesh import uniform_interval_mesh, uniform_rectangle_mesh
from femtool.problems import convdiff_form
from femtool.quadrature import rule_for_degree


@pytest.fixture(scope="module")
def grid():
    return uniform_rectangle_mesh((0, 1), (0, 1), spacing=0.25)


def test_1d_stiffness_is_tridiagonal():
    h = 0.125
    space = build_p1_space(uniform_interval_mesh((0, 1), h))
    a = assemble_bilinear(gradient_form(), space, space).toarray()
    want = (2 * np.eye(7) - np.eye(7, k=1) - np.eye(7, k=-1)) / h
    assert np.allclose(a, want)


def test_five_point_stencil(grid):
    space = build_p1_space(grid)
    a = assemble_bilinear(gradient_form(), space, space, space_pattern(space, space)).toarray()
    centre = 4  # the middle of the 3 x 3 interior vertices
    row = a[centre]
    assert row[centre] == pytest.approx(4.0)
    assert sorted(np.round(row[row != 0], 12).tolist()) == [-1.0, -1.0, -1.0, -1.0, 4.0]


def test_local_mass_matrix():
    mesh = uniform_rectangle_mesh((0, 1), (0, 1), spacing=1.0)
    space = FiniteElementSpace(mesh, 1, None)
    m = assemble_bilinear(mass_form(), space, space).toarray()
    # each triangle contributes area / 12 * (1 + delta_ij); vertices 0 and 3 are shared
    area = 0.5
    assert m.sum() == pytest.approx(1.0)
    assert m[1, 1] == pytest.approx(area / 6)
    assert m[0, 0] == pytest.approx(2 * area / 6)
    assert m[1, 2] == pytest.approx(0.0)


def dense_oracle(form, trial, test, rule_degree=4):
    """All pairs over all simplices, through the global basis evaluators."""
    mesh = trial.mesh
    rule = rule_for_degree(2, rule_degree)
    out = np.zeros((test.dim, trial.dim))
    for j, v in enumerate(test.basis):
        for i, u in enumerate(trial.basis):
            out[j, i] = bilinear_entry(form, u, v, rule, simplices=range(mesh.n_simplices))
    return out


def test_vectorized_matches_dense_oracle_for_nonsymmetric_form():
    mesh = uniform_rectangle_mesh((0, 1), (0, 2), spacing=0.5)
    space = build_p1_space(mesh)
    form = convdiff_form(0.5)
    got = assemble_bilinear(form, space, space, space_pattern(space, space)).toarray()
    want = dense_oracle(form, space, space)
    assert np.allclose(got, want, atol=1e-12)
    assert not np.allclose(want, want.T)


def test_mixed_spaces_orientation():
    mesh = uniform_rectangle_mesh((0, 1), (0, 1), spacing=0.5)
    p2 = build_p2_space(mesh)
    p1 = FiniteElementSpace(mesh, 1, None)
    form = PointwiseForm(lambda u, du, v, dv, x: du[..., 0] * v)
    got = assemble_bilinear(form, p2, p1)
    assert got.shape == (p1.dim, p2.dim)
    assert np.allclose(got.toarray(), dense_oracle(form, p2, p1), atol=1e-12)


def test_pairwise_assembly_agrees(grid):
    space = build_p1_space(grid)
    pat = space_pattern(space, space)
    form = convdiff_form(1.0)
    a = assemble_bilinear(form, space, space, pat)
    b = assemble_bilinear_pairwise(form, space, space, pat)
    assert abs(a - b).max() < 1e-13


def test_pattern_entries_stored_even_if_zero(grid):
    space = build_p1_space(grid)
    full = SparsityPattern.full(space.dim, space.dim)
    a = assemble_bilinear(gradient_form(), space, space, full)
    assert a.nnz == space.dim**2
    with pytest.raises(ValueError):
        assemble_bilinear(gradient_form(), space, space, SparsityPattern.full(2, 2))


def test_common_support(grid):
    space = build_p1_space(grid)
    u, v = space[0], space[1]
    cs = common_support(u, v)
    assert len(cs) == 2 and set(cs) <= set(u.support)
    assert common_support(space[0], space[8]) == []


def test_loads():
    mesh = uniform_rectangle_mesh((0, 1), (0, 1), spacing=0.25)
    space = FiniteElementSpace(mesh, 1, None)
    b = assemble_linear(L2Load(lambda x: np.ones(len(x))), space)
    assert b.sum() == pytest.approx(1.0)
    p = (0.3, 0.55)
    b = assemble_linear(PointLoad(2.0, p), space)
    vals = np.array([f.evaluate([p])[0, 0] for f in space.basis])
    assert np.allclose(b, 2.0 * vals)
    with pytest.raises(ValueError, match="outside"):
        assemble_linear(PointLoad(1.0, (2.0, 0.0)), space)
    with pytest.raises(TypeError):
        assemble_linear("nope", space)


@given(st.lists(st.floats(-1, 1), min_size=7, max_size=7))
def test_jacobian_matches_finite_differences(u):
    space = build_p1_space(uniform_interval_mesh((0, 1), 0.125))
    u = np.array(u)
    f = lambda x: np.sin(3 * x[:, 0])  # noqa: E731
    jac = assemble_jacobian(u, space).toarray()
    eps = 1e-6
    fd = np.column_stack(
        [
            (assemble_nonlinear_residual(u + eps * e, space, f) - assemble_nonlinear_residual(u - eps * e, space, f))
            / (2 * eps)
            for e in np.eye(7)
        ]
    )
    assert np.allclose(jac, fd, atol=1e-7)


def test_residual_cubic_term_against_gauss_legendre():
    h = 0.25
    space = build_p1_space(uniform_interval_mesh((0, 1), h))
    u = np.array([0.2, -0.1, 0.4])
    k = assemble_bilinear(gradient_form(), space, space).toarray()
    cubic = assemble_nonlinear_residual(u, space, lambda x: np.zeros(len(x))) - k @ u
    # oracle: int u_h^3 phi_i with 5-point Gauss-Legendre per segment
    t, w = np.polynomial.legendre.leggauss(5)
    nodes = np.r_[0.0, u, 0.0]
    want = np.zeros(3)
    for e in range(4):
        x = e * h + (t + 1) * h / 2
        uh = np.interp(x, np.linspace(0, 1, 5), nodes)
        for i in range(3):
            phi = np.interp(x, np.linspace(0, 1, 5), np.eye(5)[i + 1])
            want[i] += (w * h / 2) @ (uh**3 * phi)
    assert np.allclose(cubic, want, atol=1e-15)
    zero = assemble_nonlinear_residual(np.zeros(3), space, lambda x: np.ones(len(x)))
    assert np.allclose(zero, -h)


def stokes_parts(spacing):
    mesh = uniform_rectangle_mesh((-1, 1), (-1, 1), spacing=spacing)
    vel = VectorSpace(build_p2_space(mesh), 2)
    pres = FiniteElementSpace(mesh, 1, None)
    full = FiniteElementSpace(mesh, 2, None)
    return mesh, vel, pres, full


def test_stokes_blocks():
    mesh, vel, pres, full = stokes_parts(0.5)
    sys = assemble_stokes(vel, pres)
    assert sys.a.shape == (vel.dim, vel.dim) and sys.b.shape == (pres.dim, vel.dim)
    assert abs(sys.a - sys.a.T).max() < 1e-12
    # constants are in the pressure space: sum_q B[q, :] = -int div v = 0 for v vanishing on the boundary
    assert np.allclose(np.ones(pres.dim) @ sys.b.toarray(), 0.0, atol=1e-12)


def test_stokes_divergence_free_interpolant():
    mesh, vel, pres, full = stokes_parts(0.5)
    # (x^2, -2xy) is divergence free and quadratic, so its P2 interpolant is exact
    lift = interpolate_boundary(full, lambda x: np.column_stack([x[:, 0] ** 2, -2 * x[:, 0] * x[:, 1]]))
    nn = full.n_nodes
    exact = np.concatenate([full.node_coords[:, 0] ** 2, -2 * full.node_coords[:, 0] * full.node_coords[:, 1]])
    sys = assemble_stokes(vel, pres, lift)
    assert np.abs(sys.b_full @ exact).max() < 1e-12
    assert np.allclose(sys.lift[:nn][vel.scalar.constrained], exact[:nn][vel.scalar.constrained])
    assert sp.issparse(sys.b_full)
    with pytest.raises(ValueError):
        assemble_stokes(vel, pres, np.zeros(3))
