"""Simplicial meshes in arbitrary dimension.

A mesh is a set of points, a list of n-simplices given by point indices,
the boundary facets and the subset of those facets that carry a Neumann
condition (the "active" boundary). Meshes are immutable once built.

Text format
-----------
::

    dim <n>
    points <count>        # then count lines of n reals
    simplices <count>     # then count lines of n+1 zero-based indices
    boundary <count>      # then count lines of n indices
    active <count>        # then count lines of n indices

``#`` starts a comment, blank lines are ignored.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from itertools import combinations
from typing import Callable, TextIO

import numpy as np

__all__ = [
    "AffineMap",
    "MeshFormatError",
    "MeshValidationError",
    "SimplicialMesh",
    "check_conforming",
    "load_mesh",
    "locate_simplex",
    "reference_map",
    "save_mesh",
    "select_facets",
    "simplex_volume",
    "uniform_interval_mesh",
    "uniform_rectangle_mesh",
]

# barycentric containment tolerance
LOCATE_TOL = 1e-12


class MeshFormatError(ValueError):
    """Malformed mesh text."""


class MeshValidationError(ValueError):
    """Mesh data violates a structural invariant."""


def _readonly(a):
    a.setflags(write=False)
    return a


def _facet_key(ids) -> tuple:
    return tuple(sorted(int(i) for i in ids))


@dataclass(frozen=True)
class AffineMap:
    """Map ``x = matrix @ xhat + offset`` from the standard simplex."""

    matrix: np.ndarray
    offset: np.ndarray
    abs_det: float

    def __call__(self, xhat):
        return np.asarray(xhat) @ self.matrix.T + self.offset

    def inverse(self, x):
        return np.linalg.solve(self.matrix, (np.asarray(x) - self.offset).T).T


@dataclass(frozen=True, eq=False)
class SimplicialMesh:
    """Conforming simplicial mesh.

    Parameters
    ----------
    points : array, shape (n_points, n)
    simplices : int array, shape (n_simplices, n + 1)
    boundary : int array, shape (n_boundary, n)
        Boundary facets.
    active : int array, shape (n_active, n)
        Neumann part of the boundary, a subset of ``boundary``.
    """

    points: np.ndarray
    simplices: np.ndarray
    boundary: np.ndarray = field(default=None)
    active: np.ndarray = field(default=None)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[1] < 1:
            raise MeshValidationError("points must be a (count, n) array")
        n = pts.shape[1]
        simp = np.array(self.simplices, dtype=np.int64).reshape(-1, n + 1)
        bnd = self.boundary
        bnd = np.zeros((0, n), np.int64) if bnd is None else np.array(bnd, dtype=np.int64).reshape(-1, n)
        act = self.active
        act = np.zeros((0, n), np.int64) if act is None else np.array(act, dtype=np.int64).reshape(-1, n)
        for name, a in (("points", pts), ("simplices", simp), ("boundary", bnd), ("active", act)):
            object.__setattr__(self, name, _readonly(a))
        self._validate()

    def _validate(self):
        n, npts = self.dim, len(self.points)
        if not np.all(np.isfinite(self.points)):
            raise MeshValidationError("non-finite point coordinates")
        for name in ("simplices", "boundary", "active"):
            a = getattr(self, name)
            if a.size and (a.min() < 0 or a.max() >= npts):
                bad = a[(a < 0) | (a >= npts)][0]
                raise MeshValidationError(f"{name} references point index {bad} (mesh has {npts} points)")
        s = np.sort(self.simplices, axis=1)
        if len(s) and np.any(s[:, 1:] == s[:, :-1]):
            raise MeshValidationError("simplex with repeated vertex")
        if len(s):
            vol = np.abs(np.linalg.det(self._edge_matrices())) if n > 1 else np.abs(self._edge_matrices()[:, 0, 0])
            scale = np.max(np.abs(self.points)) + 1.0
            bad = np.flatnonzero(vol <= 1e-13 * scale**n)
            if bad.size:
                raise MeshValidationError(f"degenerate simplex {bad[0]}")
        bset = {_facet_key(f) for f in self.boundary}
        for f in self.active:
            if _facet_key(f) not in bset:
                raise MeshValidationError(f"active facet {tuple(f)} is not a boundary facet")

    def _edge_matrices(self):
        v = self.points[self.simplices]
        return np.transpose(v[:, 1:] - v[:, :1], (0, 2, 1))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def n_points(self) -> int:
        return len(self.points)

    @property
    def n_simplices(self) -> int:
        return len(self.simplices)

    @cached_property
    def jacobians(self):
        """Edge matrices ``M`` (n_simplices, n, n) with columns ``v_i - v_0``."""
        return _readonly(self._edge_matrices())

    @cached_property
    def abs_dets(self):
        return _readonly(np.abs(np.linalg.det(self.jacobians)))

    @cached_property
    def inverse_jacobians(self):
        return _readonly(np.linalg.inv(self.jacobians))

    @cached_property
    def volumes(self):
        return _readonly(self.abs_dets / math.factorial(self.dim))

    @cached_property
    def bounding_boxes(self):
        v = self.points[self.simplices]
        return _readonly(v.min(axis=1)), _readonly(v.max(axis=1))

    @cached_property
    def edges(self):
        """Unique sorted vertex pairs of all simplex edges."""
        pairs = [self.simplices[:, [a, b]] for a, b in combinations(range(self.dim + 1), 2)]
        e = np.sort(np.concatenate(pairs), axis=1)
        return _readonly(np.unique(e, axis=0))

    @property
    def max_edge_length(self) -> float:
        """Realized mesh size ``h``: the longest simplex edge."""
        e = self.edges
        return float(np.max(np.linalg.norm(self.points[e[:, 1]] - self.points[e[:, 0]], axis=1)))

    @property
    def dirichlet(self):
        """Boundary facets that are not active (Neumann)."""
        act = {_facet_key(f) for f in self.active}
        keep = [i for i, f in enumerate(self.boundary) if _facet_key(f) not in act]
        return self.boundary[keep]

    def barycentric(self, x, simplex_ids=None):
        """Barycentric coordinates of points ``x`` (k, n) in the given simplices.

        Returns an array of shape (k, len(simplex_ids), n + 1).
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        ids = np.arange(self.n_simplices) if simplex_ids is None else np.asarray(simplex_ids)
        v0 = self.points[self.simplices[ids, 0]]
        inv = self.inverse_jacobians[ids]
        lam = np.einsum("sij,ksj->ksi", inv, x[:, None, :] - v0[None])
        return np.concatenate([1.0 - lam.sum(-1, keepdims=True), lam], axis=-1)

    def with_active(self, active):
        return replace(self, active=np.asarray(active, dtype=np.int64).reshape(-1, self.dim))

    def __eq__(self, other):
        if not isinstance(other, SimplicialMesh):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, a), getattr(other, a)) for a in ("points", "simplices", "boundary", "active")
        )

    __hash__ = object.__hash__


def reference_map(mesh: SimplicialMesh, simplex_id: int) -> AffineMap:
    """Affine map taking the standard simplex onto simplex ``simplex_id``.

    Vertex ``e_i`` of the standard simplex goes to the i-th vertex of the
    simplex and the origin to vertex 0.
    """
    m = mesh.jacobians[simplex_id]
    det = float(mesh.abs_dets[simplex_id])
    if det == 0.0:
        raise MeshValidationError(f"degenerate simplex {simplex_id}")
    return AffineMap(m.copy(), mesh.points[mesh.simplices[simplex_id, 0]].copy(), det)


def simplex_volume(mesh: SimplicialMesh, simplex_id: int) -> float:
    return float(mesh.volumes[simplex_id])


def locate_simplex(mesh: SimplicialMesh, p, tol: float = LOCATE_TOL):
    """Index of the lowest-numbered simplex whose closed hull contains ``p``.

    Returns ``None`` when ``p`` lies outside the mesh.
    """
    p = np.asarray(p, dtype=float).reshape(-1)
    lo, hi = mesh.bounding_boxes
    pad = tol * (hi - lo).max(axis=1, keepdims=True)
    cand = np.flatnonzero(np.all((lo - pad <= p) & (p <= hi + pad), axis=1))
    if cand.size == 0:
        return None
    lam = mesh.barycentric(p, cand)[0]
    inside = np.flatnonzero(np.all(lam >= -tol, axis=1))
    return int(cand[inside[0]]) if inside.size else None


def select_facets(mesh: SimplicialMesh, predicate: Callable[[np.ndarray], np.ndarray]):
    """Boundary facets all of whose vertices satisfy ``predicate``.

    ``predicate`` receives an (k, n) array of coordinates and returns k booleans.
    """
    if len(mesh.boundary) == 0:
        return mesh.boundary.copy()
    ok = np.asarray(predicate(mesh.points), dtype=bool)
    return mesh.boundary[np.all(ok[mesh.boundary], axis=1)]


def check_conforming(mesh: SimplicialMesh) -> None:
    """Raise :class:`MeshValidationError` if the mesh is not conforming.

    Checks that every facet is shared by at most two simplices, that the
    two simplices on an interior facet lie on opposite sides of it, that
    declared boundary facets belong to exactly one simplex, and that no
    mesh point lies inside a simplex it is not a vertex of.
    """
    n = mesh.dim
    simp = mesh.simplices
    count: dict[tuple, list[tuple[int, int]]] = {}
    for k, s in enumerate(simp):
        for opp in range(n + 1):
            key = _facet_key(np.delete(s, opp))
            count.setdefault(key, []).append((k, int(s[opp])))
    if len({_facet_key(s) for s in simp}) != len(simp):
        raise MeshValidationError("duplicate simplices")
    for key, owners in count.items():
        if len(owners) > 2:
            raise MeshValidationError(f"facet {key} shared by {len(owners)} simplices")
        if len(owners) == 2:
            f = mesh.points[list(key)]
            a, b = mesh.points[owners[0][1]], mesh.points[owners[1][1]]
            # side of the facet hyperplane via signed volumes
            sa = np.linalg.det(np.vstack([f[1:] - f[0], a - f[0]])) if n > 1 else a[0] - f[0, 0]
            sb = np.linalg.det(np.vstack([f[1:] - f[0], b - f[0]])) if n > 1 else b[0] - f[0, 0]
            if sa * sb >= 0:
                raise MeshValidationError(f"simplices {owners[0][0]} and {owners[1][0]} overlap across facet {key}")
    for f in mesh.boundary:
        owners = count.get(_facet_key(f))
        if owners is None or len(owners) != 1:
            raise MeshValidationError(f"boundary facet {tuple(f)} is not an exterior facet")
    # hanging vertices, AABB pre-filter on sorted x
    order = np.argsort(mesh.points[:, 0], kind="stable")
    xs = mesh.points[order, 0]
    lo, hi = mesh.bounding_boxes
    for k, s in enumerate(simp):
        a = np.searchsorted(xs, lo[k, 0], side="left")
        b = np.searchsorted(xs, hi[k, 0], side="right")
        cand = order[a:b]
        cand = cand[np.all((mesh.points[cand] >= lo[k]) & (mesh.points[cand] <= hi[k]), axis=1)]
        cand = np.setdiff1d(cand, s)
        if cand.size:
            lam = mesh.barycentric(mesh.points[cand], [k])[:, 0]
            if np.any(np.all(lam >= -LOCATE_TOL, axis=1)):
                raise MeshValidationError(f"point lies inside simplex {k} without being one of its vertices")


# ---------------------------------------------------------------- file I/O


def _parse(stream: TextIO) -> SimplicialMesh:
    lines = []
    for raw in stream:
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append(line)
    it = iter(lines)

    def header(word):
        try:
            tok = next(it).split()
        except StopIteration:
            raise MeshFormatError(f"missing '{word}' section") from None
        if len(tok) != 2 or tok[0] != word:
            raise MeshFormatError(f"expected '{word} <count>', got {' '.join(tok)!r}")
        try:
            return int(tok[1])
        except ValueError:
            raise MeshFormatError(f"bad count in '{word}' line") from None

    def rows(count, width, conv, what):
        out = []
        for _ in range(count):
            try:
                tok = next(it).split()
            except StopIteration:
                raise MeshFormatError(f"unexpected end of input in {what}") from None
            if len(tok) != width:
                raise MeshFormatError(f"{what} row has {len(tok)} entries, expected {width}")
            try:
                out.append([conv(t) for t in tok])
            except ValueError:
                raise MeshFormatError(f"non-numeric entry in {what}") from None
        return out

    n = header("dim")
    if n < 1:
        raise MeshFormatError("dim must be positive")
    pts = rows(header("points"), n, float, "points")
    simp = rows(header("simplices"), n + 1, int, "simplices")
    bnd = rows(header("boundary"), n, int, "boundary")
    act = rows(header("active"), n, int, "active")
    extra = next(it, None)
    if extra is not None:
        raise MeshFormatError(f"trailing content: {extra!r}")
    mesh = SimplicialMesh(
        np.array(pts, float).reshape(-1, n),
        np.array(simp, np.int64).reshape(-1, n + 1),
        np.array(bnd, np.int64).reshape(-1, n),
        np.array(act, np.int64).reshape(-1, n),
    )
    return mesh


def load_mesh(source) -> SimplicialMesh:
    """Read a mesh from a path, text stream, bytes or byte stream.

    The result is checked for conformity.
    """
    if isinstance(source, (bytes, bytearray)):
        stream = io.StringIO(bytes(source).decode("utf-8"))
    elif isinstance(source, str) or hasattr(source, "__fspath__"):
        with open(source, encoding="utf-8") as fh:
            stream = io.StringIO(fh.read())
    elif isinstance(source, io.TextIOBase):
        stream = source
    else:
        data = source.read()
        stream = io.StringIO(data.decode("utf-8") if isinstance(data, bytes) else data)
    mesh = _parse(stream)
    check_conforming(mesh)
    return mesh


def save_mesh(mesh: SimplicialMesh, target=None) -> str:
    """Serialize ``mesh``; write to ``target`` (path or stream) if given."""
    out = [f"dim {mesh.dim}", f"points {mesh.n_points}"]
    out += [" ".join(repr(float(c)) for c in p) for p in mesh.points]
    for word, arr in (("simplices", mesh.simplices), ("boundary", mesh.boundary), ("active", mesh.active)):
        out.append(f"{word} {len(arr)}")
        out += [" ".join(str(int(i)) for i in row) for row in arr]
    text = "\n".join(out) + "\n"
    if target is None:
        return text
    if isinstance(target, str) or hasattr(target, "__fspath__"):
        with open(target, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        target.write(text)
    return text


# -------------------------------------------------------------- generators


def _divisions(length: float, step: float) -> int:
    k = length / step
    r = round(k)
    if r < 1 or abs(k - r) > 1e-9 * max(1.0, k):
        raise ValueError(f"spacing {step} does not divide length {length}")
    return int(r)


def _check_interval(r, name):
    a, b = float(r[0]), float(r[1])
    if not b > a:
        raise ValueError(f"empty {name} range {r}")
    return a, b


def uniform_interval_mesh(interval, h: float) -> SimplicialMesh:
    """Uniform segments of length ``h``; both endpoints are boundary facets."""
    if not h > 0:
        raise ValueError("h must be positive")
    a, b = _check_interval(interval, "x")
    n = _divisions(b - a, h)
    x = np.linspace(a, b, n + 1)
    simp = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    return SimplicialMesh(x[:, None], simp, [[0], [n]])


def uniform_rectangle_mesh(x_range, y_range, h: float | None = None, *, spacing=None, diagonal: str = "right"):
    """Axis-aligned grid of rectangles, each split into two right triangles.

    Either ``h`` (target longest side) or ``spacing`` (grid step, a scalar or
    an ``(sx, sy)`` pair that must divide the side lengths) is given. With
    ``h`` the number of cells per axis is the smallest one whose cell
    diagonal does not exceed ``h``; the realized longest side is available
    as ``mesh.max_edge_length``.

    ``diagonal`` selects the split: ``"right"`` cuts every cell from lower
    left to upper right, ``"left"`` from lower right to upper left, and
    ``"mirror"`` uses ``"right"`` left of the vertical midline and
    ``"left"`` right of it, giving a mesh symmetric under ``x -> -x`` about
    the midline (the number of columns is then rounded up to even).

    Boundary facets are the edges on the four sides; the active set is empty.
    """
    x0, x1 = _check_interval(x_range, "x")
    y0, y1 = _check_interval(y_range, "y")
    if (h is None) == (spacing is None):
        raise ValueError("give exactly one of h and spacing")
    if h is not None:
        if not h > 0:
            raise ValueError("h must be positive")
        leg = h / math.sqrt(2.0)
        nx = max(1, math.ceil((x1 - x0) / leg - 1e-9))
        ny = max(1, math.ceil((y1 - y0) / leg - 1e-9))
    else:
        sx, sy = (spacing, spacing) if np.isscalar(spacing) else spacing
        if not (sx > 0 and sy > 0):
            raise ValueError("spacing must be positive")
        nx, ny = _divisions(x1 - x0, sx), _divisions(y1 - y0, sy)
    if diagonal == "mirror" and nx % 2:
        if spacing is not None:
            raise ValueError("mirror diagonals need an even number of columns")
        nx += 1
    if diagonal not in ("right", "left", "mirror"):
        raise ValueError(f"unknown diagonal {diagonal!r}")

    xs, ys = np.linspace(x0, x1, nx + 1), np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)
    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    i, j = i.ravel(), j.ravel()
    sw, se, nw, ne = idx[j, i], idx[j, i + 1], idx[j + 1, i], idx[j + 1, i + 1]
    if diagonal == "right":
        right = np.ones(len(i), bool)
    elif diagonal == "left":
        right = np.zeros(len(i), bool)
    else:
        right = i < nx // 2
    t1 = np.where(right[:, None], np.column_stack([sw, se, ne]), np.column_stack([sw, se, nw]))
    t2 = np.where(right[:, None], np.column_stack([sw, ne, nw]), np.column_stack([se, ne, nw]))
    simp = np.empty((2 * len(i), 3), np.int64)
    simp[0::2], simp[1::2] = t1, t2

    bottom = np.column_stack([idx[0, :-1], idx[0, 1:]])
    right_side = np.column_stack([idx[:-1, -1], idx[1:, -1]])
    top = np.column_stack([idx[-1, 1:], idx[-1, :-1]])
    left_side = np.column_stack([idx[1:, 0], idx[:-1, 0]])
    bnd = np.concatenate([bottom, right_side, top, left_side])
    return SimplicialMesh(pts, simp, bnd)

