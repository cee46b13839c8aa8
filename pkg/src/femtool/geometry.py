"""Convex polytope intersection and operator sparsity from supports.

Two convex hulls are disjoint exactly when the segment joining their
closest points gives an axis on which their projections are disjoint.
:func:`convex_intersection` runs a bounding-box rejection, solves the
closest-pair quadratic program and then checks projections on that axis.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "AABB",
    "ClosestPairError",
    "ConvexPolytope",
    "SparsityPattern",
    "bounding_box",
    "closest_pair",
    "convex_intersection",
    "min_norm_point",
    "sparsity_pattern",
]

TOUCH_RTOL = 1e-9
# relative contraction applied when only interior overlap counts
INTERIOR_SHRINK = 1e-6


class ClosestPairError(RuntimeError):
    """Closest-pair solver hit its iteration cap."""


@dataclass(frozen=True, eq=False)
class ConvexPolytope:
    """Convex hull of a finite vertex set (redundant vertices allowed)."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        if v.ndim == 1:
            v = v[None, :]
        if v.ndim != 2 or len(v) == 0:
            raise ValueError("a polytope needs at least one vertex")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite polytope vertex")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @cached_property
    def diameter(self) -> float:
        v = self.vertices
        if len(v) == 1:
            return 0.0
        return float(np.sqrt(((v[:, None] - v[None]) ** 2).sum(-1).max()))

    def contracted(self, factor: float) -> "ConvexPolytope":
        """Copy scaled by ``1 - factor`` about the vertex centroid."""
        c = self.vertices.mean(axis=0)
        return ConvexPolytope(c + (1.0 - factor) * (self.vertices - c))


@dataclass(frozen=True)
class AABB:
    min: np.ndarray
    max: np.ndarray

    def intersects(self, other: "AABB") -> bool:
        return bool(np.all(self.min <= other.max) and np.all(other.min <= self.max))


@dataclass(frozen=True)
class SparsityPattern:
    """Pairs ``(trial, test)`` whose operator entry may be nonzero."""

    rows: int
    cols: int
    pairs: frozenset

    def __contains__(self, pair):
        return tuple(pair) in self.pairs

    def __len__(self):
        return len(self.pairs)

    def as_array(self) -> np.ndarray:
        """Pairs sorted lexicographically, shape (len, 2)."""
        if not self.pairs:
            return np.zeros((0, 2), np.int64)
        a = np.array(sorted(self.pairs), dtype=np.int64)
        return a

    @classmethod
    def from_pairs(cls, rows, cols, pairs):
        pairs = frozenset((int(i), int(j)) for i, j in pairs)
        for i, j in pairs:
            if not (0 <= i < rows and 0 <= j < cols):
                raise ValueError(f"pair {(i, j)} out of range for {rows}x{cols}")
        return cls(rows, cols, pairs)

    @classmethod
    def full(cls, rows, cols):
        return cls(rows, cols, frozenset((i, j) for i in range(rows) for j in range(cols)))


def bounding_box(p: ConvexPolytope) -> AABB:
    return AABB(p.vertices.min(axis=0), p.vertices.max(axis=0))


def _affine_minimizer(q):
    """Coefficients (summing to 1) of the min-norm point of aff(q)."""
    if len(q) == 1:
        return np.ones(1)
    r = (q[1:] - q[0]).T
    mu, *_ = np.linalg.lstsq(r, -q[0], rcond=None)
    return np.concatenate([[1.0 - mu.sum()], mu])


def min_norm_point(points, rtol: float = 1e-12, max_iter: int = 10_000):
    """Point of minimum norm in the convex hull of ``points`` (Wolfe's method).

    Returns ``(x, weights)`` with ``x = weights @ points``. The major cycle
    stops when the Frank-Wolfe gap ``|x|^2 - min_j p_j.x`` falls below
    ``rtol * |x|^2`` (or the rounding level of the dot products), when a
    step no longer decreases ``|x|``, or when ``x`` vanishes to rounding.
    """
    p = np.asarray(points, dtype=float)
    m = len(p)
    norms = (p * p).sum(axis=1)
    scale = norms.max()
    j = int(np.argmin(norms))
    corral = [j]
    lam = np.ones(1)
    x = p[j].copy()
    root_scale = np.sqrt(scale)
    for _ in range(max_iter):
        xx = float(x @ x)
        if xx <= 1e-30 * scale:
            break
        g = p @ x
        j = int(np.argmin(g))
        # rounding floor of p_j . x
        floor = 1e-14 * root_scale * np.sqrt(xx)
        if xx - g[j] <= max(rtol * xx, floor) or j in corral:
            break
        corral.append(j)
        lam = np.append(lam, 0.0)
        for _ in range(m + 1):
            mu = _affine_minimizer(p[corral])
            if np.all(mu > -1e-14):
                # interior up to rounding: drop the vanishing weights and stop
                keep = mu > 1e-14
                corral = [c for c, k in zip(corral, keep) if k]
                lam = mu[keep] / mu[keep].sum()
                break
            neg = np.flatnonzero((mu <= 0) & (lam > mu))
            if len(neg) == 0:
                lam = np.clip(mu, 0.0, None)
            else:
                ratios = lam[neg] / (lam[neg] - mu[neg])
                theta = float(ratios.min())
                lam = lam + theta * (mu - lam)
                lam[neg[np.argmin(ratios)]] = 0.0
            keep = lam > 1e-15
            corral = [c for c, k in zip(corral, keep) if k]
            lam = lam[keep] / lam[keep].sum()
        else:
            raise ClosestPairError("minor cycle did not terminate")
        x_new = lam @ p[corral]
        if float(x_new @ x_new) >= xx:
            break
        x = x_new
    else:
        raise ClosestPairError(f"no convergence within {max_iter} iterations")
    w = np.zeros(m)
    w[corral] = lam
    return x, w


def closest_pair(u: ConvexPolytope, v: ConvexPolytope, rtol: float = 1e-12, max_iter: int = 10_000):
    """Closest points of two convex hulls.

    Solved as the minimum-norm point of the Minkowski difference
    ``{u_i - v_j}``; the pair weights marginalize to convex coefficients
    on each vertex set.

    Returns
    -------
    p_u, p_v : array, shape (n,)
    distance : float
    """
    if u.dim != v.dim:
        raise ValueError(f"dimension mismatch: {u.dim} vs {v.dim}")
    uv, vv = u.vertices, v.vertices
    diff = (uv[:, None, :] - vv[None, :, :]).reshape(-1, u.dim)
    _, w = min_norm_point(diff, rtol=rtol, max_iter=max_iter)
    w = w.reshape(len(uv), len(vv))
    pu = w.sum(axis=1) @ uv
    pv = w.sum(axis=0) @ vv
    return pu, pv, float(np.linalg.norm(pu - pv))


def _boxes_overlap(u, v):
    return bool(np.all(u.vertices.min(0) <= v.vertices.max(0)) and np.all(v.vertices.min(0) <= u.vertices.max(0)))


def convex_intersection(u: ConvexPolytope, v: ConvexPolytope, touch_rtol: float = TOUCH_RTOL, *, info=None) -> bool:
    """Whether the closed convex hulls of ``u`` and ``v`` intersect.

    Pairs closer than ``touch_rtol * (diam(u) + diam(v))`` count as
    intersecting. If ``info`` is a dict it receives ``stage`` (``"aabb"``,
    ``"touch"`` or ``"axis"``) and, past the box test, ``axis``.
    """
    if u.dim != v.dim:
        raise ValueError(f"dimension mismatch: {u.dim} vs {v.dim}")
    if not _boxes_overlap(u, v):
        if info is not None:
            info["stage"] = "aabb"
        return False
    pu, pv, dist = closest_pair(u, v)
    axis = pu - pv
    if info is not None:
        info["axis"] = axis
        info["distance"] = dist
    if dist <= touch_rtol * (u.diameter + v.diameter):
        if info is not None:
            info["stage"] = "touch"
        return True
    if info is not None:
        info["stage"] = "axis"
    pu_proj, pv_proj = u.vertices @ axis, v.vertices @ axis
    return not (pu_proj.min() > pv_proj.max() or pv_proj.min() > pu_proj.max())


def _shared_cell(a_ids: set, b_ids: set, pts, n) -> bool:
    """True if the vertex sets share n + 1 affinely independent points."""
    common = a_ids & b_ids
    if len(common) < n + 1:
        return False
    if n == 1:
        return True
    q = pts[sorted(common)]
    r = q[1:] - q[0]
    tol = 1e-12 * float(np.abs(r).max()) ** n
    if n == 2:
        cross = r[:, 0, None] * r[None, :, 1] - r[:, 1, None] * r[None, :, 0]
        return bool(np.abs(cross).max() > tol)
    return np.linalg.matrix_rank(r) == n


def _candidate_pairs(lo_a, hi_a, lo_b, hi_b, chunk=4096):
    """Index pairs of overlapping boxes: sweep on axis 0, then filter."""
    order = np.argsort(lo_b[:, 0], kind="stable")
    lo_sorted = lo_b[order, 0]
    width = float((hi_b[:, 0] - lo_b[:, 0]).max()) if len(lo_b) else 0.0
    out_i, out_j = [], []
    for start in range(0, len(lo_a), chunk):
        ia = np.arange(start, min(start + chunk, len(lo_a)))
        first = np.searchsorted(lo_sorted, lo_a[ia, 0] - width, side="left")
        last = np.searchsorted(lo_sorted, hi_a[ia, 0], side="right")
        counts = last - first
        rep_i = np.repeat(ia, counts)
        offs = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
        rep_j = order[np.repeat(first, counts) + offs]
        ok = np.all((lo_a[rep_i] <= hi_b[rep_j]) & (lo_b[rep_j] <= hi_a[rep_i]), axis=1)
        out_i.append(rep_i[ok])
        out_j.append(rep_j[ok])
    if not out_i:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    return np.concatenate(out_i), np.concatenate(out_j)


def sparsity_pattern(trial, test, *, interior: bool = True, shrink: float = INTERIOR_SHRINK) -> SparsityPattern:
    """Pairs ``(i, j)`` for which ``trial[i]`` and ``test[j]`` intersect.

    With ``interior=True`` (default) only overlaps of positive measure
    count: each polytope is first contracted about its centroid by the
    relative factor ``shrink``, so hulls that merely touch along a face are
    left out. Such pairs cannot produce a nonzero integral. With
    ``interior=False`` the closed hulls are tested as they are.

    A bounding-box sweep selects candidates; pairs whose vertex sets share
    a full-dimensional simplex are accepted without solving the
    closest-pair problem, and the rest go through
    :func:`convex_intersection`.
    """
    same = trial is test
    trial, test = list(trial), list(test)
    if not trial or not test:
        return SparsityPattern(len(trial), len(test), frozenset())
    n = trial[0].dim
    if any(p.dim != n for p in trial + test):
        raise ValueError("polytopes must share the ambient dimension")
    if interior and shrink > 0:
        trial_t = [p.contracted(shrink) for p in trial]
        test_t = trial_t if same else [p.contracted(shrink) for p in test]
    else:
        trial_t, test_t = trial, test

    def boxes(polys):
        return (np.array([p.vertices.min(0) for p in polys]), np.array([p.vertices.max(0) for p in polys]))

    ci, cj = _candidate_pairs(*boxes(trial_t), *boxes(test_t))

    # identify coincident vertices across all polytopes for the shared-cell shortcut
    all_v = np.concatenate([p.vertices for p in trial + test])
    _, ids = np.unique(all_v, axis=0, return_inverse=True)
    ids = ids.reshape(-1)
    split = np.cumsum([len(p.vertices) for p in trial + test])[:-1]
    vid = [set(s.tolist()) for s in np.split(ids, split)]
    pts = np.zeros((ids.max() + 1, n))
    pts[ids] = all_v

    pairs = set()
    nt = len(trial)
    for i, j in zip(ci.tolist(), cj.tolist()):
        if _shared_cell(vid[i], vid[nt + j], pts, n) or convex_intersection(trial_t[i], test_t[j]):
            pairs.add((i, j))
    return SparsityPattern(len(trial), len(test), frozenset(pairs))
