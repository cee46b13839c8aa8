"""Grundmann-Moeller quadrature on the standard n-simplex.

The rule of degree ``d = 2s + 1`` uses barycentric nodes with odd
numerators ``(2*beta_k + 1) / (d + n - 2i)`` and signed weights. Weights
are normalized so that they integrate over the standard simplex
``{x >= 0, sum(x) <= 1}`` whose volume is ``1/n!``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .mesh import AffineMap

__all__ = [
    "ErrorFactorReport",
    "QuadratureRule",
    "distinct_permutations",
    "error_factor",
    "grundmann_moeller",
    "integrate_on_simplex",
    "odd_degree",
    "rule_cost",
    "rule_for_degree",
    "tensor_rule_cost",
]

_LOG_MAX = math.log(np.finfo(float).max)
_LOG_TINY = math.log(np.finfo(float).tiny)


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Quadrature rule on the standard simplex.

    Attributes
    ----------
    dim : int
    degree : int
        Polynomial degree integrated exactly.
    nodes : array, shape (k, dim + 1)
        Barycentric coordinates of the nodes.
    weights : array, shape (k,)
    """

    dim: int
    degree: int
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def points(self):
        """Cartesian node coordinates on the standard simplex, shape (k, dim)."""
        return self.nodes[:, 1:]

    def __len__(self):
        return len(self.weights)


@dataclass(frozen=True)
class ErrorFactorReport:
    dim: int
    degree: int
    lebesgue_w: float
    error_factor: float


def distinct_permutations(values):
    """All distinct orderings of ``values``, lexicographically descending."""
    a = sorted(values, reverse=True)
    out = [tuple(a)]
    n = len(a)
    while True:
        # previous permutation in lexicographic order
        i = n - 2
        while i >= 0 and a[i] <= a[i + 1]:
            i -= 1
        if i < 0:
            return out
        j = n - 1
        while a[j] >= a[i]:
            j -= 1
        a[i], a[j] = a[j], a[i]
        a[i + 1 :] = reversed(a[i + 1 :])
        out.append(tuple(a))


def _partitions(total: int, parts: int, largest: int | None = None):
    """Nonincreasing tuples of ``parts`` nonnegative ints summing to ``total``."""
    if largest is None:
        largest = total
    if parts == 1:
        if total <= largest:
            yield (total,)
        return
    for first in range(min(total, largest), -1, -1):
        if first * parts < total:
            break
        for rest in _partitions(total - first, parts - 1, first):
            yield (first,) + rest


def _log_abs_weight(n: int, s: int, i: int) -> float:
    d = 2 * s + 1
    return d * math.log(d + n - 2 * i) - math.lgamma(i + 1) - math.lgamma(d + n - i + 1) - 2 * s * math.log(2.0)


@lru_cache(maxsize=None)
def grundmann_moeller(n: int, s: int) -> QuadratureRule:
    """Grundmann-Moeller rule of degree ``2s + 1`` on the standard n-simplex.

    Rules are cached; the returned arrays are read-only.
    """
    if n < 1 or s < 0 or int(n) != n or int(s) != s:
        raise ValueError(f"need integer n >= 1 and s >= 0, got n={n}, s={s}")
    d = 2 * s + 1
    nodes, weights = [], []
    for i in range(s + 1):
        lw = _log_abs_weight(n, s, i)
        if not _LOG_TINY < lw < _LOG_MAX:
            raise OverflowError(f"weight magnitude out of floating-point range for n={n}, d={d}")
        w = (-1) ** i * math.exp(lw)
        denom = d + n - 2 * i
        for beta in _partitions(s - i, n + 1):
            for perm in distinct_permutations(beta):
                nodes.append([(2 * b + 1) / denom for b in perm])
                weights.append(w)
    nodes = np.array(nodes, dtype=float)
    weights = np.array(weights, dtype=float)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(n, d, nodes, weights)


def odd_degree(p: int) -> int:
    """Smallest odd integer ``>= p`` (at least 1)."""
    p = max(int(math.ceil(p)), 1)
    return p if p % 2 else p + 1


def rule_for_degree(n: int, p: int) -> QuadratureRule:
    """Cheapest Grundmann-Moeller rule exact for polynomials of degree ``p``."""
    return grundmann_moeller(n, (odd_degree(p) - 1) // 2)


def _check_odd(d):
    if d < 1 or d % 2 == 0:
        raise ValueError(f"degree must be odd and positive, got {d}")


def rule_cost(n: int, d: int) -> int:
    """Number of nodes of the degree-d rule in n dimensions."""
    _check_odd(d)
    s = (d - 1) // 2
    return math.comb(n + s + 1, s)


def tensor_rule_cost(n: int, d: int) -> int:
    """Nodes of a tensor-product Gauss rule of degree d."""
    _check_odd(d)
    return ((d + 1) // 2) ** n


def error_factor(n: int, d: int) -> ErrorFactorReport:
    """Stability constant ``n! * sum|w_k| + 1`` of the degree-d rule.

    Evaluated in closed form, without generating the rule. The sum is a
    finite sum of rationals, so it is formed exactly and rounded once.
    """
    _check_odd(d)
    s = (d - 1) // 2
    w = sum(
        Fraction((d + n - 2 * i) ** d * math.comb(n + s - i, n), 4**s * math.factorial(i) * math.factorial(d + n - i))
        for i in range(s + 1)
    )
    return ErrorFactorReport(n, d, float(w), float(math.factorial(n) * w + 1))


def integrate_on_simplex(rule: QuadratureRule, amap: AffineMap, f) -> float:
    """Integrate ``f`` over the simplex that ``amap`` maps the standard one onto.

    ``f`` receives the physical nodes as an array of shape (k, n) and
    returns k values.
    """
    n = amap.matrix.shape[0]
    if rule.dim != n:
        raise ValueError(f"rule dimension {rule.dim} does not match map dimension {n}")
    x = amap(rule.points)
    vals = np.asarray(f(x), dtype=float).reshape(-1)
    return float(amap.abs_det * np.dot(rule.weights, vals))
