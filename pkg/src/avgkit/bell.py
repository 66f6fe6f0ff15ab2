"""Partial Bell polynomials B_{p,q} with exact integer coefficients.

A term of B_{p,q}(x_1, ..., x_{p-q+1}) is indexed by multiplicities
``(b_1, ..., b_{p-q+1})`` with ``sum(b) == q`` and ``sum(j * b_j) == p``; its
coefficient is ``p! / prod(b_j! * (j!)**b_j)``.

The factors x_j are vectors and the product is a symmetric q-linear map, so
"applying" B_{p,q} means summing ``coef * tensor(x_{j_1}, ..., x_{j_q})``
over terms.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from math import factorial
from typing import Sequence

import numpy as np

from .errors import ArgumentError
from .expr import apply_tensor
from .tpoly import TPoly

MAX_P = 12


@dataclass(frozen=True)
class BellTerm:
    coefficient: int
    multiplicities: tuple[int, ...]

    @property
    def factor_list(self) -> tuple[int, ...]:
        """1-based factor indices, index j repeated b_j times."""
        return tuple(j for j, b in enumerate(self.multiplicities, start=1) for _ in range(b))


def _tuples(p: int, q: int) -> list[tuple[int, ...]]:
    width = p - q + 1
    out = []

    # bounded search over b_width, b_{width-1}, ..., b_1
    def rec(j, left_parts, left_weight, tail):
        if j == 0:
            if left_parts == 0 and left_weight == 0:
                out.append(tuple(reversed(tail)))
            return
        for b in range(min(left_parts, left_weight // j), -1, -1):
            rec(j - 1, left_parts - b, left_weight - j * b, tail + [b])

    rec(width, q, p, [])
    out.sort(reverse=True)
    return out


@lru_cache(maxsize=None)
def bell_terms(p: int, q: int) -> tuple[BellTerm, ...]:
    """All terms of B_{p,q}, in descending lexicographic order of multiplicities."""
    if not (isinstance(p, int) and isinstance(q, int)):
        raise ArgumentError("p and q must be integers")
    if q < 1 or q > p:
        raise ArgumentError(f"need 1 <= q <= p, got p={p}, q={q}")
    if p > MAX_P:
        raise ArgumentError(f"p={p} exceeds supported maximum {MAX_P}")
    terms = []
    for b in _tuples(p, q):
        denom = 1
        for j, bj in enumerate(b, start=1):
            denom *= factorial(bj) * factorial(j) ** bj
        coef, rem = divmod(factorial(p), denom)
        assert rem == 0, (p, q, b)
        terms.append(BellTerm(coef, b))
    return tuple(terms)


def _check_arity(tensor, q, batch_ndim):
    if isinstance(tensor, np.ndarray):
        n = tensor.shape[0] if tensor.ndim else 0
        if tensor.ndim != q + 1 + batch_ndim or tensor.shape[1 : q + 1] != (n,) * q:
            raise ArgumentError(f"tensor of shape {tensor.shape} is not a {q}-linear map")
    else:
        arity = getattr(tensor, "arity", None)
        if arity is not None and arity != q:
            raise ArgumentError(f"tensor arity {arity} != {q}")


def bell_apply(p: int, q: int, factors: Sequence, tensor) -> np.ndarray:
    """Evaluate ``tensor`` contracted with B_{p,q}(factors).

    ``factors[0]`` is x_1. ``tensor`` is a dense array of shape
    ``(n_out, n, ..., n, *batch)`` with q contracted axes, or a callable of q
    vectors (checked against an ``arity`` attribute when present).
    """
    terms = bell_terms(p, q)
    if len(factors) < p - q + 1:
        raise ArgumentError(f"B_{p},{q} needs {p - q + 1} factors, got {len(factors)}")
    _check_arity(tensor, q, np.ndim(factors[0]) - 1)
    total = None
    for term in terms:
        value = term.coefficient * apply_tensor(tensor, [factors[j - 1] for j in term.factor_list])
        total = value if total is None else total + value
    return total


def bell_apply_tpoly(p: int, q: int, factors: Sequence[TPoly], tensor) -> TPoly:
    """Same as :func:`bell_apply` with polynomial-in-t factors.

    The coefficient of ``t**d`` in each product is the sum, over degree
    compositions ``d_1 + ... + d_q = d``, of the tensor applied to the
    corresponding coefficient vectors.
    """
    terms = bell_terms(p, q)
    if len(factors) < p - q + 1:
        raise ArgumentError(f"B_{p},{q} needs {p - q + 1} factors, got {len(factors)}")
    _check_arity(tensor, q, 0)
    result = None
    for term in terms:
        polys = [factors[j - 1] for j in term.factor_list]
        degree = sum(f.degree for f in polys)
        coeffs = None
        for degs in itertools.product(*(range(f.degree + 1) for f in polys)):
            vec = apply_tensor(tensor, [f.coeffs[d] for f, d in zip(polys, degs)])
            if coeffs is None:
                coeffs = np.zeros((degree + 1,) + np.shape(vec))
            coeffs[sum(degs)] += vec
        prod = TPoly(term.coefficient * coeffs)
        result = prod if result is None else result + prod
    return result
