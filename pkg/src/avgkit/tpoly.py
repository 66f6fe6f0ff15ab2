"""Polynomials in t with vector coefficients."""

from __future__ import annotations

import numpy as np


class TPoly:
    """``sum_d coeffs[d] * t**d`` with ``coeffs`` of shape ``(degree + 1, n)``.

    Instances are immutable; arithmetic returns new polynomials. Trailing
    zero coefficients are kept, so ``degree`` is the storage degree.
    """

    __slots__ = ("coeffs",)

    def __init__(self, coeffs):
        c = np.array(coeffs, dtype=float)
        if c.ndim == 1:
            c = c[None, :]
        if c.ndim != 2 or c.shape[0] == 0:
            raise ValueError("coeffs must have shape (degree + 1, n)")
        c.setflags(write=False)
        self.coeffs = c

    @classmethod
    def zero(cls, n: int, degree: int = 0) -> "TPoly":
        return cls(np.zeros((degree + 1, n)))

    @classmethod
    def monomial(cls, vector, degree: int) -> "TPoly":
        vector = np.asarray(vector, dtype=float)
        c = np.zeros((degree + 1, vector.shape[0]))
        c[degree] = vector
        return cls(c)

    @property
    def degree(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def n(self) -> int:
        return self.coeffs.shape[1]

    def effective_degree(self) -> int:
        """Highest power with a nonzero coefficient (0 for the zero polynomial)."""
        nz = np.flatnonzero(np.any(self.coeffs != 0.0, axis=1))
        return int(nz[-1]) if nz.size else 0

    def __call__(self, t: float) -> np.ndarray:
        out = np.zeros(self.n)
        for c in self.coeffs[::-1]:
            out = out * t + c
        return out

    def __add__(self, other: "TPoly") -> "TPoly":
        d = max(self.degree, other.degree)
        c = np.zeros((d + 1, self.n))
        c[: self.degree + 1] += self.coeffs
        c[: other.degree + 1] += other.coeffs
        return TPoly(c)

    def __mul__(self, scalar) -> "TPoly":
        return TPoly(self.coeffs * scalar)

    __rmul__ = __mul__

    def integrate0(self) -> "TPoly":
        """Antiderivative vanishing at t = 0: ``c t**d -> c/(d+1) t**(d+1)``."""
        c = np.zeros((self.degree + 2, self.n))
        c[1:] = self.coeffs / np.arange(1, self.degree + 2)[:, None]
        return TPoly(c)

    def derivative(self) -> "TPoly":
        if self.degree == 0:
            return TPoly.zero(self.n)
        return TPoly(self.coeffs[1:] * np.arange(1, self.degree + 1)[:, None])

    def __repr__(self):
        return f"TPoly({self.coeffs.tolist()!r})"


def tpoly_integrate0(p: TPoly) -> TPoly:
    return p.integrate0()
