"""Standard-form systems ``x' = sum_i eps**i F_i(t, x)`` and their JSON files."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DomainError, ParseError, PeriodicityError, SystemFileError
from .expr import CompiledExprs, Expr, VectorField, parse

MAX_DIM = 10
MAX_ORDER = 5
PERIODICITY_SAMPLES = 64
PERIODICITY_TOL = 1e-9


@dataclass(frozen=True)
class Problem:
    location: str
    cause: str

    def __str__(self):
        return f"{self.location}: {self.cause}"


def parse_period(value) -> float:
    if isinstance(value, str):
        if value.strip() == "2pi":
            return 2.0 * math.pi
        raise ValueError(f'period must be a number or "2pi", got {value!r}')
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValueError(f"period must be a number, got {value!r}")
    return float(value)


@dataclass
class System:
    """Dimension ``n``, period ``T``, order ``k`` and fields ``F[0..k-1]`` (F_1..F_k).

    Use :meth:`from_dict`, :meth:`from_strings` or :func:`load_system` to build
    one; construction checks T-periodicity numerically unless told otherwise.
    """

    n: int
    T: float
    F: tuple[VectorField, ...]
    name: str = ""
    description: str = ""
    sources: tuple[tuple[str, ...], ...] = ()
    domain: tuple[np.ndarray, np.ndarray] | None = None
    T_literal: object = None
    _compiled: dict = field(default_factory=dict, repr=False)

    @property
    def k(self) -> int:
        return len(self.F)

    # -- construction -----------------------------------------------------

    @classmethod
    def from_strings(cls, F: Sequence[Sequence[str]], T=2 * math.pi, *, name="", check=True, **kw):
        d = {"n": len(F[0]), "T": T, "k": len(F), "F": [list(row) for row in F], "name": name}
        d.update(kw)
        return cls.from_dict(d, check=check)

    @classmethod
    def from_dict(cls, d: dict, *, check: bool = True) -> "System":
        problems, parsed = _validate(d)
        if problems:
            raise SystemFileError("; ".join(map(str, problems)))
        system = cls(**parsed)
        if check:
            dev = system.periodicity_deviation()
            if not dev <= PERIODICITY_TOL:
                raise PeriodicityError(
                    f"fields are not T-periodic: max deviation {dev:.6g} exceeds {PERIODICITY_TOL}", dev
                )
        return system

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "n": self.n,
            "T": self.T_literal if self.T_literal is not None else self.T,
            "k": self.k,
            "F": [list(row) for row in self.sources],
        }
        if self.description:
            d["description"] = self.description
        if self.domain is not None:
            d["domain"] = {"lo": self.domain[0].tolist(), "hi": self.domain[1].tolist()}
        return d

    def truncated(self, k: int) -> "System":
        d = self.to_dict()
        d["k"] = k
        d["F"] = d["F"][:k]
        return System.from_dict(d, check=False)

    # -- evaluation ---------------------------------------------------------

    def field_exprs(self) -> list[Expr]:
        return [e for vf in self.F for e in vf.exprs]

    def compiled(self, backend: str = "numpy") -> CompiledExprs:
        if backend not in self._compiled:
            self._compiled[backend] = CompiledExprs(self.field_exprs(), self.n, backend)
        return self._compiled[backend]

    def fields_at(self, t, x) -> np.ndarray:
        """All F_i at ``(t, x)``: shape ``(k, n) + batch`` for ``x`` of shape ``(n,) + batch``."""
        x = np.asarray(x, dtype=float)
        vals = self.compiled().stacked(t, list(x), x.shape[1:])
        return vals.reshape((self.k, self.n) + x.shape[1:])

    def full_rhs(self, eps: float):
        """Right-hand side ``sum_i eps**i F_i(t, x)`` of the truncated full equation."""
        weights = np.array([eps**i for i in range(1, self.k + 1)])
        fn = self.compiled()

        def rhs(t, x):
            vals = fn(t, list(x))
            k, n = self.k, self.n
            out = np.zeros(x.shape)
            for i in range(k):
                w = weights[i]
                for c in range(n):
                    out[c] += w * vals[i * n + c]
            return out

        return rhs

    def deviation_rhs(self, z, eps: float):
        """Right-hand side for ``w = x - z``: ``sum_i eps**i F_i(t, z + w)``."""
        full = self.full_rhs(eps)
        z = np.asarray(z, dtype=float)
        return lambda t, w: full(t, z + w)

    def periodicity_deviation(self, samples: int = PERIODICITY_SAMPLES, seed: int = 0) -> float:
        """Max over sample points of ``|F_i(t+T, x) - F_i(t, x)| / (1 + |F_i(t, x)|)``."""
        return self.periodicity_deviations(samples, seed)[0]

    def periodicity_deviations(self, samples: int = PERIODICITY_SAMPLES, seed: int = 0) -> tuple[float, float]:
        """Scaled deviation (see :meth:`periodicity_deviation`) and the plain max ``|F(t+T) - F(t)|``."""
        rng = np.random.default_rng(seed)
        lo, hi = self.sample_box()
        fn = self.compiled("math")
        worst = 0.0
        worst_abs = 0.0
        evaluated = 0
        for _ in range(samples):
            t = rng.uniform(0.0, self.T)
            x = rng.uniform(lo, hi)
            try:
                a = np.array(fn(t, list(x)))
                b = np.array(fn(t + self.T, list(x)))
            except DomainError:
                continue
            evaluated += 1
            worst = max(worst, float(np.max(np.abs(b - a) / (1.0 + np.abs(a)))))
            worst_abs = max(worst_abs, float(np.max(np.abs(b - a))))
        if evaluated == 0:
            return math.inf, math.inf
        return worst, worst_abs

    def sample_box(self) -> tuple[np.ndarray, np.ndarray]:
        if self.domain is not None:
            return self.domain
        return -np.ones(self.n), np.ones(self.n)


def _validate(d) -> tuple[list[Problem], dict]:
    problems: list[Problem] = []
    if not isinstance(d, dict):
        return [Problem("$", "system file must be a JSON object")], {}
    n = d.get("n")
    if isinstance(n, bool) or not isinstance(n, int) or not 1 <= n <= MAX_DIM:
        problems.append(Problem("n", f"must be an integer in 1..{MAX_DIM}, got {n!r}"))
        n = None
    k = d.get("k")
    if isinstance(k, bool) or not isinstance(k, int) or not 1 <= k <= MAX_ORDER:
        problems.append(Problem("k", f"must be an integer in 1..{MAX_ORDER}, got {k!r}"))
        k = None
    T = None
    try:
        T = parse_period(d.get("T"))
        if not (T > 0 and math.isfinite(T)):
            problems.append(Problem("T", f"must be positive and finite, got {T!r}"))
    except ValueError as exc:
        problems.append(Problem("T", str(exc)))
    F = d.get("F")
    fields = []
    sources = []
    if not isinstance(F, list):
        problems.append(Problem("F", "must be an array of k arrays of n expression strings"))
    else:
        if k is not None and len(F) != k:
            problems.append(Problem("F", f"has {len(F)} orders, expected k={k}"))
        for i, row in enumerate(F):
            if not isinstance(row, list):
                problems.append(Problem(f"F[{i}]", "must be an array of expression strings"))
                continue
            if n is not None and len(row) != n:
                problems.append(Problem(f"F[{i}]", f"has {len(row)} components, expected n={n}"))
                continue
            exprs = []
            for c, src in enumerate(row):
                if not isinstance(src, str):
                    problems.append(Problem(f"F[{i}][{c}]", "must be a string"))
                    continue
                if n is None:
                    continue
                try:
                    exprs.append(parse(src, n))
                except ParseError as exc:
                    problems.append(Problem(f"F[{i}][{c}]", str(exc)))
            if n is not None and len(exprs) == n:
                fields.append(VectorField(exprs, n))
                sources.append(tuple(row))
    domain = None
    if "domain" in d and n is not None:
        try:
            lo = np.array(d["domain"]["lo"], dtype=float)
            hi = np.array(d["domain"]["hi"], dtype=float)
            if lo.shape != (n,) or hi.shape != (n,) or not np.all(lo < hi):
                raise ValueError
            domain = (lo, hi)
        except (KeyError, TypeError, ValueError):
            problems.append(Problem("domain", "must be {lo: [n numbers], hi: [n numbers]} with lo < hi"))
    if problems:
        return problems, {}
    return [], dict(
        n=n,
        T=T,
        F=tuple(fields),
        name=str(d.get("name", "")),
        description=str(d.get("description", "")),
        sources=tuple(sources),
        domain=domain,
        T_literal=d.get("T"),
    )


def check_system_dict(d) -> tuple[list[Problem], System | None, float | None]:
    """Validate a decoded system file without raising.

    Returns the problems found, the system (when shapes and parsing are fine)
    and the measured periodicity deviation.
    """
    problems, parsed = _validate(d)
    if problems:
        return problems, None, None
    system = System(**parsed)
    dev, dev_abs = system.periodicity_deviations()
    if not dev <= PERIODICITY_TOL:
        problems.append(
            Problem(
                "F",
                f"not T-periodic: max deviation {dev_abs:.6g} "
                f"(scaled by 1 + |F|: {dev:.6g}, limit {PERIODICITY_TOL:g})",
            )
        )
    return problems, system, dev


def load_system(path, *, check: bool = True) -> System:
    path = Path(path)
    try:
        d = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SystemFileError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}")
    try:
        return System.from_dict(d, check=check)
    except PeriodicityError as exc:
        raise PeriodicityError(f"{path}: {exc}", exc.max_deviation) from None
    except SystemFileError as exc:
        raise SystemFileError(f"{path}: {exc}") from None
