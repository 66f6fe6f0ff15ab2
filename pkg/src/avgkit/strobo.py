"""Stroboscopic averaged functions g_i from the f_i, without near-identity transforms.

The time-T map of the averaged equation ``xi' = sum_i eps**i g_i(xi)`` expands
with coefficients ``ytilde_i(T, z) / i!`` where the ytilde_i are polynomials in t:

    ytilde_1 = t g_1
    ytilde_i = i! t g_i + sum_{j<i} sum_{m<=j} (i!/j!) d^m g_{i-j} int_0^t B_{j,m}(ytilde_1, ...) ds

Matching them with the f_i (stroboscopic maps agree at t = T) gives

    g_1 = f_1 / T
    g_i = (f_i - sum_{j<i} sum_{m<=j} (1/j!) d^m g_{i-j} int_0^T B_{j,m}(ytilde_1, ...) ds) / T

The tensors ``d^m g_r`` come from central finite differences of the recursively
computed lower-order g at stencil points; the integrals over t are exact.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from math import factorial
from typing import Callable, Sequence

import numpy as np

from .bell import bell_apply_tpoly
from .errors import AllOrdersVanish, ArgumentError, FiniteDifferenceError, ResourceError
from .expr import multi_indices, symmetric_index_map
from .melnikov import FCache, averaged_f_batch, composite_simpson, cumulative_simpson, simpson_nodes
from .odeint import DEFAULT_CONFIG, IntegratorConfig
from .system import System
from .tpoly import TPoly, tpoly_integrate0

DEFAULT_MAX_ORDER = 4
TAU_ZERO = 1e-8

# offsets and weights of central differences for d^m/ds^m, keyed by accuracy order
_STENCILS = {
    2: {
        1: ((-1, 1), (-0.5, 0.5)),
        2: ((-1, 0, 1), (1.0, -2.0, 1.0)),
        3: ((-2, -1, 1, 2), (-0.5, 1.0, -1.0, 0.5)),
        4: ((-2, -1, 0, 1, 2), (1.0, -4.0, 6.0, -4.0, 1.0)),
    },
    4: {
        1: ((-2, -1, 1, 2), (1 / 12, -8 / 12, 8 / 12, -1 / 12)),
        2: ((-2, -1, 0, 1, 2), (-1 / 12, 16 / 12, -30 / 12, 16 / 12, -1 / 12)),
        3: ((-3, -2, -1, 1, 2, 3), (1 / 8, -1.0, 13 / 8, -13 / 8, 1.0, -1 / 8)),
        4: ((-3, -2, -1, 0, 1, 2, 3), (-1 / 6, 2.0, -13 / 2, 28 / 3, -13 / 2, 2.0, -1 / 6)),
    },
}


@dataclass(frozen=True)
class FDConfig:
    """Finite-difference settings.

    The step for an m-th derivative of g_s is
    ``h = (base * level_growth**(s-1))**(1/(m+accuracy)) * (1 + |z|)``:
    ``base`` is the relative noise of the differenced values, ``level_growth``
    accounts for the extra noise each level of nested differencing leaves in
    g_s, and ``accuracy`` (2 or 4) selects the stencil's truncation order.

    The defaults give ``h_m = 1e-16**(1/(m+2)) * (1 + |z|)``, which resolves
    g_2 to about 1e-9. For g_3 and g_4 use :meth:`high_accuracy`.
    """

    base: float = 1e-16
    level_growth: float = 1.0
    accuracy: int = 2
    max_points: int = 50_000

    def __post_init__(self):
        if self.accuracy not in _STENCILS:
            raise ArgumentError(f"accuracy must be one of {sorted(_STENCILS)}")
        if not (self.base > 0 and self.level_growth >= 1):
            raise ArgumentError("base must be positive and level_growth >= 1")

    @classmethod
    def high_accuracy(cls) -> "FDConfig":
        """Fourth-order stencils with steps widened per nesting level."""
        return cls(base=1e-15, level_growth=1e3, accuracy=4)

    def step(self, m: int, z, level: int = 1) -> float:
        noise = self.base * self.level_growth ** (level - 1)
        return noise ** (1.0 / (m + self.accuracy)) * (1.0 + float(np.linalg.norm(z)))

    def stencil(self, m: int):
        return _STENCILS[self.accuracy][m]


DEFAULT_FD = FDConfig()


@dataclass
class GSeries:
    z: np.ndarray
    g: list[np.ndarray]
    tilde_y: list[TPoly]
    tensors: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return len(self.g)


def tilde_y_step(i: int, g_tensors: dict, lower: Sequence[TPoly]) -> TPoly:
    """Build ytilde_i from ``g_tensors[(r, m)] = d^m g_r(z)`` and ytilde_1..ytilde_{i-1}.

    ``g_tensors[(i, 0)]`` must hold g_i(z) itself.
    """
    if len(lower) < i - 1:
        raise ArgumentError(f"ytilde_{i} needs ytilde_1..ytilde_{i - 1}")
    result = TPoly.monomial(factorial(i) * np.asarray(g_tensors[(i, 0)], dtype=float), 1)
    for j in range(1, i):
        for m in range(1, j + 1):
            bell = bell_apply_tpoly(j, m, lower, g_tensors[(i - j, m)])
            result = result + (factorial(i) // factorial(j)) * tpoly_integrate0(bell)
    assert result.degree <= i, (i, result.degree)
    return result


def fd_tensor(G: Callable[[np.ndarray], np.ndarray], z, m: int, h: float, accuracy: int = 2) -> np.ndarray:
    """Symmetric tensor of m-th derivatives of ``G`` at ``z`` by polarization.

    Each diagonal value ``D^m G(z)[v, ..., v]`` is a central difference along
    ``v``; off-diagonal entries follow from the polarization identity over sums
    of basis vectors. Returns shape ``(n_out,) + (n,)*m``.
    """
    z = np.asarray(z, dtype=float)
    n = len(z)
    if m not in _STENCILS.get(accuracy, {}):
        raise ArgumentError(f"no order-{accuracy} stencil for derivative order {m}")
    offsets, weights = _STENCILS[accuracy][m]
    diag: dict[tuple[int, ...], np.ndarray] = {}

    def directional(v: tuple[int, ...]) -> np.ndarray:
        if v not in diag:
            vv = np.array(v, dtype=float)
            acc = None
            for c, w in zip(offsets, weights):
                val = w * np.asarray(G(z + (c * h) * vv), dtype=float)
                acc = val if acc is None else acc + val
            diag[v] = acc / h**m
        return diag[v]

    entries = []
    for alpha in multi_indices(n, m):
        total = None
        for size in range(1, m + 1):
            sign = (-1.0) ** (m - size)
            for subset in itertools.combinations(alpha, size):
                v = [0] * n
                for idx in subset:
                    v[idx] += 1
                val = sign * directional(tuple(v))
                total = val if total is None else total + val
        entries.append(total / factorial(m))
    flat = np.stack(entries, axis=-1)
    if not np.all(np.isfinite(flat)):
        raise FiniteDifferenceError(f"non-finite order-{m} difference at z={z.tolist()}")
    return flat[:, symmetric_index_map(n, m)]


class _Engine:
    """Recursive evaluation of g_1..g_k with memoised f values.

    Runs twice: a planning pass that records every base point whose f values
    the recursion will ask for (the stencil geometry does not depend on the
    values), then, after one batched f solve for all of them, the real pass.
    """

    def __init__(self, system: System, cache: FCache, fd: FDConfig):
        self.system = system
        self.cache = cache
        self.fd = fd
        self.planning = False
        self.requested: list[np.ndarray] = []
        self.memo: dict[tuple[bytes, int], GSeries] = {}

    def f(self, z) -> np.ndarray:
        if self.planning:
            self.requested.append(np.array(z, dtype=float))
            if len(self.requested) > self.fd.max_points:
                raise ResourceError(f"stencil recursion exceeds {self.fd.max_points} points")
            return np.zeros((self.cache.order, self.system.n))
        return self.cache.get(z)

    def series(self, z: np.ndarray, r: int) -> GSeries:
        key = (FCache.key(z), r)
        if key in self.memo:
            return self.memo[key]
        T = self.system.T
        fz = self.f(z)
        if r == 1:
            g1 = fz[0] / T
            out = GSeries(z, [g1], [TPoly.monomial(g1, 1)], {(1, 0): g1})
        else:
            prev = self.series(z, r - 1)
            tensors = dict(prev.tensors)
            for s in range(1, r):
                m = r - s
                h = self.fd.step(m, z, level=s)
                tensors[(s, m)] = fd_tensor(
                    lambda w, s=s: self.series(w, s).g[s - 1], z, m, h, self.fd.accuracy
                )
            acc = np.array(fz[r - 1], dtype=float)
            for j in range(1, r):
                for m in range(1, j + 1):
                    bell = bell_apply_tpoly(j, m, prev.tilde_y, tensors[(r - j, m)])
                    acc = acc - tpoly_integrate0(bell)(T) / factorial(j)
            gr = acc / T
            tensors[(r, 0)] = gr
            ty = tilde_y_step(r, tensors, prev.tilde_y)
            out = GSeries(z, prev.g + [gr], prev.tilde_y + [ty], tensors)
        self.memo[key] = out
        return out


def strobo_g(
    system: System,
    z,
    cfg: IntegratorConfig = DEFAULT_CONFIG,
    fd: FDConfig = DEFAULT_FD,
    order: int | None = None,
    cache: FCache | None = None,
) -> GSeries:
    """Stroboscopic averaged functions g_1..g_order at ``z``.

    ``order`` defaults to ``min(k, 4)``; higher orders are allowed with a
    warning because every level of nested differencing costs accuracy.
    Pass ``cache`` to reuse f evaluations across calls.
    """
    z = np.asarray(z, dtype=float)
    if z.shape != (system.n,):
        raise ArgumentError(f"z must have shape ({system.n},)")
    order = min(system.k, DEFAULT_MAX_ORDER) if order is None else order
    if not 1 <= order <= system.k:
        raise ArgumentError(f"order must be in 1..{system.k}")
    if order > DEFAULT_MAX_ORDER:
        warnings.warn(
            f"g of order {order} relies on {order - 1} nested finite differences; expect reduced accuracy",
            stacklevel=2,
        )
    if cache is None:
        cache = FCache(system, cfg, order)
    elif cache.order < order:
        raise ArgumentError("cache holds fewer orders than requested")
    engine = _Engine(system, cache, fd)
    engine.planning = True
    engine.series(z, order)
    cache.fill(engine.requested)
    n_points = len({FCache.key(p) for p in engine.requested})
    engine.planning = False
    engine.memo.clear()
    result = engine.series(z, order)
    steps = {m: fd.step(m, z, level=order - m) for m in range(1, order)}
    gmax = max((float(np.max(np.abs(g))) for g in result.g), default=0.0)
    result.diagnostics = {
        "fd_steps": steps,
        "f_points": n_points,
        "roundoff_estimate": {
            m: fd.base * fd.level_growth ** (order - m - 1) * max(1.0, gmax) / h**m
            for m, h in steps.items()
        },
    }
    return result


def g2_closed_form(system: System, z, cfg: IntegratorConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Classical second-order stroboscopic averaged function by direct quadrature.

    ``g_2 = (1/T) int_0^T (F_2 + D F_1 u_1 - D u_1 g_1) dt`` with
    ``u_1(t) = int_0^t (F_1(s) - g_1) ds``; all Jacobians are symbolic. It
    uses neither the y-stack nor finite differences.
    """
    if system.k < 2:
        raise ArgumentError("g2_closed_form needs k >= 2")
    z = [float(v) for v in np.asarray(z, dtype=float)]
    T = system.T
    N, h, nodes, mids = simpson_nodes(T, cfg.steps_per_period)
    F1, F2 = system.F[0], system.F[1]

    def at(field_, m, times):
        return np.moveaxis(field_.tensor(m, times, z, (len(times),)), -1, 0)

    f1_n, f1_m = at(F1, 0, nodes), at(F1, 0, mids)
    j1_n, j1_m = at(F1, 1, nodes), at(F1, 1, mids)
    f2_n = at(F2, 0, nodes)
    g1 = composite_simpson(h, f1_n) / T
    dg1 = composite_simpson(h, j1_n) / T
    u1 = cumulative_simpson(h, f1_n, f1_m) - nodes[:, None] * g1
    du1 = cumulative_simpson(h, j1_n, j1_m) - nodes[:, None, None] * dg1
    integrand = f2_n + np.einsum("toa,ta->to", j1_n, u1) - np.einsum("toa,a->to", du1, g1)
    return composite_simpson(h, integrand) / T


@dataclass
class VanishingOrder:
    order: int
    max_abs: list[float]
    max_scaled: list[float]
    tau: float


def first_nonvanishing(
    system: System,
    probe_set,
    cfg: IntegratorConfig = DEFAULT_CONFIG,
    tau: float = TAU_ZERO,
    order: int | None = None,
) -> VanishingOrder:
    """Smallest l with ``|f_l(z)| >= tau * (1 + |z|)`` at some probe point.

    Raises :class:`~avgkit.errors.AllOrdersVanish` (carrying the evidence) when
    every order up to k stays below the threshold.
    """
    probes = np.atleast_2d(np.asarray(probe_set, dtype=float))
    if probes.size == 0:
        raise ArgumentError("probe set must be nonempty")
    k = system.k if order is None else order
    f = averaged_f_batch(system, probes, cfg, k)  # (P, k, n)
    norms = np.linalg.norm(f, axis=2)
    scale = 1.0 + np.linalg.norm(probes, axis=1)
    max_abs = norms.max(axis=0).tolist()
    max_scaled = (norms / scale[:, None]).max(axis=0).tolist()
    for i in range(k):
        if max_scaled[i] >= tau:
            return VanishingOrder(i + 1, max_abs, max_scaled, tau)
    raise AllOrdersVanish(k, VanishingOrder(0, max_abs, max_scaled, tau))


def averaged_rhs(
    system: System,
    eps: float,
    cfg: IntegratorConfig = DEFAULT_CONFIG,
    fd: FDConfig = DEFAULT_FD,
    order: int | None = None,
):
    """Right-hand side ``xi -> sum_i eps**i g_i(xi)`` of the truncated averaged equation."""
    order = min(system.k, DEFAULT_MAX_ORDER) if order is None else order
    weights = [eps**i for i in range(1, order + 1)]

    def rhs(t, xi):
        series = strobo_g(system, xi, cfg, fd, order)
        return sum(w * g for w, g in zip(weights, series.g))

    return rhs
