"""Averaged functions f_i from the expansion of the time-T map.

With ``x(t, z, eps) = z + sum_i eps**i y_i(t, z) / i! + O(eps**(k+1))`` the
y_i solve the lower-triangular system

    y_1' = F_1(t, z)
    y_i' = i! F_i(t, z)
           + sum_{j<i} sum_{m<=j} (i!/j!) D^m F_{i-j}(t, z) B_{j,m}(y_1, ..., y_{j-m+1})

with y_i(0) = 0, and ``f_i(z) = y_i(T, z) / i!``.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial
from typing import Sequence

import numpy as np

from .bell import bell_apply
from .errors import ArgumentError
from .odeint import DEFAULT_CONFIG, IntegratorConfig, integrate, rk4_triangular
from .system import System

BATCH_CHUNK = 32


@dataclass
class YStack:
    z: np.ndarray
    t: float
    values: list[np.ndarray]

    @property
    def k(self) -> int:
        return len(self.values)


def _needed(k: int):
    """(order r, derivative m) pairs whose tensors the y_1..y_k integrands use."""
    return [(r, m) for r in range(1, k + 1) for m in range(0, k - r + 1)]


def field_tensors(system: System, t, z, k: int | None = None, batch_shape=()) -> dict:
    """Dense tensors ``D^m F_r(t, z)`` keyed by ``(r, m)`` for all pairs up to order k."""
    k = system.k if k is None else k
    return {
        (r, m): system.F[r - 1].tensor(m, t, z, batch_shape) for r, m in _needed(k)
    }


def integrand(i: int, tensors: dict, lower: Sequence[np.ndarray]) -> np.ndarray:
    """The right-hand side of ``y_i'`` given tensors at (t, z) and y_1..y_{i-1}.

    Vectors are component-first with optional trailing batch axes matching the
    tensors' trailing axes.
    """
    out = factorial(i) * tensors[(i, 0)]
    for j in range(1, i):
        w = factorial(i) // factorial(j)
        for m in range(1, j + 1):
            out = out + w * bell_apply(j, m, lower, tensors[(i - j, m)])
    return out


def y_rhs(system: System, i: int, t: float, z, y: Sequence) -> np.ndarray:
    """Value of ``y_i'(t)`` at base point ``z`` from the lower values ``y[0..i-2]``."""
    if not 1 <= i <= system.k:
        raise ArgumentError(f"order i must be in 1..{system.k}")
    if len(y) < i - 1:
        raise ArgumentError(f"y_{i}' needs y_1..y_{i - 1}")
    z = [float(v) for v in z]
    tensors = field_tensors(system, float(t), z, k=i)
    return integrand(i, tensors, [np.asarray(v, dtype=float) for v in y[: i - 1]])


def _stacked_rhs(system: System, z, k: int):
    z = [float(v) for v in z]
    n = system.n

    def rhs(t, state):
        ys = state.reshape(k, n)
        tensors = field_tensors(system, float(t), z, k=k)
        return np.concatenate([integrand(i, tensors, list(ys[: i - 1])) for i in range(1, k + 1)])

    return rhs


def compute_y_stepwise(system: System, z, t_end: float, cfg: IntegratorConfig = DEFAULT_CONFIG, order=None):
    """y-stack via :func:`~avgkit.odeint.integrate` on the stacked system, one step at a time."""
    k = system.k if order is None else order
    state = integrate(_stacked_rhs(system, z, k), 0.0, t_end, np.zeros(k * system.n), cfg, period=system.T)
    return YStack(np.asarray(z, dtype=float), t_end, list(state.reshape(k, system.n)))


def _y_batch(system: System, Z: np.ndarray, t_end: float, cfg: IntegratorConfig, k: int) -> np.ndarray:
    """y_1..y_k at ``t_end`` for base points ``Z`` of shape (B, n); returns (k, n, B)."""
    n_steps = cfg.n_steps(0.0, t_end, system.T)
    zc = [Z[:, c] for c in range(system.n)]
    h = t_end / n_steps
    tn = np.arange(n_steps) * h
    grids = {}

    def tensors_at(stage):
        key = 1 if stage == 2 else stage
        if key not in grids:
            times = (tn, tn + 0.5 * h, None, tn + h)[key]
            grids[key] = field_tensors(system, times[:, None], zc, k=k, batch_shape=(n_steps, len(Z)))
        return grids[key]

    def block_rhs(i, stage, times, lower):
        tensors = tensors_at(stage)
        # lower blocks arrive as (steps, n, B); the tensors want (n, steps, B)
        vecs = [np.moveaxis(v, 1, 0) for v in lower]
        return np.moveaxis(integrand(i + 1, tensors, vecs), 0, 1)

    zeros = [np.zeros((system.n, len(Z)))] * k
    nodes = rk4_triangular(block_rhs, zeros, 0.0, t_end, n_steps)
    return np.stack([y[-1] for y in nodes])


def compute_y(system: System, z, t_end: float | None = None, cfg: IntegratorConfig = DEFAULT_CONFIG, order=None) -> YStack:
    """Integrate y_1..y_k from 0 to ``t_end`` (default T) at base point ``z``.

    Fixed-step RK4 advances the whole stack in one pass over the grid (see
    :func:`~avgkit.odeint.rk4_triangular`); the step-doubling method falls
    back to :func:`compute_y_stepwise`.
    """
    t_end = system.T if t_end is None else float(t_end)
    k = system.k if order is None else order
    z = np.asarray(z, dtype=float)
    if z.shape != (system.n,):
        raise ArgumentError(f"z must have shape ({system.n},)")
    if t_end == 0.0:
        return YStack(z, 0.0, [np.zeros(system.n) for _ in range(k)])
    if cfg.method != "rk4_fixed":
        return compute_y_stepwise(system, z, t_end, cfg, order=k)
    ys = _y_batch(system, z[None, :], t_end, cfg, k)
    return YStack(z, t_end, [ys[i, :, 0] for i in range(k)])


def averaged_f_batch(system: System, Z, cfg: IntegratorConfig = DEFAULT_CONFIG, order=None) -> np.ndarray:
    """f_1..f_k at many base points at once; ``Z`` is (B, n), result is (B, k, n)."""
    k = system.k if order is None else order
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if Z.shape[1] != system.n:
        raise ArgumentError(f"points must have {system.n} coordinates")
    scale = np.array([1.0 / factorial(i) for i in range(1, k + 1)])[:, None, None]
    out = np.empty((len(Z), k, system.n))
    if cfg.method != "rk4_fixed":
        for b, z in enumerate(Z):
            ys = compute_y_stepwise(system, z, system.T, cfg, order=k).values
            out[b] = np.array(ys) * scale[:, :, 0]
        return out
    for start in range(0, len(Z), BATCH_CHUNK):
        chunk = Z[start : start + BATCH_CHUNK]
        ys = _y_batch(system, chunk, system.T, cfg, k) * scale
        out[start : start + len(chunk)] = np.moveaxis(ys, 2, 0)
    return out


def averaged_f(system: System, z, cfg: IntegratorConfig = DEFAULT_CONFIG, order=None) -> list[np.ndarray]:
    """``[f_1(z), ..., f_k(z)]`` with ``f_i = y_i(T, z) / i!``."""
    return list(averaged_f_batch(system, np.asarray(z, dtype=float)[None, :], cfg, order)[0])


class FCache:
    """Memo of f_1..f_k keyed by the exact bit pattern of the base point."""

    def __init__(self, system: System, cfg: IntegratorConfig = DEFAULT_CONFIG, order=None):
        self.system = system
        self.cfg = cfg
        self.order = system.k if order is None else order
        self._store: dict[bytes, np.ndarray] = {}
        self.evaluations = 0

    @staticmethod
    def key(z) -> bytes:
        return np.ascontiguousarray(z, dtype=float).tobytes()

    def __contains__(self, z) -> bool:
        return self.key(z) in self._store

    def get(self, z) -> np.ndarray:
        key = self.key(z)
        if key not in self._store:
            self.fill([z])
        return self._store[key]

    def fill(self, points) -> None:
        """Evaluate every point not yet cached in one batched solve."""
        todo, seen = [], set()
        for p in points:
            key = self.key(p)
            if key not in self._store and key not in seen:
                seen.add(key)
                todo.append(np.asarray(p, dtype=float))
        if not todo:
            return
        values = averaged_f_batch(self.system, np.array(todo), self.cfg, self.order)
        self.evaluations += len(todo)
        for p, v in zip(todo, values):
            self._store[self.key(p)] = v


# ---------------------------------------------------------------------------
# direct nested quadrature of f_2


def simpson_nodes(T: float, steps: int):
    """Even node count ``N``, step, node times and interval midpoints on ``[0, T]``."""
    N = steps + (steps % 2)
    h = T / N
    nodes = np.arange(N + 1) * h
    mids = nodes[:-1] + 0.5 * h
    return N, h, nodes, mids


def cumulative_simpson(h: float, at_nodes: np.ndarray, at_mids: np.ndarray) -> np.ndarray:
    """Running integral from 0 at every node; one Simpson panel per interval (axis 0)."""
    panels = (h / 6.0) * (at_nodes[:-1] + 4.0 * at_mids + at_nodes[1:])
    out = np.zeros_like(at_nodes)
    out[1:] = np.cumsum(panels, axis=0)
    return out


def composite_simpson(h: float, at_nodes: np.ndarray) -> np.ndarray:
    """Composite Simpson over an even number of intervals (axis 0)."""
    w = np.ones(len(at_nodes))
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return (h / 3.0) * np.tensordot(w, at_nodes, axes=(0, 0))


def f2_direct(system: System, z, cfg: IntegratorConfig = DEFAULT_CONFIG) -> np.ndarray:
    """``int_0^T (F_2 + D F_1 int_0^t F_1 ds) dt`` by nested Simpson quadrature.

    Independent of the y-stack integration; kept as a cross-check.
    """
    if system.k < 2:
        raise ArgumentError("f2_direct needs k >= 2")
    z = [float(v) for v in np.asarray(z, dtype=float)]
    N, h, nodes, mids = simpson_nodes(system.T, cfg.steps_per_period)
    F1, F2 = system.F[0], system.F[1]
    # arrays with the time axis first: (N+1, n) and (N+1, n, n)
    f1_nodes = np.moveaxis(F1.tensor(0, nodes, z, (N + 1,)), -1, 0)
    f1_mids = np.moveaxis(F1.tensor(0, mids, z, (N,)), -1, 0)
    jac = np.moveaxis(F1.tensor(1, nodes, z, (N + 1,)), -1, 0)
    f2_nodes = np.moveaxis(F2.tensor(0, nodes, z, (N + 1,)), -1, 0)
    y1 = cumulative_simpson(h, f1_nodes, f1_mids)
    inner = f2_nodes + np.einsum("toa,ta->to", jac, y1)
    return composite_simpson(h, inner)
