"""Classical RK4 integration, fixed-step or with step-doubling error control.

States are numpy arrays of any shape; a right-hand side may therefore carry
trailing batch axes and integrate many initial conditions at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ArgumentError, BlowUpError, MaxStepsExceeded

RHS = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class IntegratorConfig:
    """Integrator settings.

    ``steps_per_period`` is the number of fixed RK4 steps per period (or per
    integration interval when no period is given). ``abs_tol``/``rel_tol``
    drive the step-doubling method.
    """

    method: str = "rk4_fixed"
    steps_per_period: int = 2048
    abs_tol: float = 1e-11
    rel_tol: float = 1e-11
    max_steps: int = 10_000_000

    def __post_init__(self):
        if self.method not in ("rk4_fixed", "rk4_doubling"):
            raise ArgumentError(f"unknown method {self.method!r}")
        if self.steps_per_period < 16:
            raise ArgumentError("steps_per_period must be >= 16")
        for tol in (self.abs_tol, self.rel_tol):
            if not 0.0 < tol <= 1e-2:
                raise ArgumentError("tolerances must lie in (0, 1e-2]")
        if self.max_steps < 1:
            raise ArgumentError("max_steps must be positive")

    def n_steps(self, t0: float, t1: float, period: float | None = None) -> int:
        span = t1 - t0
        if period is None:
            return self.steps_per_period
        return max(1, math.ceil(self.steps_per_period * span / period - 1e-9))


DEFAULT_CONFIG = IntegratorConfig()


def rk4_step(rhs: RHS, t: float, y: np.ndarray, h: float) -> np.ndarray:
    k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * h, y + (0.5 * h) * k1)
    k3 = rhs(t + 0.5 * h, y + (0.5 * h) * k2)
    k4 = rhs(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _fixed(rhs, t0, t1, y, n, max_steps):
    if n > max_steps:
        raise MaxStepsExceeded(f"{n} steps requested, max_steps={max_steps}")
    h = (t1 - t0) / n
    for i in range(n):
        t = t0 + i * h
        y = rk4_step(rhs, t, y, h)
        if not np.all(np.isfinite(y)):
            raise BlowUpError("non-finite state", t + h)
    return y


def _doubling(rhs, t0, t1, y, cfg: IntegratorConfig, h0):
    t = t0
    h = h0
    steps = 0
    while t < t1:
        last = h >= t1 - t
        if last:
            h = t1 - t
        big = rk4_step(rhs, t, y, h)
        half = rk4_step(rhs, t + 0.5 * h, rk4_step(rhs, t, y, 0.5 * h), 0.5 * h)
        steps += 3
        if steps > cfg.max_steps:
            raise MaxStepsExceeded(f"exceeded max_steps={cfg.max_steps} at t={t!r}")
        if not np.all(np.isfinite(half)):
            raise BlowUpError("non-finite state", t + h)
        scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(y), np.abs(half))
        err = float(np.max(np.abs(half - big) / (15.0 * scale))) if np.size(y) else 0.0
        if err <= 1.0:
            y = half + (half - big) / 15.0
            t = t1 if last else t + h
        if h < 1e-14 * max(1.0, abs(t)):
            raise BlowUpError("step size underflow", t)
        factor = 4.0 if err == 0.0 else min(4.0, max(0.2, 0.9 * err ** -0.2))
        h *= factor
    return y


def integrate(
    rhs: RHS,
    t0: float,
    t1: float,
    state0,
    cfg: IntegratorConfig = DEFAULT_CONFIG,
    period: float | None = None,
) -> np.ndarray:
    """Integrate ``y' = rhs(t, y)`` from ``t0`` to ``t1`` and return ``y(t1)``.

    With ``rk4_fixed`` the step is ``(t1 - t0) / N`` where ``N`` is
    ``cfg.steps_per_period`` per ``period`` (per interval if ``period`` is None).
    """
    if t1 < t0:
        raise ArgumentError("t1 must be >= t0")
    y = np.array(state0, dtype=float)
    if t1 == t0:
        return y
    n = cfg.n_steps(t0, t1, period)
    if cfg.method == "rk4_fixed":
        return _fixed(rhs, t0, t1, y, n, cfg.max_steps)
    return _doubling(rhs, t0, t1, y, cfg, (t1 - t0) / n)


def integrate_dense(
    rhs: RHS,
    t0: float,
    state0,
    sample_times: Sequence[float],
    cfg: IntegratorConfig = DEFAULT_CONFIG,
    period: float | None = None,
) -> list[np.ndarray]:
    """States at each of ``sample_times`` (nondecreasing, all >= t0).

    The fixed-step method integrates segment by segment so that steps land on
    every sample time; the nominal step is ``period / steps_per_period`` (or
    the whole span divided by ``steps_per_period``).
    """
    times = [float(s) for s in sample_times]
    if any(b < a for a, b in zip([t0] + times, times)):
        raise ArgumentError("sample_times must be nondecreasing and >= t0")
    if not times:
        return []
    span = period if period is not None else times[-1] - t0
    out = []
    y = np.array(state0, dtype=float)
    t = t0
    for s in times:
        if s > t:
            y = integrate(rhs, t, s, y, cfg, period=span if span > 0 else None)
            t = s
        out.append(y.copy())
    return out


def rk4_triangular(
    block_rhs: Callable[[int, int, np.ndarray, list], np.ndarray],
    y0: Sequence[np.ndarray],
    t0: float,
    t1: float,
    n_steps: int,
) -> list[np.ndarray]:
    """Fixed-step RK4 for a block lower-triangular system, vectorised over steps.

    Block ``i`` obeys ``y_i' = G_i(t, y_0, ..., y_{i-1})``. Because no block
    depends on itself, the RK4 stages of block ``i`` on every step follow from
    the (already known) stage values of the lower blocks, so each block is
    advanced over the whole grid at once. The arithmetic is the same as
    stepping the stacked system with :func:`rk4_step`.

    ``block_rhs(i, stage, times, lower)`` returns ``G_i`` with a leading step
    axis of length ``n_steps``; ``stage`` is 0..3, ``times`` the stage times,
    and ``lower[j]`` the stage values of block ``j`` (leading step axis).

    Returns the node values of every block, each with a leading axis of
    length ``n_steps + 1``.
    """
    h = (t1 - t0) / n_steps
    tn = t0 + np.arange(n_steps) * h
    times = (tn, tn + 0.5 * h, tn + 0.5 * h, tn + h)
    stages: list[list[np.ndarray]] = [[], [], [], []]
    nodes = []
    for i, start in enumerate(y0):
        start = np.asarray(start, dtype=float)
        # block i does not feed its own stages, so all four are known up front
        k = [np.asarray(block_rhs(i, s, times[s], list(stages[s])), dtype=float) for s in range(4)]
        inc = (h / 6.0) * (k[0] + 2.0 * k[1] + 2.0 * k[2] + k[3])
        y = np.cumsum(np.concatenate([start[None], inc]), axis=0)
        if not np.all(np.isfinite(y)):
            bad = int(np.argmax(~np.all(np.isfinite(y.reshape(len(y), -1)), axis=1)))
            raise BlowUpError("non-finite state", float(t0 + bad * h))
        yn = y[:-1]
        stages[0].append(yn)
        stages[1].append(yn + (0.5 * h) * k[0])
        stages[2].append(yn + (0.5 * h) * k[1])
        stages[3].append(yn + h * k[2])
        nodes.append(y)
    return nodes
