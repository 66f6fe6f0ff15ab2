"""Convergence studies in eps: expansion order of the time-T map and averaging closeness."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError
from .melnikov import averaged_f
from .odeint import DEFAULT_CONFIG, IntegratorConfig, rk4_step
from .strobo import DEFAULT_FD, DEFAULT_MAX_ORDER, FDConfig, averaged_rhs
from .system import System
from .timemap import displacement, trajectory_at

MIN_STUDY_POINTS = 3
CLOSENESS_STEPS_PER_PERIOD = 256
# bound on eps * h for the averaged equation's RK4 steps
AVERAGED_EPS_STEP = 0.01


def loglog_slope(xs, ys) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise ArgumentError("need at least two (x, y) pairs of equal length")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ArgumentError("log-log fit needs positive values")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def _eps_values(eps_list) -> list[float]:
    eps = [float(e) for e in eps_list]
    if len(eps) < MIN_STUDY_POINTS:
        raise ArgumentError(f"need >= {MIN_STUDY_POINTS} points in the eps list, got {len(eps)}")
    if any(not (e > 0 and math.isfinite(e)) for e in eps):
        raise ArgumentError("eps values must be positive and finite")
    return eps


@dataclass
class OrderStudy:
    order: int
    eps: list[float]
    residuals: list[float]
    slope: float

    @property
    def expected_slope(self) -> int:
        return self.order + 1


def order_study(
    system: System,
    z,
    eps_list,
    cfg: IntegratorConfig = DEFAULT_CONFIG,
    order: int | None = None,
) -> OrderStudy:
    """Residual ``|x(T, z, eps) - z - sum_{i<=order} eps**i f_i(z)|`` per eps and its log-log slope.

    The residual is of order ``eps**(order+1)``, so the slope should be near
    ``order + 1`` (``order`` defaults to k).
    """
    eps = _eps_values(eps_list)
    order = system.k if order is None else order
    if not 1 <= order <= system.k:
        raise ArgumentError(f"order must be in 1..{system.k}")
    z = np.asarray(z, dtype=float)
    f = averaged_f(system, z, cfg, order)
    residuals = []
    for e in eps:
        series = sum(e ** (i + 1) * f[i] for i in range(order))
        residuals.append(float(np.linalg.norm(displacement(system, z, e, cfg) - series)))
    return OrderStudy(order, eps, residuals, loglog_slope(eps, residuals))


@dataclass
class ClosenessStudy:
    order: int
    eps: list[float]
    periods: list[int]
    deviations: list[float]
    slope: float


def averaged_trajectory(
    system: System,
    xi0,
    eps: float,
    periods: int,
    cfg: IntegratorConfig = DEFAULT_CONFIG,
    fd: FDConfig = DEFAULT_FD,
    order: int | None = None,
) -> np.ndarray:
    """Solution of ``xi' = sum_{i<=order} eps**i g_i(xi)`` at t = T, 2T, ..., periods*T.

    Fixed RK4 with ``ceil(eps*T / 0.01)`` steps per period.
    """
    rhs = averaged_rhs(system, eps, cfg, fd, order)
    per = max(1, math.ceil(eps * system.T / AVERAGED_EPS_STEP))
    h = system.T / per
    xi = np.asarray(xi0, dtype=float)
    out = []
    for p in range(periods):
        for s in range(per):
            xi = rk4_step(rhs, (p * per + s) * h, xi, h)
        out.append(xi)
    return np.array(out)


def closeness_study(
    system: System,
    z0,
    eps_list,
    order: int | None = None,
    cfg: IntegratorConfig = DEFAULT_CONFIG,
    fd: FDConfig = DEFAULT_FD,
    steps_per_period: int = CLOSENESS_STEPS_PER_PERIOD,
) -> ClosenessStudy:
    """Largest ``|x(nT) - xi(nT)|`` over ``nT <= 1/eps`` between the full and averaged solutions.

    Both start at ``z0``. The averaged equation is truncated at ``order``
    (default ``min(k, 4)``), so the deviation should scale like ``eps**order``.
    The full equation uses ``steps_per_period`` fixed RK4 steps per period;
    the f values inside the g's use ``cfg``.
    """
    eps = _eps_values(eps_list)
    order = min(system.k, DEFAULT_MAX_ORDER) if order is None else order
    full_cfg = IntegratorConfig(steps_per_period=steps_per_period)
    z0 = np.asarray(z0, dtype=float)
    periods, deviations = [], []
    for e in eps:
        N = max(1, math.floor(1.0 / (e * system.T)))
        times = system.T * np.arange(1, N + 1)
        full = trajectory_at(system, z0, e, times, full_cfg)
        avg = averaged_trajectory(system, z0, e, N, cfg, fd, order)
        periods.append(N)
        deviations.append(float(np.max(np.linalg.norm(full - avg, axis=1))))
    return ClosenessStudy(order, eps, periods, deviations, loglog_slope(eps, deviations))
