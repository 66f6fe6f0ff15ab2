"""The time-T map of the full equation and its displacement ``x(T, z, eps) - z``.

The deviation ``w = x - z`` is integrated instead of ``x`` itself, so that a
displacement of size eps is not swamped by roundoff in ``z``.
"""

from __future__ import annotations

import numpy as np

from .errors import ArgumentError
from .odeint import DEFAULT_CONFIG, IntegratorConfig, integrate
from .system import System


def _batch_rhs(system: System, Z: np.ndarray, eps: float):
    """``sum_i eps**i F_i(t, Z + w)`` for states ``w`` of shape (n, B)."""
    full = system.full_rhs(eps)
    base = Z.T
    return lambda t, w: full(t, base + w)


def displacement_batch(
    system: System,
    Z,
    eps: float,
    cfg: IntegratorConfig = DEFAULT_CONFIG,
    t_end: float | None = None,
) -> np.ndarray:
    """``x(t_end, z, eps) - z`` for every row ``z`` of ``Z`` (shape (B, n)) in one solve."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if Z.shape[1] != system.n:
        raise ArgumentError(f"points must have {system.n} coordinates")
    t_end = system.T if t_end is None else float(t_end)
    if eps == 0.0 or t_end == 0.0:
        return np.zeros_like(Z)
    w = integrate(_batch_rhs(system, Z, eps), 0.0, t_end, np.zeros(Z.T.shape), cfg, period=system.T)
    return w.T


def displacement(system: System, z, eps: float, cfg: IntegratorConfig = DEFAULT_CONFIG) -> np.ndarray:
    """``x(T, z, eps) - z`` for the full right-hand side truncated at order k."""
    z = np.asarray(z, dtype=float)
    if z.shape != (system.n,):
        raise ArgumentError(f"z must have shape ({system.n},)")
    return displacement_batch(system, z[None, :], eps, cfg)[0]


def trajectory_at(
    system: System,
    z,
    eps: float,
    times,
    cfg: IntegratorConfig = DEFAULT_CONFIG,
) -> np.ndarray:
    """States ``x(t, z, eps)`` at the nondecreasing ``times`` (rows), starting from t = 0."""
    z = np.asarray(z, dtype=float)
    rhs = _batch_rhs(system, z[None, :], eps)
    out = []
    w = np.zeros((system.n, 1))
    t = 0.0
    for s in times:
        if s < t:
            raise ArgumentError("times must be nondecreasing and >= 0")
        if s > t:
            w = integrate(rhs, t, s, w, cfg, period=system.T)
            t = s
        out.append(z + w[:, 0])
    return np.array(out)
