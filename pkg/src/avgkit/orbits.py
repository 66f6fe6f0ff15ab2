"""Simple zeros of averaged functions and the T-periodic orbits they predict.

A simple zero ``z*`` of the first non-vanishing averaged function ``f_l``
continues, for small eps, to a fixed point ``z_eps`` of the time-T map of the
full equation. :func:`find_zero` locates ``z*`` and :func:`validate_orbit`
solves ``x(T, z, eps) - z = 0`` near it for a list of eps values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .errors import ArgumentError, AvgkitError, ConvergenceError
from .odeint import DEFAULT_CONFIG, IntegratorConfig
from .studies import loglog_slope
from .system import System
from .timemap import displacement, displacement_batch

NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 50
MAX_HALVINGS = 8
FD_REL_STEP = 1e-6
SIMPLE_RTOL = 1e-6
ORBIT_TOL = 1e-9
ISOLATED_SIGMA = 1e-8
# ratio of successive residuals above which Newton is judged to converge only linearly
LINEAR_RATIO = 0.05

PointFn = Callable[[np.ndarray], np.ndarray]


@dataclass
class ZeroResult:
    """Outcome of :func:`find_zero`.

    ``simple`` requires the smallest singular value of the Jacobian to exceed
    ``1e-6 * ||J||`` and the Newton residuals not to shrink only linearly (the
    signature of a multiple root, which the singular-value test cannot see
    when n = 1).
    """

    z_star: np.ndarray
    jacobian: np.ndarray
    residual_norm: float
    simple: bool
    iterations: int
    converged: bool = True
    method: str = "newton"
    sigma_min: float = float("nan")
    residual_history: list[float] = field(default_factory=list)


def fd_jacobian(f: PointFn, z, rel_step: float = FD_REL_STEP, f_batch=None) -> np.ndarray:
    """Central-difference Jacobian with step ``rel_step * (1 + |z|)``."""
    z = np.asarray(z, dtype=float)
    n = len(z)
    h = rel_step * (1.0 + float(np.linalg.norm(z)))
    shifts = np.eye(n) * h
    points = np.concatenate([z + shifts, z - shifts])
    if f_batch is not None:
        vals = np.asarray(f_batch(points), dtype=float)
    else:
        vals = np.array([np.atleast_1d(f(p)) for p in points], dtype=float)
    return ((vals[:n] - vals[n:]) / (2.0 * h)).T


def _norm(v) -> float:
    return float(np.linalg.norm(v))


def _singular_values(J: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(J)):
        return np.zeros(min(J.shape))
    return np.linalg.svd(J, compute_uv=False)


def _is_simple(J: np.ndarray, history: list[float]) -> tuple[bool, float]:
    sv = _singular_values(J)
    sigma_min = float(sv.min()) if sv.size else 0.0
    well_conditioned = sigma_min > SIMPLE_RTOL * float(sv.max()) if sv.size else False
    linear = (
        len(history) >= 4
        and history[-2] > 0
        and history[-3] > 0
        and history[-1] / history[-2] > LINEAR_RATIO
        and history[-2] / history[-3] > LINEAR_RATIO
    )
    return bool(well_conditioned and not linear), sigma_min


def _bisection_1d(f: PointFn, z: float):
    """Bracket a sign change around ``z`` by doubling and refine it with Brent's method."""
    g = lambda s: float(np.atleast_1d(f(np.array([s])))[0])  # noqa: E731
    scale = 1.0 + abs(z)
    for j in range(40):
        d = 1e-3 * scale * 2.0**j
        for a, b in ((z - d, z), (z, z + d)):
            try:
                ga, gb = g(a), g(b)
            except AvgkitError:
                continue
            if np.sign(ga) != np.sign(gb):
                root = brentq(g, a, b, xtol=1e-15 * scale, rtol=4 * np.finfo(float).eps, maxiter=500)
                return root, abs(g(root))
    return None


def find_zero(
    f: PointFn,
    z0,
    tol: float = NEWTON_TOL,
    max_iter: int = NEWTON_MAX_ITER,
    *,
    f_batch: Callable[[np.ndarray], np.ndarray] | None = None,
    raise_on_failure: bool = True,
) -> ZeroResult:
    """Damped Newton iteration for ``f(z) = 0`` from ``z0``.

    The Jacobian is a central finite difference with step ``1e-6 * (1 + |z|)``.
    When a full step does not reduce ``|f|`` it is halved up to eight times.
    In one dimension a stalled iteration falls back to bracketing and Brent's
    method. ``f_batch``, if given, maps an array of points (B, n) to values
    (B, n) and is used for the Jacobian stencils.

    Raises :class:`~avgkit.errors.ConvergenceError` (with the last iterate in
    ``.result``) when ``|f| < tol`` is not reached, unless
    ``raise_on_failure`` is false, in which case the result is returned with
    ``converged=False``.
    """
    z = np.atleast_1d(np.asarray(z0, dtype=float)).copy()
    if z.ndim != 1:
        raise ArgumentError("z0 must be a vector")
    n = len(z)
    fz = np.atleast_1d(np.asarray(f(z), dtype=float))
    if fz.shape != (n,):
        raise ArgumentError(f"f must map R^{n} to R^{n}")
    res = _norm(fz)
    history = [res]
    iterations = 0
    stalled = False
    while not res < tol and iterations < max_iter:
        J = fd_jacobian(f, z, f_batch=f_batch)
        if not np.all(np.isfinite(J)):
            stalled = True
            break
        dz = np.linalg.lstsq(J, -fz, rcond=None)[0]
        lam = 1.0
        accepted = False
        for _ in range(MAX_HALVINGS + 1):
            trial = z + lam * dz
            try:
                ft = np.atleast_1d(np.asarray(f(trial), dtype=float))
            except AvgkitError:
                ft = np.full(n, np.nan)
            rt = _norm(ft)
            if rt < res:
                accepted = True
                break
            lam *= 0.5
        if not accepted:
            stalled = True
            break
        z, fz, res = trial, ft, rt
        history.append(res)
        iterations += 1

    method = "newton"
    if not res < tol and n == 1:
        found = _bisection_1d(f, float(z[0]))
        if found is not None and found[1] < res:
            z = np.array([found[0]])
            fz = np.atleast_1d(np.asarray(f(z), dtype=float))
            res = _norm(fz)
            method = "bisection"

    J = fd_jacobian(f, z, f_batch=f_batch)
    simple, sigma_min = _is_simple(J, history)
    result = ZeroResult(
        z_star=z,
        jacobian=J,
        residual_norm=res,
        simple=simple,
        iterations=iterations,
        converged=bool(res < tol),
        method=method,
        sigma_min=sigma_min,
        residual_history=history,
    )
    if not result.converged and raise_on_failure:
        why = "step could not reduce the residual" if stalled else f"no convergence in {max_iter} iterations"
        raise ConvergenceError(f"{why}; |f| = {res:.3e} at z = {z.tolist()}", result)
    return result


@dataclass
class OrbitEntry:
    """Fixed-point search of the time-T map at one eps."""

    eps: float
    z_eps: np.ndarray | None
    distance: float
    displacement_norm: float
    converged: bool
    isolated: bool
    sigma_min: float
    iterations: int
    message: str = ""


@dataclass
class OrbitValidation:
    z_star: np.ndarray
    entries: list[OrbitEntry]
    slope_estimate: float | None

    @property
    def eps_list(self) -> list[float]:
        return [e.eps for e in self.entries]

    @property
    def z_eps(self) -> list[np.ndarray | None]:
        return [e.z_eps for e in self.entries]

    @property
    def distances(self) -> list[float]:
        return [e.distance for e in self.entries]

    @property
    def all_converged(self) -> bool:
        return all(e.converged for e in self.entries)

    @property
    def monotone(self) -> bool:
        """Whether ``|z_eps - z*|`` is nonincreasing along the (decreasing) eps list."""
        d = [e.distance for e in self.entries if e.converged]
        return all(b <= a for a, b in zip(d, d[1:]))


def orbit_tol(z) -> float:
    return ORBIT_TOL * (1.0 + _norm(z))


def validate_orbit(
    system: System,
    z_star,
    eps_list,
    cfg: IntegratorConfig = DEFAULT_CONFIG,
    max_iter: int = 30,
) -> OrbitValidation:
    """Continue the zero ``z_star`` to fixed points of the time-T map of the full equation.

    For each eps (sorted into decreasing order) Newton's method on
    ``z -> x(T, z, eps) - z`` starts at ``z_star``. An entry is converged when
    its displacement is below ``1e-9 * (1 + |z_eps|)``, and isolated when the
    displacement Jacobian has smallest singular value above 1e-8. Failures
    are recorded per entry. The slope of ``log |z_eps - z*|`` against
    ``log eps`` over converged entries is reported when two or more exist.
    """
    z_star = np.atleast_1d(np.asarray(z_star, dtype=float))
    if z_star.shape != (system.n,):
        raise ArgumentError(f"z_star must have shape ({system.n},)")
    eps_values = [float(e) for e in eps_list]
    if any(not (e > 0 and np.isfinite(e)) for e in eps_values):
        raise ArgumentError("eps values must be positive and finite")
    eps_values = sorted(set(eps_values), reverse=True)

    entries = []
    for eps in eps_values:
        D = lambda z, eps=eps: displacement(system, z, eps, cfg)  # noqa: E731
        Db = lambda Z, eps=eps: displacement_batch(system, Z, eps, cfg)  # noqa: E731
        try:
            res = find_zero(
                D, z_star, tol=0.01 * orbit_tol(z_star), max_iter=max_iter, f_batch=Db, raise_on_failure=False
            )
        except AvgkitError as exc:
            entries.append(OrbitEntry(eps, None, float("nan"), float("nan"), False, False, float("nan"), 0, str(exc)))
            continue
        z_eps = res.z_star
        certified = res.residual_norm < orbit_tol(z_eps)
        isolated = res.sigma_min > ISOLATED_SIGMA
        message = "" if certified else f"displacement {res.residual_norm:.3e} above orbit tolerance"
        entries.append(
            OrbitEntry(
                eps=eps,
                z_eps=z_eps,
                distance=_norm(z_eps - z_star),
                displacement_norm=res.residual_norm,
                converged=bool(certified),
                isolated=bool(isolated),
                sigma_min=res.sigma_min,
                iterations=res.iterations,
                message=message,
            )
        )
    good = [e for e in entries if e.converged and e.distance > 0]
    slope = loglog_slope([e.eps for e in good], [e.distance for e in good]) if len(good) >= 2 else None
    return OrbitValidation(z_star, entries, slope)


__all__ = [
    "ZeroResult",
    "OrbitEntry",
    "OrbitValidation",
    "find_zero",
    "fd_jacobian",
    "displacement",
    "displacement_batch",
    "validate_orbit",
    "orbit_tol",
]
