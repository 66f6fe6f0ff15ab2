"""Higher-order averaging for periodic perturbations in standard form.

For ``x' = sum_i eps**i F_i(t, x)`` with T-periodic fields, avgkit computes
the averaged functions ``f_i`` of the time-T map, the stroboscopic averaged
functions ``g_i`` of the autonomous averaged equation, and the T-periodic
solutions predicted by simple zeros of the first non-vanishing ``f_l``.
"""

__version__ = "0.1.0"

from .bell import BellTerm, bell_apply, bell_apply_tpoly, bell_terms
from .errors import AvgkitError
from .expr import VectorField, diff, evaluate, frechet_tensor, parse, to_source
from .melnikov import YStack, averaged_f, compute_y, f2_direct, y_rhs
from .odeint import IntegratorConfig, integrate, integrate_dense
from .orbits import OrbitValidation, ZeroResult, find_zero, validate_orbit
from .strobo import FDConfig, GSeries, first_nonvanishing, g2_closed_form, strobo_g, tilde_y_step
from .studies import closeness_study, loglog_slope, order_study
from .system import System, load_system
from .timemap import displacement
from .tpoly import TPoly, tpoly_integrate0

__all__ = [
    "AvgkitError",
    "BellTerm",
    "FDConfig",
    "GSeries",
    "IntegratorConfig",
    "OrbitValidation",
    "System",
    "TPoly",
    "VectorField",
    "YStack",
    "ZeroResult",
    "averaged_f",
    "bell_apply",
    "bell_apply_tpoly",
    "bell_terms",
    "closeness_study",
    "compute_y",
    "diff",
    "displacement",
    "evaluate",
    "f2_direct",
    "find_zero",
    "first_nonvanishing",
    "frechet_tensor",
    "g2_closed_form",
    "integrate",
    "integrate_dense",
    "load_system",
    "loglog_slope",
    "order_study",
    "parse",
    "strobo_g",
    "tilde_y_step",
    "to_source",
    "tpoly_integrate0",
    "validate_orbit",
    "y_rhs",
]
