"""``avgkit`` command line: check system files, compute f and g, find orbits, run order studies.

Exit status is 0 on success, 1 for bad input (unreadable or invalid files,
bad flags) and 2 when a numerical step fails.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from dataclasses import asdict

import numpy as np

from . import __version__
from .errors import (
    AllOrdersVanish,
    ArgumentError,
    AvgkitError,
    ParseError,
    SystemFileError,
)
from .melnikov import averaged_f
from .odeint import DEFAULT_CONFIG, IntegratorConfig
from .orbits import (
    FD_REL_STEP,
    ISOLATED_SIGMA,
    MAX_HALVINGS,
    NEWTON_MAX_ITER,
    NEWTON_TOL,
    ORBIT_TOL,
    SIMPLE_RTOL,
    find_zero,
    validate_orbit,
)
from .strobo import DEFAULT_FD, TAU_ZERO, FDConfig, first_nonvanishing, strobo_g
from .studies import order_study
from .system import System, check_system_dict, load_system

SCHEMA_VERSION = 1
EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2
DEFAULT_STUDY_EPS = (1e-2, 10**-2.5, 1e-3, 10**-3.5)
DEFAULT_ORBIT_EPS = (0.05, 0.02, 0.01)
PROBE_POINTS = 16


class InputError(Exception):
    """Bad command-line input; reported with exit status 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _vector(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not values or not all(math.isfinite(v) for v in values):
        raise argparse.ArgumentTypeError(f"expected finite comma-separated numbers, got {text!r}")
    return values


def _positive_list(text: str) -> list[float]:
    values = _vector(text) if text.strip() else []
    if any(v <= 0 for v in values):
        raise argparse.ArgumentTypeError("eps values must be positive")
    return values


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("system", help="system file (JSON)")
    common.add_argument("--steps", type=int, default=DEFAULT_CONFIG.steps_per_period,
                        help="fixed RK4 steps per period (default %(default)s)")
    common.add_argument("--format", choices=("table", "csv", "json"), default="table")
    common.add_argument("--out", metavar="PATH", help="also write the JSON result to PATH")
    common.add_argument("--no-footer", action="store_true", help="omit the timing footer of tables")
    common.add_argument("--show-config", action="store_true", help="print every numerical default first")

    parser = _Parser(prog="avgkit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("check", parents=[common], help="validate a system file")

    p = sub.add_parser("f", parents=[common], help="averaged functions f_1..f_k at a point")
    p.add_argument("--z", type=_vector, required=True, help="base point, e.g. 0.5,-1")
    p.add_argument("--order", type=int, help="highest order (default k)")

    p = sub.add_parser("g", parents=[common], help="stroboscopic averaged functions g_1..g_k at a point")
    p.add_argument("--z", type=_vector, required=True)
    p.add_argument("--order", type=int, help="highest order (default min(k, 4))")
    p.add_argument("--fd", choices=("default", "high"), default="default",
                   help="finite-difference preset; 'high' uses fourth-order stencils")

    p = sub.add_parser("orbit", parents=[common], help="zero of the first non-vanishing f and periodic orbits")
    p.add_argument("--z0", type=_vector, help="Newton starting point (default: centre of the sample box)")
    p.add_argument("--eps-list", type=_positive_list, default=list(DEFAULT_ORBIT_EPS),
                   help="comma-separated eps values; empty for zero finding only")

    p = sub.add_parser("order-study", parents=[common], help="log-log slope of the time-T residual in eps")
    p.add_argument("--z", type=_vector, required=True)
    p.add_argument("--eps-list", type=_positive_list, default=list(DEFAULT_STUDY_EPS))
    p.add_argument("--order", type=int, help="truncation order of the series (default k)")
    return parser


# ---------------------------------------------------------------------------
# configuration dump


def config_dict(cfg: IntegratorConfig, fd: FDConfig) -> dict:
    return {
        "integrator": asdict(cfg),
        "finite_differences": {
            "base": fd.base,
            "level_growth": fd.level_growth,
            "accuracy": fd.accuracy,
            "max_points": fd.max_points,
            "step_rule": f"(base*level_growth**(s-1))**(1/(m+{fd.accuracy}))*(1+|z|)",
        },
        "tau_zero": TAU_ZERO,
        "newton": {
            "tol": NEWTON_TOL,
            "max_iter": NEWTON_MAX_ITER,
            "max_halvings": MAX_HALVINGS,
            "jacobian_rel_step": FD_REL_STEP,
            "simple_rtol": SIMPLE_RTOL,
        },
        "orbit": {"tol": f"{ORBIT_TOL}*(1+|z|)", "isolated_sigma": ISOLATED_SIGMA},
        "probe_points": PROBE_POINTS,
    }


# ---------------------------------------------------------------------------
# output helpers


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, (int, np.integer)):
        return str(v)
    if isinstance(v, (float, np.floating)):
        return f"{float(v): .12e}" if math.isfinite(v) else str(float(v))
    if v is None:
        return "-"
    return str(v)


def _table(header: list[str], rows: list[list]) -> str:
    cells = [header] + [[_fmt(v) for v in row] for row in rows]
    widths = [max(len(r[c]) for r in cells) for c in range(len(header))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _csv(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue().rstrip("\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _dump_json(payload: dict) -> str:
    return json.dumps(_jsonable(payload), indent=2, sort_keys=False)


class Report:
    """Collects a command's tables and machine-readable payload, then emits them."""

    def __init__(self, args, command: str, system: System | None, cfg, fd):
        self.args = args
        self.payload = {"schema_version": SCHEMA_VERSION, "command": command}
        if system is not None:
            self.payload["system"] = {"name": system.name, "n": system.n, "k": system.k, "T": system.T}
        self.payload["config"] = config_dict(cfg, fd)
        self.sections: list[tuple[str, list[str], list[list]]] = []
        self.notes: list[str] = []
        self.started = time.perf_counter()

    def section(self, title: str, header: list[str], rows: list[list]):
        self.sections.append((title, header, rows))

    def emit(self, out=None):
        out = sys.stdout if out is None else out
        text = _dump_json(self.payload)
        if self.args.out:
            with open(self.args.out, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        fmt = self.args.format
        if fmt == "json":
            print(text, file=out)
            return
        if self.args.show_config:
            print(_dump_json(self.payload["config"]), file=out)
        blocks = []
        for title, header, rows in self.sections:
            if fmt == "csv":
                blocks.append(f"# {title}\n" + _csv(header, rows))
            else:
                blocks.append(f"{title}\n" + _table(header, rows))
        print("\n\n".join(blocks), file=out)
        for note in self.notes:
            print(("# " if fmt == "csv" else "") + note, file=out)
        if fmt == "table" and not self.args.no_footer:
            print(f"\n[{time.perf_counter() - self.started:.2f} s]", file=out)


# ---------------------------------------------------------------------------
# commands


def _config(args) -> IntegratorConfig:
    try:
        return IntegratorConfig(steps_per_period=args.steps)
    except ArgumentError as exc:
        raise InputError(f"--steps: {exc}")


def _point(args, system: System, attr: str = "z") -> np.ndarray:
    z = getattr(args, attr)
    if len(z) != system.n:
        raise InputError(f"--{attr.replace('_', '-')} needs {system.n} values, got {len(z)}")
    return np.array(z, dtype=float)


def _order(args, system: System, default: int) -> int:
    order = default if args.order is None else args.order
    if not 1 <= order <= system.k:
        raise InputError(f"--order must be in 1..{system.k}")
    return order


def _labels(prefix: str, n: int) -> list[str]:
    return [f"{prefix}[{c + 1}]" for c in range(n)]


def cmd_check(args) -> int:
    try:
        with open(args.system, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise InputError(f"{args.system}: {exc.strerror}")
    except json.JSONDecodeError as exc:
        raise InputError(f"{args.system}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}")
    problems, system, dev = check_system_dict(data)
    report = Report(args, "check", system, _config(args), DEFAULT_FD)
    report.payload["valid"] = not problems
    report.payload["periodicity_deviation"] = dev
    report.payload["problems"] = [{"location": p.location, "cause": p.cause} for p in problems]
    rows = [[p.location, p.cause] for p in problems]
    if problems:
        report.section(f"{args.system}: INVALID", ["location", "cause"], rows)
    else:
        report.section(
            f"{args.system}: OK",
            ["name", "n", "k", "T", "periodicity deviation"],
            [[system.name, system.n, system.k, system.T, dev]],
        )
    report.emit()
    return EXIT_OK if not problems else EXIT_INPUT


def cmd_f(args, system: System) -> int:
    cfg = _config(args)
    z = _point(args, system)
    order = _order(args, system, system.k)
    f = averaged_f(system, z, cfg, order)
    report = Report(args, "f", system, cfg, DEFAULT_FD)
    report.payload.update({"z": z, "order": order, "f": f})
    report.section(f"f_i(z) at z = {z.tolist()}", ["i"] + _labels("f_i", system.n),
                   [[i + 1] + list(v) for i, v in enumerate(f)])
    report.emit()
    return EXIT_OK


def cmd_g(args, system: System) -> int:
    cfg = _config(args)
    fd = FDConfig.high_accuracy() if args.fd == "high" else DEFAULT_FD
    z = _point(args, system)
    order = _order(args, system, min(system.k, 4))
    series = strobo_g(system, z, cfg, fd, order)
    f = averaged_f(system, z, cfg, order)
    gaps = [float(np.linalg.norm(f[i] - system.T * series.g[i])) for i in range(order)]
    report = Report(args, "g", system, cfg, fd)
    report.payload.update({
        "z": z,
        "order": order,
        "g": series.g,
        "f": f,
        "f_minus_T_g": gaps,
        "fd_steps": {str(m): h for m, h in series.diagnostics["fd_steps"].items()},
        "f_points": series.diagnostics["f_points"],
    })
    rows = [[i + 1] + list(series.g[i]) + [gaps[i]] for i in range(order)]
    report.section(f"g_i(z) at z = {z.tolist()}", ["i"] + _labels("g_i", system.n) + ["|f_i - T g_i|"], rows)
    report.notes.append("|f_i - T g_i| vanishes for the first non-vanishing order; elsewhere it need not.")
    report.emit()
    return EXIT_OK


def cmd_orbit(args, system: System) -> int:
    cfg = _config(args)
    lo, hi = system.sample_box()
    z0 = _point(args, system, "z0") if args.z0 is not None else 0.5 * (lo + hi)
    probes = np.random.default_rng(0).uniform(lo, hi, size=(PROBE_POINTS, system.n))
    report = Report(args, "orbit", system, cfg, DEFAULT_FD)
    vanishing = first_nonvanishing(system, probes, cfg)
    ell = vanishing.order
    f_ell = lambda z: averaged_f(system, z, cfg, ell)[ell - 1]  # noqa: E731
    zero = find_zero(f_ell, z0)
    report.payload.update({
        "first_nonvanishing_order": ell,
        "zero": {
            "z_star": zero.z_star,
            "residual_norm": zero.residual_norm,
            "simple": zero.simple,
            "iterations": zero.iterations,
            "method": zero.method,
            "sigma_min": zero.sigma_min,
            "jacobian": zero.jacobian,
        },
    })
    report.section(
        f"zero of f_{ell}",
        _labels("z*", system.n) + ["|f_l(z*)|", "simple", "iterations", "sigma_min"],
        [list(zero.z_star) + [zero.residual_norm, zero.simple, zero.iterations, zero.sigma_min]],
    )
    status = EXIT_OK
    if not zero.simple:
        report.notes.append("zero is not simple; orbit validation skipped")
        report.payload["validation"] = None
        status = EXIT_NUMERIC
    else:
        val = validate_orbit(system, zero.z_star, args.eps_list, cfg)
        report.payload["validation"] = {
            "entries": [
                {
                    "eps": e.eps,
                    "z_eps": e.z_eps,
                    "distance": e.distance,
                    "displacement_norm": e.displacement_norm,
                    "converged": e.converged,
                    "isolated": e.isolated,
                    "sigma_min": e.sigma_min,
                    "iterations": e.iterations,
                    "message": e.message,
                }
                for e in val.entries
            ],
            "slope_estimate": val.slope_estimate,
        }
        if val.entries:
            rows = [
                [e.eps] + (list(e.z_eps) if e.z_eps is not None else [None] * system.n)
                + [e.distance, e.displacement_norm, e.converged, e.isolated]
                for e in val.entries
            ]
            report.section(
                "fixed points of the time-T map",
                ["eps"] + _labels("z_eps", system.n) + ["|z_eps - z*|", "|displacement|", "converged", "isolated"],
                rows,
            )
            report.notes.append(f"log-log slope of |z_eps - z*|: {_fmt(val.slope_estimate)}")
        if not val.all_converged:
            status = EXIT_NUMERIC
    report.emit()
    return status


def cmd_order_study(args, system: System) -> int:
    cfg = _config(args)
    z = _point(args, system)
    order = _order(args, system, system.k)
    study = order_study(system, z, args.eps_list, cfg, order)
    report = Report(args, "order-study", system, cfg, DEFAULT_FD)
    report.payload.update({
        "z": z,
        "order": order,
        "eps": study.eps,
        "residuals": study.residuals,
        "slope": study.slope,
        "expected_slope": study.expected_slope,
    })
    report.section(f"time-T residual at z = {z.tolist()}", ["eps", "residual"],
                   [[e, r] for e, r in zip(study.eps, study.residuals)])
    report.notes.append(f"slope {study.slope:.4f} (expected {study.expected_slope})")
    report.emit()
    return EXIT_OK


COMMANDS = {"f": cmd_f, "g": cmd_g, "orbit": cmd_orbit, "order-study": cmd_order_study}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "check":
            return cmd_check(args)
        try:
            system = load_system(args.system)
        except OSError as exc:
            raise InputError(f"{args.system}: {exc.strerror}")
        return COMMANDS[args.command](args, system)
    except (InputError, SystemFileError, ParseError, ArgumentError) as exc:
        print(f"avgkit: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except AllOrdersVanish as exc:
        print(f"avgkit: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except AvgkitError as exc:
        print(f"avgkit: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
