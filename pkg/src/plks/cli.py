"""Command-line surface: solve, classify, sweep, and export profile tables.

Every command produces a CSV table and a JSON report carrying the same
columns plus configuration, derived constants, and result metadata.  All
floating-point output uses 17-significant-digit decimal formatting, so a
given configuration yields byte-identical files on every run and each
printed value parses back to the exact double that was computed.  Nothing
in the pipeline draws random numbers.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .backward import (
    ClassifyOptions,
    ProfileClass,
    classify,
    find_critical_a,
    solve_backward,
    sweep_a,
)
from .errors import (
    AmbiguousBracketError,
    BadBracketError,
    DeltaTestError,
    DomainError,
    EnergyLawError,
    IllPosedPotentialError,
    InfiniteMassError,
    InsufficientRangeError,
    IntegrationError,
    NegativeBaseError,
    NoSupportRadiusError,
    NotEnoughZerosError,
    OutOfTimeDomainError,
)
from .forward import (
    CompactTail,
    ForwardOptions,
    LogQuadraticTail,
    PowerTail,
    fit_decay_rate,
    solve_forward,
    support_radius,
    support_radius_upper_bound,
)
from .params import (
    ModelParams,
    Regime,
    admissible_p_threshold,
    compact_support_admissible,
    derive_params,
)
from .radial_ode import IntegratorOptions, ProfileSolution, Termination
from .reconstruct import (
    Direction,
    assemble,
    delta_test,
    mass,
    phi_from_u,
    psi_from_phi,
    residual_grade_backward,
    residual_grade_forward,
    system_residual,
)

__all__ = ["main"]

_SOLVER_FAILURES = (
    IntegrationError,
    AmbiguousBracketError,
    NotEnoughZerosError,
    NegativeBaseError,
    IllPosedPotentialError,
    InfiniteMassError,
    NoSupportRadiusError,
    InsufficientRangeError,
    OutOfTimeDomainError,
    EnergyLawError,
    DeltaTestError,
)


# ---------------------------------------------------------------------------
# deterministic serialization

def _fmt(x: float) -> str:
    # fixed 17-significant-digit decimal: round-trips every finite double
    return "%.17g" % float(x)


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return _fmt(v)


def _csv_text(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_csv_cell(v) for v in row))
    return "\n".join(lines) + "\n"


def _jval(v, indent: int) -> str:
    if v is None:
        return "null"
    if v is True:
        return "true"
    if v is False:
        return "false"
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return _fmt(v) if math.isfinite(v) else "null"
    if isinstance(v, dict):
        if not v:
            return "{}"
        pad = "  " * (indent + 1)
        items = [pad + json.dumps(str(k)) + ": " + _jval(x, indent + 1)
                 for k, x in v.items()]
        return "{\n" + ",\n".join(items) + "\n" + "  " * indent + "}"
    if isinstance(v, (list, tuple)):
        if not v:
            return "[]"
        if all(not isinstance(x, (dict, list, tuple)) for x in v):
            return "[" + ", ".join(_jval(x, indent) for x in v) + "]"
        pad = "  " * (indent + 1)
        items = [pad + _jval(x, indent + 1) for x in v]
        return "[\n" + ",\n".join(items) + "\n" + "  " * indent + "]"
    raise TypeError(f"cannot serialize report value {v!r}")


def _json_text(report: dict) -> str:
    return _jval(report, 0) + "\n"


def _columns(header: Sequence[str], rows: Sequence[Sequence]) -> dict:
    cols: dict = {h: [] for h in header}
    for row in rows:
        for h, v in zip(header, row):
            if v is None or isinstance(v, (str, int)):
                cols[h].append(v)
            else:
                cols[h].append(float(v))
    return cols


def _report(command: str, config: dict, derived: dict, results: dict,
            header: Sequence[str], rows: Sequence[Sequence],
            tolerances: dict) -> dict:
    return {
        "schema": 1,
        "command": command,
        "config": config,
        "derived": derived,
        "results": results,
        "columns": _columns(header, rows),
        "wall_clock_s": None,
        "tolerances_met": tolerances,
    }


# ---------------------------------------------------------------------------
# shared blocks

def _integrator(args) -> IntegratorOptions:
    return IntegratorOptions(rel_tol=args.rel_tol, abs_tol=args.abs_tol,
                             event_tol=args.event_tol, r_max=args.r_max)


def _classify_opts(args) -> ClassifyOptions:
    return ClassifyOptions(slope_tol=args.slope_tol, r_scan=args.r_max,
                           integrator=IntegratorOptions(
                               rel_tol=args.rel_tol, abs_tol=args.abs_tol,
                               event_tol=args.event_tol))


def _config_echo(args, **specific) -> dict:
    # output routing (--output, --format) is deliberately not echoed: the
    # report depends only on what was computed, not where it was written
    cfg = {
        "N": args.N,
        "p": args.p,
        "chi": args.chi,
        "r_max": args.r_max,
        "rel_tol": args.rel_tol,
        "abs_tol": args.abs_tol,
        "event_tol": args.event_tol,
    }
    cfg.update(specific)
    return cfg


def _derived_block(params: ModelParams) -> dict:
    d = {
        "m": params.m,
        "alpha": params.alpha,
        "beta": params.beta,
        "gamma": params.gamma,
        "regime": params.regime.value,
    }
    if params.p != 2.0:
        d["q"] = params.q
        d["B"] = params.B
        d["u_star"] = params.u_star
    else:
        d["u_star_log"] = params.u_star_log
    if params.p > 2.0:
        d["lam"] = params.lam
    return d


def _phi_column(params: ModelParams, u: np.ndarray) -> np.ndarray:
    if params.regime is Regime.LINEAR:
        return np.exp(u)
    ex = (params.p - 1.0) / (params.p - 2.0)
    pos = np.maximum(u, 0.0)
    if params.regime is Regime.SLOW:
        return pos ** ex
    # fast regime: ex < 0, u stays positive; map stray zeros to 0 density
    out = np.zeros_like(pos)
    np.power(pos, ex, out=out, where=pos > 0.0)
    return out


def _profile_table(params: ModelParams, sol: ProfileSolution):
    phi = _phi_column(params, sol.u)
    header = ["r", "u", "w", "E", "phi"]
    rows = [(float(r), float(u), float(w), float(e), float(f))
            for r, u, w, e, f in zip(sol.r, sol.u, sol.w, sol.energy, phi)]
    return header, rows


def _energy_flags(params: ModelParams, sol: ProfileSolution):
    E = sol.energy
    scale = max(abs(float(E[0])), 1e-300)
    if params.N == 1:
        drift = float(np.max(np.abs(E - E[0])))
        ok = drift <= 1e-6 * scale
    else:
        drift = float(np.max(np.diff(E))) if len(E) > 1 else 0.0
        ok = drift <= 1e-8 * scale
    return drift, ok


def _tail_block(tail) -> Optional[dict]:
    if tail is None:
        return None
    if isinstance(tail, CompactTail):
        return {"kind": "compact", "radius": tail.radius}
    if isinstance(tail, PowerTail):
        return {"kind": "power", "exponent": tail.exponent,
                "coefficient": tail.coefficient}
    if isinstance(tail, LogQuadraticTail):
        return {"kind": "log-quadratic", "coefficient": tail.coefficient}
    raise TypeError(f"unknown tail {tail!r}")


def _class_block(c) -> dict:
    return {"a": c.a, "class": c.label, "R": c.R_of_a,
            "terminal_slope": c.terminal_slope, "reason": c.reason}


# ---------------------------------------------------------------------------
# command handlers

def cmd_solve_backward(args):
    params = derive_params(args.N, args.p, args.chi)
    sol = solve_backward(params, args.a, _integrator(args))
    if sol.termination in (Termination.STEP_UNDERFLOW, Termination.DIVERGED):
        raise IntegrationError(
            f"integration failed ({sol.termination.value}) at r = {sol.r_end:g}")
    header, rows = _profile_table(params, sol)
    drift, energy_ok = _energy_flags(params, sol)
    results = {
        "a": args.a,
        "termination": sol.termination.value,
        "n_steps": sol.n_steps,
        "n_rejected": sol.n_rejected,
        "r_end": sol.r_end,
        "u_end": float(sol.u[-1]),
        "zeros": [float(z) for z in sol.zeros()],
        "energy_initial": float(sol.energy[0]),
        "energy_final": float(sol.energy[-1]),
        "energy_drift": drift,
    }
    tol = {"energy_law": energy_ok}
    report = _report("solve-backward", _config_echo(args, a=args.a),
                     _derived_block(params), results, header, rows, tol)
    return report, header, rows


def cmd_solve_forward(args):
    params = derive_params(args.N, args.p, args.chi)
    fp = solve_forward(params, args.b, ForwardOptions(
        u_floor=args.u_floor, u_ceiling=args.u_ceiling,
        r_max=args.r_max, integrator=_integrator(args)))
    sol = fp.sol
    header, rows = _profile_table(params, sol)
    results = {
        "b": args.b,
        "regime": fp.regime.value,
        "termination": sol.termination.value,
        "n_steps": sol.n_steps,
        "n_rejected": sol.n_rejected,
        "r_end": sol.r_end,
        "u_end": float(sol.u[-1]),
        "support_radius": fp.support_radius,
        "tail": _tail_block(fp.tail),
    }
    tol = {"completed": sol.termination is not Termination.STEP_UNDERFLOW
           or fp.regime is Regime.LINEAR}
    if fp.support_radius is not None:
        edge = support_radius(fp)
        results["support"] = {
            "R_0": edge.R_0,
            "terminal_u_slope": edge.terminal_u_slope,
            "terminal_phi_slope": edge.terminal_phi_slope,
            "upper_bound": support_radius_upper_bound(params, args.b),
        }
        tol["support_within_bound"] = edge.R_0 <= results["support"]["upper_bound"]
    if args.fit_decay:
        fit = fit_decay_rate(fp)
        rel = abs(fit.limit_estimate - fit.target) / abs(fit.target)
        results["decay"] = {
            "limit_estimate": fit.limit_estimate,
            "target": fit.target,
            "rel_err": rel,
            "raw_estimate": fit.raw_estimate,
            "r_last": fit.r_last,
            "u_level_estimate": fit.u_level_estimate,
            "u_level_target": fit.u_level_target,
        }
        tol["decay_within_2pct"] = rel < 0.02
    report = _report("solve-forward",
                     _config_echo(args, b=args.b, fit_decay=args.fit_decay,
                                  u_floor=args.u_floor,
                                  u_ceiling=args.u_ceiling),
                     _derived_block(params), results, header, rows, tol)
    return report, header, rows


def cmd_find_critical(args):
    params = derive_params(args.N, args.p, args.chi)
    if not compact_support_admissible(params.N, params.p):
        raise DomainError(
            f"critical-height search needs an admissible slow exponent: "
            f"p = {params.p:g} is not above the ground-state admissibility "
            f"threshold {admissible_p_threshold(params.N):.6g} for N = {params.N}")
    if (args.a_lo is None) != (args.a_hi is None):
        raise DomainError("--a-lo and --a-hi must be given together")
    bracket = None if args.a_lo is None else (args.a_lo, args.a_hi)
    copts = _classify_opts(args)
    res = find_critical_a(params, bracket, copts, a_tol=args.a_tol)

    header = ["role", "a", "class", "R", "terminal_slope"]
    rows = []
    certificates = None
    if res.bracket_width > 0.0:
        half = res.bracket_width / 2.0
        c_lo = classify(params, res.a_c - half, copts)
        c_hi = classify(params, res.a_c + half, copts)
        certificates = {"lower": _class_block(c_lo), "upper": _class_block(c_hi)}
        rows.append(("lower", c_lo.a, c_lo.label, c_lo.R_of_a,
                     c_lo.terminal_slope))
    c_mid = res.classification
    rows.append(("critical", res.a_c, c_mid.label, res.R_c,
                 c_mid.terminal_slope))
    if certificates is not None:
        rows.append(("upper", certificates["upper"]["a"],
                     certificates["upper"]["class"],
                     certificates["upper"]["R"],
                     certificates["upper"]["terminal_slope"]))

    results = {
        "a_c": res.a_c,
        "bracket_width": res.bracket_width,
        "R_c": res.R_c,
        "n_iterations": res.n_iterations,
        "classification": _class_block(c_mid),
        "certificates": certificates,
    }
    tol = {
        "bracket_width_within_tol":
            res.bracket_width <= args.a_tol * res.a_c * (1.0 + 1e-12),
        "straddle_certified": certificates is not None
            and certificates["lower"]["class"] == "P"
            and certificates["upper"]["class"] in ("N", "N0"),
    }
    if params.N == 1:
        q = params.q
        exact = ((q + 1.0) / (params.m * params.chi)) ** (1.0 / q)
        rel = abs(res.a_c - exact) / exact
        results["closed_form_a_c"] = exact
        results["closed_form_rel_err"] = rel
        tol["closed_form_within_1e-6"] = rel < 1e-6
    report = _report("find-critical",
                     _config_echo(args, a_lo=args.a_lo, a_hi=args.a_hi,
                                  a_tol=args.a_tol, slope_tol=args.slope_tol),
                     _derived_block(params), results, header, rows, tol)
    return report, header, rows


def _parse_grid(spec: str) -> np.ndarray:
    parts = spec.split(":")
    if len(parts) != 4:
        raise DomainError(
            f"grid spec must be lin:lo:hi:n or log:lo:hi:n, got {spec!r}")
    kind, lo_s, hi_s, n_s = parts
    try:
        lo, hi, n = float(lo_s), float(hi_s), int(n_s)
    except ValueError:
        raise DomainError(f"malformed grid spec {spec!r}") from None
    if n < 2 or not (lo < hi):
        raise DomainError(f"grid needs lo < hi and n >= 2, got {spec!r}")
    if kind == "lin":
        return np.linspace(lo, hi, n)
    if kind == "log":
        if lo <= 0.0:
            raise DomainError(f"log grid needs lo > 0, got {spec!r}")
        return np.geomspace(lo, hi, n)
    raise DomainError(f"grid kind must be lin or log, got {kind!r}")


def cmd_sweep(args):
    params = derive_params(args.N, args.p, args.chi)
    grid = _parse_grid(args.a_grid)
    res = sweep_a(params, grid, _classify_opts(args))
    header = ["index", "a", "class", "R", "terminal_slope"]
    rows = [(i, c.a, c.label, c.R_of_a, c.terminal_slope)
            for i, c in enumerate(res.classifications)]
    counts: dict = {}
    for c in res.classifications:
        counts[c.label] = counts.get(c.label, 0) + 1
    results = {
        "n_points": len(rows),
        "a_1": res.a_1,
        "a_2": res.a_2,
        "counts": counts,
    }
    tol = {"all_classified":
           counts.get(ProfileClass.INCONCLUSIVE.value, 0) == 0}
    report = _report("sweep",
                     _config_echo(args, a_grid=args.a_grid,
                                  slope_tol=args.slope_tol),
                     _derived_block(params), results, header, rows, tol)
    return report, header, rows


def _reconstructed(args):
    """Shared profile pipeline: solve, map to phi, quadrature psi."""
    params = derive_params(args.N, args.p, args.chi)
    if args.a is not None and args.b is not None:
        raise DomainError("give either --a (backward) or --b (forward), not both")
    if args.direction is not None:
        direction = Direction(args.direction)
    elif args.a is not None:
        direction = Direction.BACKWARD
    elif args.b is not None:
        direction = Direction.FORWARD
    else:
        raise DomainError("need --a (backward) or --b (forward)")
    grade = getattr(args, "residual_grade", False)
    if direction is Direction.BACKWARD:
        if args.a is None:
            raise DomainError("backward reconstruction needs --a")
        if grade:
            phi = residual_grade_backward(params, args.a)
        else:
            sol = solve_backward(params, args.a, _integrator(args))
            if sol.termination in (Termination.STEP_UNDERFLOW,
                                   Termination.DIVERGED):
                raise IntegrationError(
                    f"integration failed ({sol.termination.value}) "
                    f"at r = {sol.r_end:g}")
            phi = phi_from_u(sol, params, n_grid=args.n_grid)
        height = args.a
    else:
        if args.b is None:
            raise DomainError("forward reconstruction needs --b")
        if grade:
            phi = residual_grade_forward(params, args.b)
        else:
            fp = solve_forward(params, args.b, ForwardOptions(
                r_max=args.r_max, integrator=_integrator(args)))
            phi = phi_from_u(fp.sol, params, tail=fp.tail, n_grid=args.n_grid)
        height = args.b
    psi = psi_from_phi(phi, params, strict=False)
    return params, direction, height, phi, psi


def cmd_reconstruct(args):
    params, direction, height, phi, psi = _reconstructed(args)
    try:
        M: Optional[float] = mass(phi, params)
        mass_note = None
    except InfiniteMassError as exc:
        M, mass_note = None, str(exc)
    res_block = None
    if psi.well_posed:
        res = system_residual(phi, psi, params, direction)
        res_block = {"res1": res.res1, "res2": res.res2,
                     "identity": res.identity}
    header = ["r", "phi", "psi", "dpsi"]
    rows = [(float(r), float(f), float(s), float(ds))
            for r, f, s, ds in zip(phi.r, phi.phi, psi.psi, psi.psi_prime)]
    results = {
        "direction": direction.value,
        "height": height,
        "mass": M,
        "mass_note": mass_note,
        "support_radius": phi.support_radius,
        "tail": _tail_block(phi.tail),
        "well_posed": psi.well_posed,
        "potential_note": psi.detail,
        "i1_total": psi.i1_total,
        "residuals": res_block,
    }
    tol = {
        "mass_finite": M is not None,
        "residuals_below_1e-6": res_block is not None
            and max(res_block["res1"], res_block["res2"],
                    res_block["identity"]) < 1e-6,
    }
    report = _report("reconstruct",
                     _config_echo(args, a=args.a, b=args.b,
                                  direction=direction.value,
                                  n_grid=args.n_grid,
                                  residual_grade=args.residual_grade),
                     _derived_block(params), results, header, rows, tol)
    return report, header, rows


def _gaussian(x) -> float:
    return math.exp(-float(np.dot(x, x)))


def cmd_delta_test(args):
    params, direction, height, phi, psi = _reconstructed(args)
    if not (0.0 < args.ratio < 1.0):
        raise DomainError(f"--ratio must lie in (0, 1), got {args.ratio}")
    if args.steps < 1:
        raise DomainError(f"--steps must be >= 1, got {args.steps}")
    if direction is Direction.BACKWARD:
        T = args.T
        tau0 = args.t0 if args.t0 is not None else T / 4.0
        if not (0.0 < tau0 < T):
            raise DomainError(
                f"first sample offset must lie in (0, T), got {tau0}")
        times = [T - tau0 * args.ratio ** k for k in range(args.steps + 1)]
        ss = assemble(params, phi, psi, direction, T=T)
    else:
        t0 = args.t0 if args.t0 is not None else 1.0
        if t0 <= 0.0:
            raise DomainError(f"first sample time must be positive, got {t0}")
        times = [t0 * args.ratio ** k for k in range(args.steps + 1)]
        ss = assemble(params, phi, psi, direction)
    pairs = delta_test(ss, _gaussian, times)
    header = ["t", "deviation"]
    rows = [(float(t), float(d)) for t, d in pairs]
    dev_first, dev_last = rows[0][1], rows[-1][1]
    factor = dev_first / dev_last if dev_last > 0.0 else math.inf
    results = {
        "direction": direction.value,
        "height": height,
        "M": ss.M,
        "deviation_first": dev_first,
        "deviation_last": dev_last,
        "decrease_factor": factor,
    }
    tol = {"monotone_decreasing": True,
           "decrease_above_1e3": factor >= 1e3}
    report = _report("delta-test",
                     _config_echo(args, a=args.a, b=args.b,
                                  direction=direction.value, T=args.T,
                                  t0=args.t0, ratio=args.ratio,
                                  steps=args.steps),
                     _derived_block(params), results, header, rows, tol)
    return report, header, rows


# ---------------------------------------------------------------------------
# wiring

def _add_common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--N", type=int, required=True, help="space dimension")
    sp.add_argument("--p", type=float, required=True,
                    help="diffusion exponent, p > 2N/(N+1)")
    sp.add_argument("--chi", type=float, default=1.0, help="drift strength")
    sp.add_argument("--r-max", type=float, default=1e3, dest="r_max",
                    help="scan radius cap")
    sp.add_argument("--rel-tol", type=float, default=1e-10, dest="rel_tol")
    sp.add_argument("--abs-tol", type=float, default=1e-10, dest="abs_tol")
    sp.add_argument("--event-tol", type=float, default=1e-12, dest="event_tol")
    sp.add_argument("--output", default=None,
                    help="base path: writes <base>.csv and <base>.json")
    sp.add_argument("--format", choices=("csv", "json"), default="csv",
                    help="stdout stream when --output is absent")
    sp.add_argument("--timing", action="store_true",
                    help="record wall-clock seconds in the report "
                         "(breaks byte determinism)")
    sp.add_argument("--gnuplot", action="store_true",
                    help="also write a <base>.gp plot script (needs --output)")


def _add_reconstruction_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--a", type=float, default=None,
                    help="backward center height u(0)")
    sp.add_argument("--b", type=float, default=None,
                    help="forward center height u(0)")
    sp.add_argument("--direction", choices=("backward", "forward"),
                    default=None)
    sp.add_argument("--n-grid", type=int, default=None, dest="n_grid",
                    help="resample the profile onto this many uniform radii")


def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="plks",
        description="Self-similar profiles of the critical p-Laplacian "
                    "aggregation-diffusion system: shooting, classification, "
                    "and reconstruction tables.")
    sub = top.add_subparsers(dest="command", required=True, metavar="command")

    sp = sub.add_parser("solve-backward",
                        help="integrate a blow-up profile from height a")
    _add_common(sp)
    sp.add_argument("--a", type=float, required=True,
                    help="center height u(0) > 0")
    sp.set_defaults(handler=cmd_solve_backward)

    sp = sub.add_parser("solve-forward",
                        help="integrate a spreading profile from height b")
    _add_common(sp)
    sp.add_argument("--b", type=float, required=True, help="center height u(0)")
    sp.add_argument("--fit-decay", action="store_true", dest="fit_decay",
                    help="fit the far-field decay against its exact limit")
    sp.add_argument("--u-floor", type=float, default=-1e3, dest="u_floor")
    sp.add_argument("--u-ceiling", type=float, default=1e6, dest="u_ceiling")
    sp.set_defaults(handler=cmd_solve_forward)

    sp = sub.add_parser("find-critical",
                        help="bisect the positivity/vanishing boundary a_c")
    _add_common(sp)
    sp.add_argument("--a-lo", type=float, default=None, dest="a_lo")
    sp.add_argument("--a-hi", type=float, default=None, dest="a_hi")
    sp.add_argument("--a-tol", type=float, default=1e-10, dest="a_tol",
                    help="relative bracket width target")
    sp.add_argument("--slope-tol", type=float, default=1e-6, dest="slope_tol")
    sp.set_defaults(handler=cmd_find_critical)

    sp = sub.add_parser("sweep", help="classify a grid of backward heights")
    _add_common(sp)
    sp.add_argument("--a-grid", required=True, dest="a_grid",
                    help="lin:lo:hi:n or log:lo:hi:n")
    sp.add_argument("--slope-tol", type=float, default=1e-6, dest="slope_tol")
    sp.set_defaults(handler=cmd_sweep)

    sp = sub.add_parser("reconstruct",
                        help="density, potential, mass, and residuals "
                             "for one profile")
    _add_common(sp)
    _add_reconstruction_flags(sp)
    sp.add_argument("--residual-grade", action="store_true",
                    dest="residual_grade",
                    help="re-solve on a refined fixed-cap node grid sized "
                         "for finite-difference residual evaluation "
                         "(internal tolerances; slower)")
    sp.set_defaults(handler=cmd_reconstruct)

    sp = sub.add_parser("delta-test",
                        help="point-concentration deviation table")
    _add_common(sp)
    _add_reconstruction_flags(sp)
    sp.add_argument("--T", type=float, default=1.0,
                    help="blow-up time (backward only)")
    sp.add_argument("--t0", type=float, default=None,
                    help="first sample: offset below T (backward) or "
                         "time (forward); defaults T/4 and 1")
    sp.add_argument("--ratio", type=float, default=0.25,
                    help="geometric shrink factor toward the singular time")
    sp.add_argument("--steps", type=int, default=6,
                    help="number of geometric shrink steps")
    sp.set_defaults(handler=cmd_delta_test)

    return top


def _gnuplot_text(base: str, header: Sequence[str]) -> str:
    name = Path(base).name + ".csv"
    plots = ", \\\n     ".join(
        f"'{name}' using 1:{i} with lines"
        for i in range(2, len(header) + 1))
    return ("set datafile separator ','\n"
            "set key autotitle columnhead\n"
            f"set xlabel '{header[0]}'\n"
            f"plot {plots}\n")


def _emit(args, report: dict, header: Sequence[str],
          rows: Sequence[Sequence]) -> None:
    csv_text = _csv_text(header, rows)
    json_text = _json_text(report)
    if args.output:
        Path(args.output + ".csv").write_text(csv_text)
        Path(args.output + ".json").write_text(json_text)
        if args.gnuplot:
            Path(args.output + ".gp").write_text(
                _gnuplot_text(args.output, header))
    else:
        sys.stdout.write(csv_text if args.format == "csv" else json_text)


def _fail(exc: Exception, code: int) -> int:
    print(f"error[{type(exc).__name__}] {exc}", file=sys.stderr)
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.gnuplot and not args.output:
        return _fail(DomainError("--gnuplot needs --output"), 2)
    start = time.perf_counter()
    try:
        report, header, rows = args.handler(args)
    except DomainError as exc:
        return _fail(exc, 2)
    except BadBracketError as exc:
        return _fail(exc, 4)
    except _SOLVER_FAILURES as exc:
        return _fail(exc, 3)
    if args.timing:
        report["wall_clock_s"] = time.perf_counter() - start
    _emit(args, report, header, rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
