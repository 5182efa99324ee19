"""Spreading profiles: monotone trajectories, support edge, tail laws.

The forward problems are monotone in every regime: for p = 2 the profile
decreases without bound, for p < 2 it increases without bound, and for
p > 2 it decreases to 0 at a finite support radius R_0.  The unbounded
trajectories are cut off at a configurable level and their behavior beyond
the grid is carried by an explicit tail model; the known asymptotic laws are

    p < 2:  phi(r) r^(p/(2-p)) -> K^((p-1)/(p-2)),  K = (1/(BNm))^(1/(p-1)) (p-1)/p
    p = 2:  ln phi(r) / r^2 -> -1/4   (using m N = 2 at p = 2)
    p > 2:  compact support.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from .errors import (
    DomainError,
    InsufficientRangeError,
    IntegrationError,
    NoSupportRadiusError,
)
from .params import ModelParams, Regime
from .radial_ode import (
    EventKind,
    IntegratorOptions,
    ProfileSolution,
    Termination,
    forward_ode,
    integrate,
    uprime_from_w,
)

__all__ = [
    "PowerTail",
    "LogQuadraticTail",
    "CompactTail",
    "ForwardOptions",
    "ForwardProfile",
    "solve_forward",
    "SupportEdge",
    "support_radius",
    "support_radius_upper_bound",
    "DecayFit",
    "fit_decay_rate",
    "EnvelopeReport",
    "envelope_check",
]


@dataclass(frozen=True)
class PowerTail:
    """phi ~ coefficient * r^exponent as r -> infinity (p < 2)."""

    exponent: float
    coefficient: float


@dataclass(frozen=True)
class LogQuadraticTail:
    """ln phi ~ coefficient * r^2 as r -> infinity (p = 2)."""

    coefficient: float


@dataclass(frozen=True)
class CompactTail:
    """phi vanishes identically beyond the support radius (p > 2)."""

    radius: float


Tail = Union[PowerTail, LogQuadraticTail, CompactTail]


@dataclass(frozen=True)
class ForwardOptions:
    u_floor: float = -1e3     # p = 2 cutoff (u -> -infinity)
    u_ceiling: float = 1e6    # p < 2 cutoff (u -> +infinity)
    r_max: float = 1e3
    integrator: Optional[IntegratorOptions] = None


@dataclass(frozen=True)
class ForwardProfile:
    params: ModelParams
    regime: Regime
    a: float
    sol: ProfileSolution = field(repr=False)
    support_radius: Optional[float]
    tail: Tail


def _check_monotone(u: np.ndarray, direction: int, regime: Regime) -> None:
    # equality of neighbors is tolerated (sub-ulp steps near startup);
    # any actual reversal is a hard failure
    d = np.diff(u) * direction
    if np.any(d < 0.0) or (len(u) > 1 and u[-1] == u[0]):
        i = int(np.argmin(d))
        raise IntegrationError(
            f"monotonicity violated for {regime.value} spreading profile at "
            f"step {i}: consecutive u = {u[i]!r}, {u[i + 1]!r}")


def solve_forward(params: ModelParams, a_or_b: float,
                  opts: Optional[ForwardOptions] = None) -> ForwardProfile:
    """Integrate the spreading profile problem from center value a_or_b.

    p = 2 runs to u_floor, p < 2 to u_ceiling, p > 2 to the zero of u.
    The regime's strict monotonicity is verified on every accepted step.
    """
    a = float(a_or_b)
    if not math.isfinite(a):
        raise DomainError(f"center value must be finite, got {a_or_b}")
    if params.p != 2.0 and a <= 0.0:
        raise DomainError(
            f"center value must be positive for p != 2, got {a}")
    if opts is None:
        opts = ForwardOptions()
    base = opts.integrator if opts.integrator is not None else IntegratorOptions()

    regime = params.regime
    if regime is Regime.LINEAR:
        if a <= opts.u_floor:
            raise DomainError(f"center value {a} is at or under the floor")
        # |u| >= ceiling terminates; u only moves down, so the ceiling
        # acts as the floor as long as it clears the start value
        iopts = replace(base, r_max=opts.r_max, stop_at_u_zero=False,
                        u_ceiling=max(abs(opts.u_floor), 2.0 * abs(a) + 1.0))
        sol = integrate(forward_ode(params), a, iopts)
        _check_monotone(sol.u, -1, regime)
        fp = ForwardProfile(params, regime, a, sol, None, LogQuadraticTail(-0.25))
    elif regime is Regime.FAST:
        iopts = replace(base, r_max=opts.r_max, stop_at_u_zero=False,
                        u_ceiling=opts.u_ceiling)
        sol = integrate(forward_ode(params), a, iopts)
        _check_monotone(sol.u, +1, regime)
        p, B, N, m = params.p, params.B, params.N, params.m
        K = (1.0 / (B * N * m)) ** (1.0 / (p - 1.0)) * (p - 1.0) / p
        tail = PowerTail(p / (p - 2.0), K ** ((p - 1.0) / (p - 2.0)))
        fp = ForwardProfile(params, regime, a, sol, None, tail)
    else:
        iopts = replace(base, r_max=opts.r_max, stop_at_u_zero=True)
        sol = integrate(forward_ode(params), a, iopts)
        if sol.termination is not Termination.U_CROSSED_ZERO:
            raise NoSupportRadiusError(
                f"trajectory from a = {a:g} did not vanish by r = {opts.r_max:g} "
                f"({sol.termination.value})")
        keep = sol.u > 0.0
        _check_monotone(sol.u[keep], -1, regime)
        R0 = sol.events_of(EventKind.U_ZERO)[-1].r
        fp = ForwardProfile(params, regime, a, sol, R0, CompactTail(R0))
    return fp


@dataclass(frozen=True)
class SupportEdge:
    R_0: float
    terminal_u_slope: float
    terminal_phi_slope: float

    def __iter__(self):
        return iter((self.R_0, self.terminal_u_slope, self.terminal_phi_slope))


def support_radius(fp: ForwardProfile, eps: float = 1e-6) -> SupportEdge:
    """Support edge data: R_0, u'(R_0), and phi' just inside the edge.

    phi' = (p-1)/(p-2) u^(1/(p-2)) u' vanishes as r -> R_0 even though
    u'(R_0) < 0, because the exponent is positive for p > 2; the returned
    phi slope is evaluated at R_0 - eps.
    """
    if fp.regime is not Regime.SLOW:
        raise DomainError("support radius exists in the slow regime (p > 2)")
    if fp.support_radius is None:
        raise NoSupportRadiusError("profile has no zero event")
    R0 = fp.support_radius
    ev = fp.sol.events_of(EventKind.U_ZERO)[-1]
    u_slope = uprime_from_w(fp.sol.ode, ev.w)
    p = fp.params.p
    u_in, w_in = fp.sol.sample(R0 - eps)
    up_in = uprime_from_w(fp.sol.ode, w_in)
    phi_slope = (p - 1.0) / (p - 2.0) * max(u_in, 0.0) ** (1.0 / (p - 2.0)) * up_in
    return SupportEdge(R0, u_slope, phi_slope)


def support_radius_upper_bound(params: ModelParams, a: float) -> float:
    """Cap on R_0 from u(r) <= a - (p-1)/p (BmN)^(-1/(p-1)) r^(p/(p-1))."""
    if params.regime is not Regime.SLOW:
        raise DomainError("support radius bound needs p > 2")
    p, B, m, N = params.p, params.B, params.m, params.N
    return (a * p / (p - 1.0)) ** ((p - 1.0) / p) * (B * m * N) ** (1.0 / p)


def _phi_of_u(params: ModelParams, u: np.ndarray) -> np.ndarray:
    if params.regime is Regime.LINEAR:
        return np.exp(u)
    return np.asarray(u, dtype=float) ** ((params.p - 1.0) / (params.p - 2.0))


@dataclass(frozen=True)
class DecayFit:
    """Tail-limit estimate against its exact target.

    limit_estimate comes from a quadratic Richardson fit over the last
    decade of the grid; raw_estimate is the unextrapolated value at the
    final point.  For p < 2 the u-level limit u / r^(p/(p-1)) is fitted
    the same way alongside the phi-level one.
    """

    limit_estimate: float
    target: float
    raw_estimate: float
    r_last: float
    u_level_estimate: Optional[float] = None
    u_level_target: Optional[float] = None

    def __iter__(self):
        return iter((self.limit_estimate, self.target))


def _richardson(x: np.ndarray, y: np.ndarray) -> float:
    # least-squares y = A + B x + C x^2; the limit x -> 0 is A
    V = np.vander(x, 3, increasing=True)
    coef, *_ = np.linalg.lstsq(V, y, rcond=None)
    return float(coef[0])


def fit_decay_rate(fp: ForwardProfile, n_fit: int = 200) -> DecayFit:
    """Fit the unbounded-regime tail limit over the last decade of r."""
    if fp.regime is Regime.SLOW:
        raise DomainError("compactly supported profiles have no decay rate")
    if fp.sol.opts.r_max < 1e2:
        raise InsufficientRangeError(
            f"need a scan radius of at least 100, have r_max = {fp.sol.opts.r_max:g}")
    r_last = fp.sol.r_end
    r = np.geomspace(r_last / 10.0, r_last, n_fit)
    u, _ = fp.sol.sample(r)
    p = fp.params.p
    if fp.regime is Regime.LINEAR:
        # ln phi = u; corrections enter as ln r / r^2 and 1/r^2
        y = u / r ** 2
        V = np.column_stack([np.ones_like(r), np.log(r) / r ** 2, 1.0 / r ** 2])
        coef, *_ = np.linalg.lstsq(V, y, rcond=None)
        return DecayFit(float(coef[0]), -0.25, float(y[-1]), r_last)
    x = r ** (-p / (p - 1.0))
    u_level = u * x
    phi_level = _phi_of_u(fp.params, u_level)  # phi r^(p/(2-p)) = (u x)^((p-1)/(p-2))
    target = fp.tail.coefficient
    B, N, m = fp.params.B, fp.params.N, fp.params.m
    u_target = (p - 1.0) / p * (1.0 / (m * B * N)) ** (1.0 / (p - 1.0))
    return DecayFit(_richardson(x, phi_level), target, float(phi_level[-1]),
                    r_last, _richardson(x, u_level), u_target)


@dataclass(frozen=True)
class EnvelopeReport:
    """Worst signed violations of the growth envelopes (positive = broken)."""

    max_lower_violation: float
    max_upper_violation: float
    max_slope_violation: Optional[float] = None

    @property
    def ok(self) -> bool:
        worst = max(self.max_lower_violation, self.max_upper_violation)
        if self.max_slope_violation is not None:
            worst = max(worst, self.max_slope_violation)
        return worst <= 0.0


def envelope_check(fp: ForwardProfile, slack: float = 1e-9) -> EnvelopeReport:
    """Check the two-sided growth envelopes on the stored grid.

    p < 2:  a + c_lo r^(p/(p-1)) <= u <= a + c_hi r^(p/(p-1)) with
            c_lo = (p-1)/p (1/(mBN))^(1/(p-1)) and c_hi the same with
            1/(mBN) replaced by 1/(mBN) + chi a^q / (BN).
    p = 2:  b - (chi e^(bm) + 1/m) r^2/(2N) <= u <= b, plus the slope
            bound u'(r) <= -r/(mN) (the source never drops under 1/m).

    Violations are scaled by max(1, |u|); slack absorbs roundoff.
    """
    P = fp.params
    r, u = fp.sol.r, fp.sol.u
    scale = np.maximum(1.0, np.abs(u))
    if fp.regime is Regime.FAST:
        p, B, N, m, chi, a = P.p, P.B, P.N, P.m, P.chi, fp.a
        c_lo = (p - 1.0) / p * (1.0 / (m * B * N)) ** (1.0 / (p - 1.0))
        c_hi = (p - 1.0) / p * (1.0 / (m * B * N)
                                + chi * a ** P.q / (B * N)) ** (1.0 / (p - 1.0))
        grow = r ** (p / (p - 1.0))
        low = (a + c_lo * grow - u) / scale
        high = (u - (a + c_hi * grow)) / scale
        return EnvelopeReport(float(np.max(low)) - slack,
                              float(np.max(high)) - slack)
    if fp.regime is Regime.LINEAR:
        b, m, N, chi = fp.a, P.m, P.N, P.chi
        low = (b - (chi * math.exp(b * m) + 1.0 / m) * r ** 2 / (2.0 * N) - u) / scale
        high = (u - b) / scale
        up = np.array([uprime_from_w(fp.sol.ode, w) for w in fp.sol.w])
        slope = (up + r / (m * N)) / scale
        return EnvelopeReport(float(np.max(low)) - slack,
                              float(np.max(high)) - slack,
                              float(np.max(slope)) - slack)
    raise DomainError("envelopes apply to the unbounded regimes (p <= 2)")
