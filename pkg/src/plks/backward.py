"""Blow-up profiles: shooting, height classification, critical height.

For p > 2 (slow regime) each initial height a > 0 falls into one of three
sets: P (the profile stays positive over the scan radius), N (it vanishes
transversally at a finite radius), or N0 (it vanishes tangentially).  The
critical height a_c separating P from N is found by bisection; the profile
at a_c has a zero with vanishing slope and generates the compactly
supported blow-up solution.

Positivity certificates rest on the energy E = B (p-1)/p |u'|^p + G(u),
which never increases: reaching u = 0 requires E >= G(0), so a trajectory
whose energy ever drops below G(0) can never vanish.  At an interior
minimum E = G(u_min) < G(0) whenever 0 < u_min < u*, which makes the first
interior minimum a sound certificate in every dimension.

The fast problem (p < 2) is exposed through solve_backward for exploration;
its profiles are bounded and positivity cannot be falsified (the source is
singular at u = 0), so no classification or root-finding is offered there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np

from .errors import (
    AmbiguousBracketError,
    BadBracketError,
    DomainError,
    NotEnoughZerosError,
)
from .params import ModelParams, Regime
from .radial_ode import (
    EventKind,
    IntegratorOptions,
    ProfileSolution,
    Termination,
    backward_ode,
    integrate,
    limit_ode,
    uprime_from_w,
)

__all__ = [
    "ProfileClass",
    "Classification",
    "ClassifyOptions",
    "solve_backward",
    "classify",
    "SweepResult",
    "sweep_a",
    "CriticalResult",
    "find_critical_a",
    "zero_energy_height",
    "rescaled_limit_check",
    "MultiBubbleProfile",
    "build_multi_bubble",
]


class ProfileClass(Enum):
    P = "P"
    N = "N"
    N0 = "N0"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class Classification:
    """Outcome of one shooting run in the slow backward problem."""

    a: float
    set: ProfileClass
    R_of_a: Optional[float]          # vanishing radius, N / N0 only
    terminal_slope: Optional[float]  # u'(R(a)), N / N0 only
    reason: str
    solution: ProfileSolution

    @property
    def label(self) -> str:
        return self.set.value


@dataclass(frozen=True)
class ClassifyOptions:
    slope_tol: float = 1e-6
    r_scan: float = 1e3
    equilibrium_tol: float = 1e-8
    equilibrium_w_tol: float = 1e-8
    integrator: Optional[IntegratorOptions] = None


def solve_backward(params: ModelParams, a: float,
                   opts: Optional[IntegratorOptions] = None) -> ProfileSolution:
    """Integrate the blow-up profile problem from center height a."""
    if not math.isfinite(a):
        raise DomainError(f"initial height must be finite, got {a}")
    if params.p != 2.0 and a <= 0.0:
        raise DomainError(
            f"initial height must be positive for p != 2, got {a}")
    ode = backward_ode(params)
    if opts is None:
        opts = IntegratorOptions()
    if params.regime is Regime.FAST and opts.singular_floor is None:
        # singular source at u = 0: stop at a floor instead of stalling
        opts = replace(opts, singular_floor=1e-8)
    return integrate(ode, a, opts)


def _base_integrator(params: ModelParams, copts: ClassifyOptions) -> IntegratorOptions:
    base = copts.integrator if copts.integrator is not None else IntegratorOptions()
    return replace(
        base,
        r_max=copts.r_scan,
        stop_at_u_zero=True,
        max_u_zero_events=None,
        stop_at_first_minimum=True,
        equilibrium_u=params.u_star,
        equilibrium_tol=copts.equilibrium_tol,
        equilibrium_w_tol=copts.equilibrium_w_tol,
        stop_at_equilibrium=True,
    )


def classify(params: ModelParams, a: float,
             opts: Optional[ClassifyOptions] = None) -> Classification:
    """Assign a to P, N, or N0 by integrating until a decisive event.

    Decisive outcomes: a zero of u (transversal -> N, tangential within
    slope_tol -> N0); a first interior minimum or equilibrium capture
    (-> P, certified by energy descent); survival to the scan radius
    (-> P).  Step underflow before any of these yields Inconclusive.
    """
    if params.regime is not Regime.SLOW:
        raise DomainError(
            f"classification applies to the slow regime (p > 2), got p = {params.p}")
    if not (math.isfinite(a) and a > 0.0):
        raise DomainError(f"initial height must be positive, got {a}")
    if opts is None:
        opts = ClassifyOptions()
    sol = integrate(backward_ode(params), a, _base_integrator(params, opts))
    term = sol.termination
    if term is Termination.U_CROSSED_ZERO:
        ev = sol.events_of(EventKind.U_ZERO)[-1]
        slope = uprime_from_w(sol.ode, ev.w)
        if abs(slope) <= opts.slope_tol:
            return Classification(a, ProfileClass.N0, ev.r, slope,
                                  "tangential zero", sol)
        return Classification(a, ProfileClass.N, ev.r, slope,
                              "transversal zero", sol)
    if term is Termination.U_PRIME_VANISHED:
        hits = sol.events_of(EventKind.EQUILIBRIUM_HIT)
        reason = "equilibrium capture" if hits else "interior minimum"
        return Classification(a, ProfileClass.P, None, None, reason, sol)
    if term is Termination.REACHED_RMAX:
        reason = "negative energy" if np.min(sol.energy) < 0.0 \
            else "positive over scan radius"
        return Classification(a, ProfileClass.P, None, None, reason, sol)
    return Classification(a, ProfileClass.INCONCLUSIVE, None, None,
                          f"terminated by {term.value}", sol)


@dataclass(frozen=True)
class SweepResult:
    """Classifications over a height grid, with the empirical set edges.

    a_1 is the top of the initial all-P prefix; a_2 the bottom of the final
    all-N tail; either is None when the corresponding run is empty.
    """

    classifications: list[Classification]
    a_1: Optional[float]
    a_2: Optional[float]

    @property
    def labels(self) -> list[str]:
        return [c.label for c in self.classifications]


def sweep_a(params: ModelParams, grid,
            opts: Optional[ClassifyOptions] = None) -> SweepResult:
    """Classify every height in the (increasing) grid."""
    heights = [float(a) for a in grid]
    if any(b <= a for a, b in zip(heights, heights[1:])):
        raise DomainError("height grid must be strictly increasing")
    cls = [classify(params, a, opts) for a in heights]
    a_1 = None
    for c in cls:
        if c.set is not ProfileClass.P:
            break
        a_1 = c.a
    a_2 = None
    for c in reversed(cls):
        if c.set is not ProfileClass.N:
            break
        a_2 = c.a
    return SweepResult(cls, a_1, a_2)


def zero_energy_height(params: ModelParams) -> float:
    """Height at which the center energy equals the barrier level G(0).

    Slow regime: G(a) = chi/(q+1) a^(q+1) - a/m = 0 at ((q+1)/(chi m))^(1/q);
    for N = 1 the conserved energy makes this exactly the critical height.
    p = 2: the nontrivial root of chi m (e^(m b) - 1) = m b via the secondary
    real branch of the Lambert W function (requires chi m < 1).
    """
    if params.regime is Regime.SLOW:
        return ((params.q + 1.0) / (params.chi * params.m)) ** (1.0 / params.q)
    if params.regime is Regime.LINEAR:
        c = params.chi * params.m
        if c >= 1.0:
            raise DomainError(
                f"no zero-energy height for chi*m = {c:g} >= 1 at p = 2")
        from scipy.special import lambertw
        z = -lambertw(-c * math.exp(-c), -1)
        t = float(z.real) - c
        return t / params.m
    # fast: G(a) = a/m - chi/(q+1) a^(q+1); a root needs q > -1
    if params.q > -1.0:
        return ((params.q + 1.0) / (params.chi * params.m)) ** (1.0 / params.q)
    raise DomainError(
        "no zero-energy height: the potential barrier at u = 0 is infinite "
        f"for q = {params.q:g} <= -1")


@dataclass(frozen=True)
class CriticalResult:
    """Bisection output for the P/N boundary."""

    a_c: float
    bracket_width: float
    R_c: Optional[float]
    profile: ProfileSolution
    n_iterations: int
    classification: Classification


def find_critical_a(params: ModelParams,
                    bracket: Optional[tuple[float, float]] = None,
                    opts: Optional[ClassifyOptions] = None,
                    a_tol: float = 1e-10) -> CriticalResult:
    """Bisect the P/N dichotomy to the critical height a_c.

    bracket defaults to [0.999 h0, expanding doublings] with h0 the
    zero-energy height, which is certified P (N = 1: it is a_c itself; the
    factor keeps the lower endpoint strictly inside P).  a_tol is relative;
    a_tol = 0 bisects to the floating-point limit.  A tangential (N0) hit
    ends the search immediately.
    """
    if params.regime is not Regime.SLOW:
        raise DomainError(
            f"critical height exists in the slow regime (p > 2), got p = {params.p}")
    if opts is None:
        opts = ClassifyOptions()

    if bracket is None:
        lo = 0.999 * zero_energy_height(params)
        hi = max(2.0 * lo, 2.0 * params.u_star)
    else:
        lo, hi = float(bracket[0]), float(bracket[1])
        if not (0.0 < lo < hi):
            raise BadBracketError(f"need 0 < a_lo < a_hi, got ({lo}, {hi})")

    c_lo = classify(params, lo, opts)
    if c_lo.set is ProfileClass.N0:
        return CriticalResult(lo, 0.0, c_lo.R_of_a, c_lo.solution, 0, c_lo)
    if c_lo.set is not ProfileClass.P:
        raise BadBracketError(
            f"lower endpoint a = {lo:g} classifies {c_lo.label}, need P")
    c_hi = classify(params, hi, opts)
    n_expand = 0
    while c_hi.set is ProfileClass.P and bracket is None and n_expand < 60:
        lo, c_lo = hi, c_hi
        hi *= 2.0
        c_hi = classify(params, hi, opts)
        n_expand += 1
    if c_hi.set is ProfileClass.N0:
        return CriticalResult(hi, 0.0, c_hi.R_of_a, c_hi.solution, n_expand, c_hi)
    if c_hi.set is not ProfileClass.N:
        raise BadBracketError(
            f"upper endpoint a = {hi:g} classifies {c_hi.label}, need N")

    n_iter = n_expand
    last_n = c_hi
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break  # bracket at the floating-point limit
        if (hi - lo) <= a_tol * abs(mid):
            break
        c = classify(params, mid, opts)
        n_iter += 1
        if c.set is ProfileClass.P:
            lo, c_lo = mid, c
        elif c.set is ProfileClass.N:
            hi, c_hi = mid, c
            last_n = c
        elif c.set is ProfileClass.N0:
            return CriticalResult(mid, hi - lo, c.R_of_a, c.solution, n_iter, c)
        else:
            raise AmbiguousBracketError(
                f"inconclusive classification at a = {mid:g}: {c.reason}")

    a_c = 0.5 * (lo + hi)
    c_mid = classify(params, a_c, opts)
    R_c = c_mid.R_of_a if c_mid.R_of_a is not None else last_n.R_of_a
    return CriticalResult(a_c, hi - lo, R_c, c_mid.solution, n_iter + 1, c_mid)


def rescaled_limit_check(params: ModelParams, a: float,
                         rel_tol: float = 1e-10, abs_tol: float = 1e-10,
                         n_samples: int = 2000) -> float:
    """Compare the height-a profile, rescaled, against the limit problem.

    The substitution u_tilde(s) = u(s a^(-lambda))/a turns the profile
    equation into the pure-power limit problem up to an O(a^(-q)) term; this
    integrates both and returns sup |u_tilde - u_limit| over
    s in [0, min(0.9 z_1, a^lambda R(a))], z_1 the limit profile's zero.
    """
    if params.regime is not Regime.SLOW:
        raise DomainError("rescaling limit needs the slow regime (p > 2)")
    if a < 100.0:
        raise DomainError(f"rescaling limit needs a >= 100, got a = {a:g}")
    lam = params.lam
    scale = a ** (-lam)

    lim = integrate(limit_ode(params), 1.0, IntegratorOptions(
        rel_tol=rel_tol, abs_tol=abs_tol, r_max=1e3,
        r0=1e-6, stop_at_u_zero=True))
    if lim.termination is not Termination.U_CROSSED_ZERO:
        raise DomainError("limit profile did not vanish within the scan radius")
    z1 = lim.r_end

    full = integrate(backward_ode(params), a, IntegratorOptions(
        rel_tol=rel_tol, abs_tol=abs_tol,
        r0=1e-6 * scale, r_max=1.2 * z1 * scale, stop_at_u_zero=True))

    s_hi = min(0.9 * z1, full.r_end / scale)
    s_lo = max(lim.r[0], full.r[0] / scale)
    s = np.linspace(s_lo, s_hi, n_samples)
    u_lim, _ = lim.sample(s)
    u_full, _ = full.sample(s * scale)
    return float(np.max(np.abs(u_full / a - u_lim)))


@dataclass(frozen=True)
class MultiBubbleProfile:
    """Piecewise profile keeping selected positivity intervals of u.

    Interval 0 is the central bubble [0, z_0]; interval k >= 1 spans
    [z_{2k-1}, z_{2k}].  phi = u^((p-1)/(p-2)) there and 0 elsewhere;
    since the exponent exceeds 1, phi lands at 0 with zero slope at every
    interval endpoint.
    """

    params: ModelParams
    zeros: tuple[float, ...]
    kept: tuple[int, ...]
    intervals: tuple[tuple[float, float], ...]
    solution: ProfileSolution = field(repr=False)

    @property
    def support_radius(self) -> float:
        return self.intervals[-1][1]

    def phi(self, r) -> np.ndarray:
        r_arr = np.atleast_1d(np.asarray(r, dtype=float))
        out = np.zeros_like(r_arr)
        ex = (self.params.p - 1.0) / (self.params.p - 2.0)
        r0 = self.solution.r[0]
        for lo, hi in self.intervals:
            mask = (r_arr >= lo) & (r_arr <= hi)
            if not np.any(mask):
                continue
            rs = np.clip(r_arr[mask], r0, self.solution.r[-1])
            u, _ = self.solution.sample(rs)
            out[mask] = np.maximum(u, 0.0) ** ex
        if np.isscalar(r) or np.ndim(r) == 0:
            return float(out[0])
        return out


def build_multi_bubble(profile: ProfileSolution, kept,
                       params: ModelParams) -> MultiBubbleProfile:
    """Assemble a compactly supported multi-bump profile from u's zeros."""
    if params.regime is not Regime.SLOW:
        raise DomainError("multi-bubble construction needs p > 2")
    zeros = profile.zeros()
    kept = tuple(sorted(int(k) for k in kept))
    if not kept:
        raise DomainError("kept interval list is empty")
    if kept[0] < 0:
        raise DomainError(f"interval indices must be >= 0, got {kept[0]}")
    need = 2 * kept[-1] + 1
    if len(zeros) < need:
        raise NotEnoughZerosError(
            f"need {need} zeros for interval {kept[-1]}, profile has {len(zeros)}")
    intervals = []
    for k in kept:
        lo = 0.0 if k == 0 else zeros[2 * k - 1]
        hi = zeros[2 * k]
        mid_u, _ = profile.sample(0.5 * (max(lo, profile.r[0]) + hi))
        if mid_u <= 0.0:
            raise DomainError(
                f"interval {k} is not a positivity interval (u({0.5*(lo+hi):g}) <= 0)")
        intervals.append((lo, hi))
    return MultiBubbleProfile(params, tuple(zeros), kept,
                              tuple(intervals), profile)
