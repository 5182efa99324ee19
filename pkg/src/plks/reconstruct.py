"""Reconstruction of the space-time solution pair from radial profiles.

A converged u-profile maps pointwise to the density profile φ, the
concentration profile ψ comes from the radial Newtonian quadrature of φ^m,
and the pair assembles into the full self-similar solution

    backward:  ρ(x,t) = (T−t)^(−1/m) φ((T−t)^(−1/(mN)) |x|)
    forward:   ρ(x,t) = t^(−1/m) φ(t^(−1/(mN)) |x|)

with c carrying the matching 2β−1 power.  Mass, δ-concentration, and the
residuals of the reduced radial system serve as end-to-end consistency
checks on the assembled pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import PchipInterpolator
from scipy.special import gamma as _gamma_fn, gammaincc

from .backward import MultiBubbleProfile
from .errors import (
    DeltaTestError,
    DomainError,
    IllPosedPotentialError,
    InfiniteMassError,
    NegativeBaseError,
    OutOfTimeDomainError,
)
from .forward import CompactTail, ForwardProfile, LogQuadraticTail, PowerTail, Tail
from .params import ModelParams, Regime
from .radial_ode import (
    IntegratorOptions,
    ProfileSolution,
    _odd_pow_np,
    forcing_backward,
    forcing_forward,
)

__all__ = [
    "Direction",
    "PhiProfile",
    "phi_from_u",
    "phi_from_forward",
    "phi_from_multi_bubble",
    "PsiProfile",
    "psi_well_posed_threshold",
    "psi_from_phi",
    "mass",
    "surface_area_unit_ball",
    "SelfSimilarSolution",
    "assemble",
    "evaluate",
    "delta_test",
    "SystemResidual",
    "system_residual",
]


class Direction(Enum):
    BACKWARD = "backward"
    FORWARD = "forward"


def surface_area_unit_ball(N: int) -> float:
    """omega_N = 2 pi^(N/2) / Gamma(N/2); 2, 2pi, 4pi for N = 1, 2, 3."""
    return 2.0 * math.pi ** (N / 2.0) / _gamma_fn(N / 2.0)


@dataclass(frozen=True)
class PhiProfile:
    """Density profile phi >= 0 on a radial grid with a tail model."""

    r: np.ndarray = field(repr=False)
    phi: np.ndarray = field(repr=False)
    tail: Optional[Tail]
    support_radius: Optional[float]

    def __post_init__(self):
        if np.any(self.phi < 0.0):
            raise DomainError("phi must be nonnegative")


def _phi_map(params: ModelParams, u: np.ndarray) -> np.ndarray:
    if params.regime is Regime.LINEAR:
        return np.exp(u)
    ex = (params.p - 1.0) / (params.p - 2.0)
    if params.regime is Regime.FAST and np.any(u <= 0.0):
        raise NegativeBaseError(
            "the p < 2 map phi = u^((p-1)/(p-2)) needs u > 0 everywhere")
    return np.maximum(u, 0.0) ** ex


def phi_from_u(sol: ProfileSolution, params: ModelParams,
               tail: Optional[Tail] = None,
               n_grid: Optional[int] = None) -> PhiProfile:
    """Map a u-trajectory to phi pointwise.

    A slow-regime trajectory that crosses zero is truncated at its first
    zero, where phi lands at 0 exactly; without a tail model the truncated
    profile is marked compactly supported.  n_grid resamples the
    trajectory onto that many uniform radii through the dense
    interpolant, which is what difference-based residual checks need.
    """
    zeros = sol.zeros()
    if params.regime is Regime.SLOW and zeros:
        z1 = zeros[0]
        if n_grid is None:
            keep = sol.r < z1
            r = np.append(sol.r[keep], z1)
            u = np.append(sol.u[keep], 0.0)
        else:
            r = np.linspace(sol.r[0], z1, n_grid)
            u, _ = sol.sample(r[:-1])
            u = np.append(u, 0.0)
        phi = _phi_map(params, u)
        return PhiProfile(r, phi, tail if tail is not None else CompactTail(z1), z1)
    if n_grid is None:
        r, u = sol.r.copy(), sol.u
    else:
        r = np.linspace(sol.r[0], sol.r[-1], n_grid)
        u, _ = sol.sample(r)
    phi = _phi_map(params, u)
    support = tail.radius if isinstance(tail, CompactTail) else None
    return PhiProfile(r, phi, tail, support)


def phi_from_forward(fp: ForwardProfile) -> PhiProfile:
    return phi_from_u(fp.sol, fp.params, tail=fp.tail)


def phi_from_multi_bubble(mb: MultiBubbleProfile) -> PhiProfile:
    """Grid profile for a multi-bump truncation: 0 on the gaps."""
    R = mb.support_radius
    sol = mb.solution
    pts = sol.r[sol.r < R]
    for lo, hi in mb.intervals:
        pts = np.append(pts, [lo, hi])
    pts = np.unique(np.clip(pts, sol.r[0], R))
    return PhiProfile(pts, np.asarray(mb.phi(pts)), CompactTail(R), R)


@dataclass(frozen=True)
class PsiProfile:
    """Concentration profile from the radial Newtonian kernels.

    psi_prime(r) = -r^(1-N) * integral_0^r s^(N-1) phi^m ds <= 0, and
    psi'' + (N-1)/r psi' + phi^m = 0 within quadrature tolerance.
    i0_total / i1_total carry the full source integrals for exterior
    continuation of the potential.
    """

    r: np.ndarray = field(repr=False)
    psi: np.ndarray = field(repr=False)
    psi_prime: np.ndarray = field(repr=False)
    N: int
    well_posed: bool
    detail: Optional[str] = None
    i1_total: Optional[float] = None
    i0_total: Optional[float] = None


def psi_well_posed_threshold(N: int) -> float:
    """Minimal p for a finite potential under a non-compact tail."""
    return 2.0 * math.sqrt(N / (N + 1.0))


def _scaled_upper_gamma(s: float, z: float) -> float:
    """e^z Gamma(s, z), stable for large z where e^z alone overflows."""
    if z < 30.0:
        return math.exp(z) * _gamma_fn(s) * gammaincc(s, z)
    # asymptotic expansion Gamma(s,z) e^z = z^(s-1) sum_k (s-1)...(s-k)/z^k,
    # truncated at the smallest term; remainder is below the last term kept
    acc = term = 1.0
    for k in range(1, 60):
        nxt = term * (s - k) / z
        if abs(nxt) >= abs(term) or abs(nxt) < 1e-18 * abs(acc):
            break
        acc += nxt
        term = nxt
    return z ** (s - 1.0) * acc


def _tail_integrals(phi: PhiProfile, params: ModelParams) -> tuple[float, float, float]:
    """(T1, Tlog, I1_tail): the phi^m tail pieces of int_rend^inf of
    s, s ln s, and s^(N-1) against the source."""
    tail = phi.tail
    r_end = float(phi.r[-1])
    m, N = params.m, params.N
    if tail is None or isinstance(tail, CompactTail):
        return 0.0, 0.0, 0.0
    if isinstance(tail, PowerTail):
        kappa = m * tail.exponent
        Cm = tail.coefficient ** m
        # int_r^inf s^(j) s^kappa converges only for kappa + j + 1 < 0
        t1 = Cm * r_end ** (kappa + 2.0) / (-(kappa + 2.0))
        tlog = Cm * (math.log(r_end) * r_end ** (kappa + 2.0) / (-(kappa + 2.0))
                     + r_end ** (kappa + 2.0) / (kappa + 2.0) ** 2)
        if kappa + N < 0.0:
            i1 = Cm * r_end ** (kappa + N) / (-(kappa + N))
        else:
            i1 = math.inf
        return t1, tlog, i1
    # log-quadratic: continue ln phi with slope -r/2 from the grid end;
    # the remainder is an incomplete-gamma sliver, numerically negligible
    phim_end = float(phi.phi[-1]) ** m
    t1 = phim_end * 2.0 / m
    tlog = math.log(r_end) * t1
    z = m * r_end ** 2 / 4.0
    i1 = (phim_end * (4.0 / m) ** (N / 2.0) / 2.0
          * _scaled_upper_gamma(N / 2.0, z))
    return t1, tlog, i1


def psi_from_phi(phi: PhiProfile, params: ModelParams,
                 strict: bool = True) -> PsiProfile:
    """Radial potential quadrature: -(psi'' + (N-1)/r psi') = phi^m.

    Composite Simpson on the solution grid plus closed-form tail pieces.
    Below the well-posedness threshold a non-compact tail makes the
    potential infinite everywhere: strict mode raises, otherwise the
    grid-truncated integrals are returned with well_posed = False.
    """
    N, m = params.N, params.m
    detail = None
    compact = phi.tail is None or isinstance(phi.tail, CompactTail)
    if not compact and isinstance(phi.tail, PowerTail):
        if params.p <= psi_well_posed_threshold(N):
            detail = (f"p = {params.p:g} <= 2 sqrt(N/(N+1)) = "
                      f"{psi_well_posed_threshold(N):g}: tail source diverges")
    if phi.tail is None and phi.support_radius is None:
        detail = "profile has no decaying tail model"
    if detail is not None:
        if strict:
            raise IllPosedPotentialError(detail)
        t1 = tlog = i1_tail = 0.0
    else:
        t1, tlog, i1_tail = _tail_integrals(phi, params)
        if not math.isfinite(i1_tail):
            i1_tail = 0.0

    r = phi.r
    src = phi.phi ** m
    r0, s0 = float(r[0]), float(src[0])
    # [0, r0] sliver with the source frozen at its innermost value
    i1 = s0 * r0 ** N / N + cumulative_simpson(r ** (N - 1) * src, x=r, initial=0.0)
    with np.errstate(divide="ignore"):
        psi_prime = -i1 / r ** (N - 1)

    if N == 1:
        i0 = i1
        j1 = cumulative_simpson(r * src, x=r, initial=0.0)
        upper = (j1[-1] - j1) + t1
        psi = -r * i0 - upper
        return PsiProfile(r, psi, psi_prime, N, detail is None, detail,
                          float(i1[-1]) + i1_tail, float(i0[-1]) + i1_tail)
    if N == 2:
        jlog = cumulative_simpson(r * np.log(r) * src, x=r, initial=0.0)
        upper = (jlog[-1] - jlog) + tlog
        psi = -np.log(r) * i1 - upper
        return PsiProfile(r, psi, psi_prime, N, detail is None, detail,
                          float(i1[-1]) + i1_tail)
    j1 = cumulative_simpson(r * src, x=r, initial=0.0)
    upper = (j1[-1] - j1) + t1
    psi = r ** (2 - N) * i1 / (N - 2.0) + upper / (N - 2.0)
    return PsiProfile(r, psi, psi_prime, N, detail is None, detail,
                      float(i1[-1]) + i1_tail)


def mass(phi: PhiProfile, params: ModelParams) -> float:
    """Total mass omega_N * integral_0^inf phi r^(N-1) dr."""
    N = params.N
    r = phi.r
    r0 = float(r[0])
    grid = (float(phi.phi[0]) * r0 ** N / N
            + float(cumulative_simpson(r ** (N - 1) * phi.phi, x=r, initial=0.0)[-1]))
    tail = phi.tail
    if tail is None:
        if phi.support_radius is None:
            raise InfiniteMassError("profile has no decaying tail model")
        extra = 0.0
    elif isinstance(tail, CompactTail):
        extra = 0.0
    elif isinstance(tail, PowerTail):
        if tail.exponent + N >= 0.0:
            raise InfiniteMassError(
                f"tail exponent {tail.exponent:g} is not integrable against "
                f"r^{N - 1}")
        r_end = float(r[-1])
        extra = tail.coefficient * r_end ** (tail.exponent + N) / (-(tail.exponent + N))
    else:
        # ln phi continued quadratically from the grid end
        r_end = float(r[-1])
        z = r_end ** 2 / 4.0
        extra = (float(phi.phi[-1]) * 4.0 ** (N / 2.0) / 2.0
                 * _scaled_upper_gamma(N / 2.0, z))
    return surface_area_unit_ball(N) * (grid + extra)


@dataclass(frozen=True)
class SelfSimilarSolution:
    """The assembled pair (rho, c) in similarity form."""

    direction: Direction
    params: ModelParams
    phi: PhiProfile
    psi: PsiProfile
    T: Optional[float]
    M: Optional[float]

    def similarity_scale(self, t: float) -> float:
        """theta(t): the length scale multiplying the profile radius."""
        return self._tau(t) ** self.params.beta

    def _tau(self, t: float) -> float:
        if self.direction is Direction.BACKWARD:
            if not (0.0 < t < self.T):
                raise OutOfTimeDomainError(
                    f"need 0 < t < T = {self.T:g}, got t = {t:g}")
            return self.T - t
        if t <= 0.0:
            raise OutOfTimeDomainError(f"need t > 0, got t = {t:g}")
        return t


def assemble(params: ModelParams, phi: PhiProfile, psi: PsiProfile,
             direction: Direction, T: Optional[float] = None) -> SelfSimilarSolution:
    if direction is Direction.BACKWARD:
        if T is None:
            T = 1.0
        if T <= 0.0:
            raise DomainError(f"blow-up time must be positive, got {T}")
    else:
        T = None
    try:
        M = mass(phi, params)
    except InfiniteMassError:
        M = None
    return SelfSimilarSolution(direction, params, phi, psi, T, M)


def _phi_at(ss: SelfSimilarSolution, xi: float) -> float:
    phi = ss.phi
    r = phi.r
    if xi <= r[0]:
        return float(phi.phi[0])
    if xi <= r[-1]:
        return float(np.interp(xi, r, phi.phi))
    tail = phi.tail
    if tail is None or isinstance(tail, CompactTail):
        return 0.0
    if isinstance(tail, PowerTail):
        return tail.coefficient * xi ** tail.exponent
    return float(phi.phi[-1]) * math.exp(tail.coefficient * (xi ** 2 - r[-1] ** 2))


def _psi_interp(ss: SelfSimilarSolution) -> PchipInterpolator:
    cache = getattr(ss, "_psi_cache", None)
    if cache is None:
        cache = PchipInterpolator(ss.psi.r, ss.psi.psi, extrapolate=False)
        object.__setattr__(ss, "_psi_cache", cache)
    return cache


def _psi_at(ss: SelfSimilarSolution, xi: float) -> float:
    psi = ss.psi
    r = psi.r
    if xi <= r[0]:
        return float(psi.psi[0])
    if xi <= r[-1]:
        return float(_psi_interp(ss)(xi))
    # exterior continuation with the source beyond the grid neglected
    N = psi.N
    if N == 1:
        return -psi.i0_total * xi
    if N == 2:
        return -psi.i1_total * math.log(xi)
    return psi.i1_total * xi ** (2 - N) / (N - 2.0)


def evaluate(ss: SelfSimilarSolution, x, t: float) -> tuple[float, float]:
    """(rho, c) at the space-time point; x is a point or a radius."""
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    radius = float(np.linalg.norm(xa))
    tau = ss._tau(t)
    beta = ss.params.beta
    xi = radius * tau ** (-beta)
    rho = tau ** (-ss.params.alpha) * _phi_at(ss, xi)
    c = tau ** (2.0 * beta - 1.0) * _psi_at(ss, xi)
    return rho, c


def _angular_average(f: Callable, N: int, s: float) -> float:
    if s == 0.0:
        return float(f(np.zeros(N)))
    if N == 1:
        return 0.5 * (float(f(np.array([s]))) + float(f(np.array([-s]))))
    if N == 2:
        th = np.linspace(0.0, 2.0 * math.pi, 32, endpoint=False)
        return float(np.mean([f(np.array([s * math.cos(a), s * math.sin(a)]))
                              for a in th]))
    if N == 3:
        # Gauss-Legendre in the polar cosine, trapezoid in azimuth
        cs, wt = np.polynomial.legendre.leggauss(12)
        th = np.linspace(0.0, 2.0 * math.pi, 16, endpoint=False)
        acc = 0.0
        for c0, w in zip(cs, wt):
            sn = math.sqrt(1.0 - c0 * c0)
            ring = np.mean([f(np.array([s * sn * math.cos(a),
                                        s * sn * math.sin(a), s * c0]))
                            for a in th])
            acc += w * ring
        return float(acc / 2.0)
    # higher N: treat f as radial
    return float(f(np.concatenate([[s], np.zeros(N - 1)])))


def delta_test(ss: SelfSimilarSolution, f: Callable, times: Sequence[float],
               assert_decreasing: bool = True) -> list[tuple[float, float]]:
    """Deviation of integral rho(.,t) f from M f(0) along the time list.

    The integral reduces to the similarity variable: it equals
    omega_N int phi(s) fbar(theta(t) s) s^(N-1) ds with fbar the spherical
    average of f, so the scale theta(t) -> 0 drives the deviation to 0.
    Times are processed in approach order (toward T backward, toward 0
    forward) and the deviation must decrease monotonically along them.
    """
    if ss.M is None:
        raise InfiniteMassError("delta test needs a finite-mass profile")
    N = ss.params.N
    omega = surface_area_unit_ball(N)
    f0 = float(f(np.zeros(N)))
    r = ss.phi.r
    grid_mass = omega * (float(ss.phi.phi[0]) * float(r[0]) ** N / N
                         + float(cumulative_simpson(
                             r ** (N - 1) * ss.phi.phi, x=r, initial=0.0)[-1]))
    tail_mass = ss.M - grid_mass

    order = sorted(times, reverse=(ss.direction is Direction.FORWARD))
    out = []
    for t in order:
        theta = ss.similarity_scale(t)
        fbar = np.array([_angular_average(f, N, theta * float(s)) for s in r])
        integral = omega * (float(ss.phi.phi[0]) * fbar[0] * float(r[0]) ** N / N
                            + float(cumulative_simpson(
                                r ** (N - 1) * ss.phi.phi * fbar, x=r,
                                initial=0.0)[-1]))
        integral += tail_mass * _angular_average(f, N, theta * float(r[-1]))
        out.append((t, abs(integral - ss.M * f0)))
    if assert_decreasing:
        for (t_a, d_a), (t_b, d_b) in zip(out, out[1:]):
            if not d_b < d_a:
                raise DeltaTestError(
                    f"deviation failed to decrease toward the singular time: "
                    f"{d_a:g} at t = {t_a:g} vs {d_b:g} at t = {t_b:g}")
    return out


def _d1(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Three-point first derivative on a non-uniform grid, interior only.

    Evaluated from one-sided slopes rather than bare-coefficient form: the
    neighbour subtractions are exact for close values, so the result keeps
    ulp-level accuracy instead of h^2/h^3 coefficient roundoff, which
    matters when the output is differenced a second time.
    """
    hm = x[1:-1] - x[:-2]
    hp = x[2:] - x[1:-1]
    sm = (y[1:-1] - y[:-2]) / hm
    sp = (y[2:] - y[1:-1]) / hp
    return (hm * sp + hp * sm) / (hm + hp)


@dataclass(frozen=True)
class SystemResidual:
    """Worst interior residuals of the reduced radial system."""

    res1: float       # scalar profile equation on the u level
    res2: float       # potential equation psi'' + (N-1)/r psi' + phi^m
    identity: float   # integrated flux identity F/phi - chi psi' -+ r/(mN)

    def __iter__(self):
        return iter((self.res1, self.res2))


def system_residual(phi: PhiProfile, psi: PsiProfile, params: ModelParams,
                    direction: Direction,
                    window: tuple[float, float] = (0.1, 0.9)) -> SystemResidual:
    """Centered-difference residuals over the middle of the support.

    res1 re-derives the scalar u-equation from the phi samples alone (two
    nested derivatives); res2 differentiates the quadrature psi' once; the
    identity couples the phi flux to psi' with the direction-dependent
    drift sign (+ backward, - forward).
    """
    R_ref = phi.support_radius if phi.support_radius is not None else float(phi.r[-1])
    lo, hi = window[0] * R_ref, window[1] * R_ref
    sel = (phi.r >= lo) & (phi.r <= hi)
    if int(np.count_nonzero(sel)) < 7:
        raise DomainError("test window contains fewer than 7 grid points")
    r = phi.r[sel]
    ph = phi.phi[sel]
    if np.any(ph <= 0.0):
        raise DomainError("phi must be positive on the test window")

    if params.regime is Regime.LINEAR:
        u = np.log(ph)
    else:
        u = ph ** ((params.p - 2.0) / (params.p - 1.0))
    g = (forcing_backward(params) if direction is Direction.BACKWARD
         else forcing_forward(params))
    ode_B = 1.0 if params.regime is Regime.LINEAR else params.B
    ode_pe = 2.0 if params.regime is Regime.LINEAR else params.p
    up = _d1(r, u)
    w = ode_B * _odd_pow_np(up, ode_pe - 1.0)
    wp = _d1(r[1:-1], w)
    rc = r[2:-2]
    res1 = float(np.max(np.abs(
        wp + (params.N - 1) / rc * w[1:-1] + g.g_np(u[2:-2]))))

    pp = psi.psi_prime[sel]
    ppp = _d1(r, pp)
    res2 = float(np.max(np.abs(
        ppp + (params.N - 1) / r[1:-1] * pp[1:-1] + ph[1:-1] ** params.m)))

    # F/phi with F = |phi'|^(p-2) phi' collapses to the u-level flux:
    # +w for p >= 2 and -w for p < 2, which differencing u resolves far
    # better than dividing noisy phi' powers by a vanishing phi
    sgn = 1.0 if direction is Direction.BACKWARD else -1.0
    s_reg = -1.0 if params.regime is Regime.FAST else 1.0
    ident = float(np.max(np.abs(
        s_reg * w - params.chi * pp[1:-1]
        - sgn * r[1:-1] / (params.m * params.N))))
    return SystemResidual(res1, res2, ident)


def residual_grade_backward(params: ModelParams, a: float,
                            n_steps: int = 40000,
                            tol: float = 1e-12) -> PhiProfile:
    """Blow-up profile on a grid fine enough for residual differencing.

    A scouting pass finds the radial span, then a capped-step pass places
    about n_steps genuine solution nodes across it.  Node values sit on the
    discrete flow to sub-tolerance accuracy, so nested centered differences
    of the output resolve the equation residual instead of grid noise; the
    cap also keeps the spacing uniform away from the origin, where the
    three-point formulas are second order with their smallest constants.
    """
    from .backward import solve_backward

    scout = solve_backward(params, a, IntegratorOptions(
        rel_tol=1e-10, abs_tol=1e-10))
    zs = scout.zeros()
    span = zs[0] if zs else float(scout.r[-1])
    refined = solve_backward(params, a, IntegratorOptions(
        rel_tol=tol, abs_tol=tol, h_max=span / n_steps))
    return phi_from_u(refined, params)


def residual_grade_forward(params: ModelParams, a: float,
                           n_steps: int = 40000,
                           tol: float = 1e-12) -> PhiProfile:
    """Spreading profile on a residual-grade grid; see the backward twin."""
    from .forward import ForwardOptions, solve_forward

    scout = solve_forward(params, a)
    span = (scout.support_radius if scout.support_radius is not None
            else float(scout.sol.r[-1]))
    refined = solve_forward(params, a, ForwardOptions(
        integrator=IntegratorOptions(rel_tol=tol, abs_tol=tol,
                                     h_max=span / n_steps)))
    return phi_from_forward(refined)
