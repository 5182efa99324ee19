"""Integrator core: oracle agreement, events, energy law, defect audit."""

import math

import numpy as np
import pytest

from plks import (
    DomainError,
    EventKind,
    IntegratorOptions,
    Termination,
    backward_ode,
    derive_params,
    energy,
    energy_derivative_check,
    forcing_backward,
    forcing_forward,
    forcing_limit,
    forward_ode,
    integrate,
    limit_ode,
    local_residual_check,
    startup_state,
    uprime_from_w,
)
from oracles import oracle_g, oracle_startup, rk4_trajectory

RNG = np.random.default_rng(20260822)


def _ode(N, p, chi, problem):
    P = derive_params(N, p, chi)
    if problem == "backward":
        return backward_ode(P)
    if problem == "forward":
        return forward_ode(P)
    return limit_ode(P)


# ---------------------------------------------------------------- forcings

FORCING_CASES = [
    (1, 3.0, 1.0, "backward"),
    (1, 3.0, 1.0, "forward"),
    (1, 3.0, 1.0, "limit"),
    (2, 2.0, 1.0, "backward"),
    (2, 2.0, 0.5, "forward"),
    (3, 1.8, 1.0, "backward"),
    (3, 1.8, 2.0, "forward"),
    (1, 1.5, 1.0, "backward"),
    (2, 2.5, 1.5, "limit"),
]


@pytest.mark.parametrize("N,p,chi,problem", FORCING_CASES)
def test_forcing_matches_oracle(N, p, chi, problem):
    ode = _ode(N, p, chi, problem)
    ref = oracle_g(N, p, chi, problem)
    us = [0.3, 0.7, 1.0, 1.7, 4.2]
    for u in us:
        assert abs(ode.forcing.g(u) - ref(u)) < 1e-13 * max(1.0, abs(ref(u)))


@pytest.mark.parametrize("N,p,chi,problem", FORCING_CASES)
def test_potential_antiderivative(N, p, chi, problem):
    # G' = g by centered finite differences
    ode = _ode(N, p, chi, problem)
    eps = 1e-6
    for u in (0.4, 0.9, 1.3, 2.6):
        fd = (float(ode.forcing.G_np(u + eps)) - float(ode.forcing.G_np(u - eps))) / (2 * eps)
        g = ode.forcing.g(u)
        assert abs(fd - g) < 5e-8 * max(1.0, abs(g)), (u, fd, g)


def test_log_potential_branch():
    # q = -1: the fast-backward potential degenerates to u/m - chi ln u
    ode = _ode(1, 1.5, 1.0, "backward")
    G1 = float(ode.forcing.G_np(1.0))
    assert abs(G1 - 1.0) < 1e-15  # u/m - chi ln(1) with m = 1
    with pytest.raises(DomainError):
        ode.forcing.G_np(-0.5)


def test_equilibrium_annihilates_source():
    for N, p, chi in [(1, 3.0, 1.0), (2, 2.5, 2.0), (3, 1.8, 1.0)]:
        P = derive_params(N, p, chi)
        ode = backward_ode(P)
        assert abs(ode.forcing.g(P.u_star)) < 1e-13
    P = derive_params(2, 2.0, 0.7)
    ode = backward_ode(P)
    assert abs(ode.forcing.g(P.u_star_log)) < 1e-13


def test_flux_inversion_round_trip():
    for p in (1.5, 1.8, 2.0, 2.5, 3.0):
        ode = _ode(2, p, 1.0, "backward")
        for v in (-2.0, -0.3, 0.0, 0.7, 1.9):
            w = ode.B_eff * math.copysign(abs(v) ** (ode.p_eff - 1.0), v) if v else 0.0
            assert abs(uprime_from_w(ode, w) - v) < 1e-12


# ---------------------------------------------------------------- startup

def test_startup_matches_oracle():
    for N, p, chi, problem in FORCING_CASES:
        ode = _ode(N, p, chi, problem)
        u, w = startup_state(ode, 1.3, 1e-6)
        uo, wo = oracle_startup(N, p, chi, problem, 1.3, 1e-6)
        assert abs(u - uo) < 1e-18 + 1e-14 * abs(uo)
        assert abs(w - wo) < 1e-18 + 1e-14 * abs(wo)


def test_startup_series_consistency():
    # halving the startup radius across four decades barely moves u(1)
    ode = _ode(1, 3.0, 1.0, "backward")
    vals = []
    for r0 in (1e-4, 1e-6, 1e-8):
        opts = IntegratorOptions(r0=r0, auto_shrink_r0=False, r_max=1.0)
        sol = integrate(ode, 2.0, opts)
        assert sol.termination is Termination.U_CROSSED_ZERO or sol.r_end == 1.0
        u1, _ = sol.sample(min(0.5, sol.r_end))
        vals.append(u1)
    for v in vals[1:]:
        assert abs(v - vals[0]) < 1e-8 * max(1.0, abs(vals[0]))


def test_startup_rejects_bad_input():
    ode = _ode(1, 3.0, 1.0, "backward")
    with pytest.raises(DomainError):
        startup_state(ode, 1.0, 0.0)
    fast = _ode(3, 1.8, 1.0, "backward")
    with pytest.raises(DomainError):
        startup_state(fast, -1.0, 1e-6)  # singular source needs u0 > 0


# ------------------------------------------------------- oracle equivalence

ORACLE_CASES = [
    (1, 3.0, 1.0, "backward", 2.0),
    (1, 3.0, 1.0, "backward", 0.85),
    (2, 2.0, 1.0, "forward", 1.0),
    (2, 2.5, 1.0, "backward", 1.5),
    (3, 1.8, 1.0, "forward", 1.0),
    (1, 1.5, 1.0, "backward", 1.7),
]


@pytest.mark.parametrize("N,p,chi,problem,u0", ORACLE_CASES)
def test_adaptive_agrees_with_rk4(N, p, chi, problem, u0):
    ode = _ode(N, p, chi, problem)
    opts = IntegratorOptions(r_max=1.0, stop_at_u_zero=False,
                             r0=1e-6, auto_shrink_r0=False)
    sol = integrate(ode, u0, opts)
    assert sol.termination is Termination.REACHED_RMAX
    u_ref, w_ref = rk4_trajectory(N, p, chi, problem, u0, 1e-6, 1.0, 100_000)
    u_end = float(sol.u[-1])
    assert abs(u_end - u_ref) < 1e-6 * max(1.0, abs(u_ref)), (u_end, u_ref)
    assert abs(float(sol.w[-1]) - w_ref) < 1e-5 * max(1.0, abs(w_ref))


def test_dense_output_against_oracle():
    # dense samples between nodes must agree with a refined fixed-step run
    ode = _ode(1, 3.0, 1.0, "backward")
    opts = IntegratorOptions(r_max=0.6, stop_at_u_zero=False,
                             r0=1e-6, auto_shrink_r0=False)
    sol = integrate(ode, 2.0, opts)
    radii = np.linspace(0.05, 0.55, 41)
    u_d, w_d = sol.sample(radii)
    for r_t, u_t, w_t in zip(radii[::8], u_d[::8], w_d[::8]):
        u_ref, w_ref = rk4_trajectory(1, 3.0, 1.0, "backward", 2.0, 1e-6,
                                      float(r_t), 60_000)
        assert abs(u_t - u_ref) < 1e-7 * max(1.0, abs(u_ref))
        assert abs(w_t - w_ref) < 1e-6 * max(1.0, abs(w_ref))


def test_dense_output_hits_nodes():
    ode = _ode(2, 2.5, 1.0, "backward")
    sol = integrate(ode, 1.5, IntegratorOptions(r_max=5.0, stop_at_u_zero=False))
    idx = [1, len(sol.r) // 2, len(sol.r) - 1]
    u_s, w_s = sol.sample(sol.r[idx])
    assert np.allclose(u_s, sol.u[idx], rtol=0, atol=1e-13)
    assert np.allclose(w_s, sol.w[idx], rtol=0, atol=1e-13)
    with pytest.raises(DomainError):
        sol.sample(sol.r[-1] * 1.5)


# ----------------------------------------------------------------- events

def test_zero_crossing_event():
    ode = _ode(1, 3.0, 1.0, "backward")
    sol = integrate(ode, 2.0, IntegratorOptions())
    assert sol.termination is Termination.U_CROSSED_ZERO
    zeros = sol.events_of(EventKind.U_ZERO)
    assert len(zeros) == 1
    ev = zeros[0]
    assert abs(ev.u) <= 1e-12
    assert ev.w < 0.0
    assert sol.r_end == ev.r
    # grid neighbours bracket the crossing to event tolerance
    i = np.searchsorted(sol.r, ev.r) - 1
    assert sol.u[i] > 0.0
    assert sol.u[-1] <= 1e-12


def test_events_bracketed_by_sign_changes():
    ode = _ode(1, 3.0, 1.0, "backward")
    sol = integrate(ode, 0.85, IntegratorOptions(r_max=30.0, stop_at_u_zero=False))
    ext = sol.events_of(EventKind.U_PRIME_ZERO)
    assert len(ext) >= 4  # bounded oscillation around the equilibrium
    for ev in ext:
        i = np.searchsorted(sol.r, ev.r)
        lo, hi = max(i - 1, 0), min(i + 1, len(sol.r) - 1)
        assert sol.w[lo] == 0.0 or sol.w[hi] == 0.0 or \
            (sol.w[lo] < 0.0) != (sol.w[hi] < 0.0)
        assert abs(ev.w) <= 1e-9


def test_stop_at_first_minimum():
    ode = _ode(1, 3.0, 1.0, "backward")
    sol = integrate(ode, 0.85, IntegratorOptions(stop_at_first_minimum=True))
    assert sol.termination is Termination.U_PRIME_VANISHED
    ev = sol.events[-1]
    assert ev.kind is EventKind.U_PRIME_ZERO
    assert ev.u > 0.0
    # minimum: the source is negative there (w' = -g > 0 turns w upward)
    assert ode.forcing.g(ev.u) < 0.0


def test_max_u_zero_events():
    # N = 1 slow profile continued past zero oscillates; cap the count
    ode = _ode(1, 3.0, 1.0, "backward")
    opts = IntegratorOptions(r_max=50.0, stop_at_u_zero=False,
                             max_u_zero_events=3)
    sol = integrate(ode, 2.0, opts)
    assert sol.termination is Termination.U_CROSSED_ZERO
    assert len(sol.zeros()) == 3
    rz = sol.zeros()
    assert all(b > a for a, b in zip(rz, rz[1:]))


def test_equilibrium_hit_and_stop():
    P = derive_params(1, 3.0, 1.0)
    ode = backward_ode(P)
    opts = IntegratorOptions(equilibrium_u=P.u_star, stop_at_equilibrium=True,
                             equilibrium_tol=1e-6, equilibrium_w_tol=1e-6)
    sol = integrate(ode, P.u_star, opts)
    assert sol.termination is Termination.U_PRIME_VANISHED
    assert sol.events[0].kind is EventKind.EQUILIBRIUM_HIT


def test_amplitude_samples_recorded():
    P = derive_params(1, 3.0, 1.0)
    ode = backward_ode(P)
    opts = IntegratorOptions(r_max=30.0, stop_at_u_zero=False,
                             record_amplitude=True, equilibrium_u=P.u_star)
    sol = integrate(ode, 0.9, opts)
    amps = sol.events_of(EventKind.AMPLITUDE_SAMPLE)
    assert len(amps) >= 4
    # the well is asymmetric, so amplitudes alternate between the two sides;
    # same-side amplitudes cannot grow (and stay flat for N = 1)
    devs = [abs(e.u - P.u_star) for e in amps]
    for a, b in zip(devs, devs[2:]):
        assert b <= a * (1.0 + 1e-6)
        assert b >= a * (1.0 - 1e-6)


# ------------------------------------------------------------ terminations

def test_reached_rmax():
    ode = _ode(2, 2.0, 1.0, "backward")
    sol = integrate(ode, 0.5, IntegratorOptions(
        r_max=10.0, stop_at_u_zero=False, u_ceiling=1e9))
    assert sol.termination is Termination.REACHED_RMAX
    assert sol.r_end == 10.0


def test_diverged_on_ceiling():
    # forward problem with unbounded growth hits the ceiling
    ode = _ode(3, 1.8, 1.0, "forward")
    sol = integrate(ode, 1.0, IntegratorOptions(
        r_max=1e4, stop_at_u_zero=False, u_ceiling=1e4))
    assert sol.termination is Termination.DIVERGED
    assert abs(sol.u[-1]) >= 1e4


def test_singular_floor_underflow():
    # fast backward with reachable u = 0: integration cannot falsify
    # positivity; it reports underflow at the floor instead of crashing
    ode = _ode(1, 1.2, 1.0, "backward")
    sol = integrate(ode, 1.0, IntegratorOptions(
        r_max=100.0, singular_floor=1e-8, stop_at_u_zero=False))
    assert sol.termination is Termination.STEP_UNDERFLOW
    assert sol.u[-1] <= 1e-8
    assert sol.u[-1] > 0.0


def test_grid_strictly_increasing():
    for N, p, chi, problem, u0 in ORACLE_CASES:
        ode = _ode(N, p, chi, problem)
        sol = integrate(ode, u0, IntegratorOptions(r_max=5.0, stop_at_u_zero=False))
        assert np.all(np.diff(sol.r) > 0.0)
        assert sol.r[0] > 0.0


# ---------------------------------------------------------------- energy

def test_energy_constant_in_one_dimension():
    ode = _ode(1, 3.0, 1.0, "backward")
    # bounded orbit followed over many periods
    sol = integrate(ode, 0.85, IntegratorOptions(r_max=30.0, stop_at_u_zero=False))
    chk = energy_derivative_check(sol)
    assert chk.max_drift <= 1e-6 * chk.scale
    # crossing trajectories up to their terminal zero
    for a in (1.5, 2.0):
        sol = integrate(ode, a, IntegratorOptions())
        chk = energy_derivative_check(sol)
        assert chk.max_drift <= 1e-6 * abs(chk.e0)


def test_energy_drift_stays_small_on_long_continuations():
    # past the zero the orbit keeps oscillating; drift accumulates with
    # step count but must stay a few digits above the per-step tolerance
    ode = _ode(1, 3.0, 1.0, "backward")
    sol = integrate(ode, 2.0, IntegratorOptions(r_max=30.0, stop_at_u_zero=False))
    chk = energy_derivative_check(sol, drift_tol=1e-5)
    assert chk.max_drift <= 1e-5 * abs(chk.e0)


def test_energy_nonincreasing_higher_dimensions():
    for N, p, problem, u0 in [(2, 2.5, "backward", 1.5),
                              (3, 3.0, "backward", 2.0),
                              (2, 2.0, "backward", 1.5),
                              (3, 1.8, "forward", 1.0),
                              (2, 3.0, "forward", 1.0)]:
        ode = _ode(N, p, 1.0, problem)
        sol = integrate(ode, u0, IntegratorOptions(
            r_max=20.0, stop_at_u_zero=False, u_ceiling=1e5))
        chk = energy_derivative_check(sol)
        assert chk.max_increase <= 1e-8 * chk.scale
        # the decrease matches the dissipation integral
        assert chk.max_defect <= 1e-6 * chk.scale


def test_energy_dissipation_identity_random_points():
    # dE/dr = -B (N-1)/r |u'|^p checked pointwise by finite differences
    ode = _ode(3, 2.5, 1.0, "backward")
    sol = integrate(ode, 1.5, IntegratorOptions(r_max=15.0, stop_at_u_zero=False))
    rs = RNG.uniform(0.5, 14.0, size=12)
    eps = 1e-5
    for r in rs:
        up, _ = sol.sample(r + eps)
        um, _ = sol.sample(r - eps)
        u0, w0 = sol.sample(r)
        e_p = energy(ode, *sol.sample(r + eps))
        e_m = energy(ode, *sol.sample(r - eps))
        dE = (e_p - e_m) / (2 * eps)
        pred = -ode.B_eff * (ode.params.N - 1.0) / r \
            * (abs(w0) / ode.B_eff) ** (ode.p_eff / (ode.p_eff - 1.0))
        assert abs(dE - pred) < 1e-4 * max(1.0, abs(pred))


def test_constant_equilibrium_profile():
    P = derive_params(2, 2.5, 1.0)
    ode = backward_ode(P)
    sol = integrate(ode, P.u_star, IntegratorOptions(r_max=100.0))
    assert sol.termination is Termination.REACHED_RMAX
    assert np.max(np.abs(sol.u - P.u_star)) < 1e-12
    assert np.max(np.abs(sol.w)) < 1e-12
    e = sol.energy
    assert np.max(np.abs(e - e[0])) < 1e-14 * max(1.0, abs(e[0]))


# ------------------------------------------------------------- residuals

@pytest.mark.parametrize("tol", [1e-8, 1e-10, 1e-12])
def test_local_residual_bound(tol):
    for N, p, chi, problem, u0 in ORACLE_CASES:
        ode = _ode(N, p, chi, problem)
        opts = IntegratorOptions(rel_tol=tol, abs_tol=tol, r_max=20.0,
                                 stop_at_u_zero=False, u_ceiling=1e5)
        sol = integrate(ode, u0, opts)
        rep = local_residual_check(sol)
        assert rep.max_w < 10.0, (N, p, problem, rep)
        assert rep.max_u_regular < 10.0, (N, p, problem, rep)


def test_forward_slow_monotone_flux():
    # forward slow: g > 0 on u > 0, so w < 0 and u decreases while positive
    ode = _ode(2, 3.0, 1.0, "forward")
    sol = integrate(ode, 1.0, IntegratorOptions(r_max=30.0))
    assert sol.termination is Termination.U_CROSSED_ZERO
    inside = sol.u > 0.0
    assert np.all(sol.w[inside] < 0.0)
    assert np.all(np.diff(sol.u[inside]) < 0.0)
