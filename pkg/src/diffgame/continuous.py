"""High-accuracy continuous-time evaluation of a strategy profile.

The closed-loop field x -> g(x, phi_1(x), ..., phi_N(x)) is integrated with
fixed-step classical Runge-Kutta and the discounted payoff integral with
composite Simpson quadrature on the same time grid. Fixed steps (rather
than adaptive ones) keep certification runs bitwise reproducible; the step
dt is a reported parameter, by convention h/20 so that the Euler
discretization error under study dominates the evaluator's own error.

Trajectory-side diagnostics check the linear-growth envelope of the state
and the Gronwall bound on the distance between the continuous trajectory
and its piecewise-constant Euler interpolant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .discretize import TimeStep, _rollout_batch
from .errors import DivergenceError, InvalidInputError
from .games import GameDefinition, HypothesisData
from .grids import lipschitz_estimate, profile_controls


@dataclass(frozen=True)
class ContinuousTrajectory:
    dt: float
    times: np.ndarray
    states: np.ndarray              # (steps+1, state_dim)
    clamped: np.ndarray             # (steps+1,) bool; sample 0 never clamped

    @property
    def steps(self) -> int:
        return self.states.shape[0] - 1


@dataclass(frozen=True)
class ContinuousPayoff:
    """Quadrature value of the discounted integral with its error budget:
    the horizon-truncation tail plus a Richardson estimate of the Simpson
    error (coarse/fine comparison divided by 15)."""

    value: float
    tail_bound: float
    quadrature_estimate: float
    horizon: float
    steps: int

    @property
    def error_bound(self) -> float:
        return self.tail_bound + self.quadrature_estimate


def _closed_loop_field(game, strategies):
    def field(x_batch):
        us = profile_controls(strategies, x_batch)
        return np.asarray(game.dynamics(x_batch, us), dtype=float)
    return field


def _integrate_batch(game, strategies, x0_batch, n_steps, dt):
    """RK4 on the closed loop for a batch of initial states.

    Stage points may poke slightly outside the state box; strategies clamp
    their queries, and the benchmark dynamics are polynomial, so this is
    harmless. The end state of each step is clamped with a flag.
    """
    field = _closed_loop_field(game, strategies)
    x = np.atleast_2d(np.asarray(x0_batch, dtype=float))
    batch, n = x.shape
    states = np.empty((n_steps + 1, batch, n))
    clamped = np.zeros((n_steps + 1, batch), dtype=bool)
    states[0] = x
    half = 0.5 * dt
    for k in range(n_steps):
        xk = states[k]
        k1 = field(xk)
        k2 = field(xk + half * k1)
        k3 = field(xk + half * k2)
        k4 = field(xk + dt * k3)
        raw = xk + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.isfinite(raw).all():
            raise DivergenceError(k + 1)
        nxt = game.state_domain.clamp(raw)
        clamped[k + 1] = np.any(nxt != raw, axis=-1)
        states[k + 1] = nxt
    return states, clamped


def integrate_closed_loop(game: GameDefinition, strategies, x0, T: float,
                          dt: float) -> ContinuousTrajectory:
    """Integrate the feedback closed loop from x0 over [0, T].

    The horizon is rounded up to a whole number of steps. Raises
    DivergenceError naming the first step with a non-finite state.
    """
    if dt <= 0:
        raise InvalidInputError("dt must be positive")
    if T < dt:
        raise InvalidInputError("horizon must be at least one step")
    if len(strategies) != game.n_players:
        raise InvalidInputError("need one strategy per player")
    n_steps = int(math.ceil(T / dt - 1e-12))
    states, clamped = _integrate_batch(
        game, strategies, np.asarray(x0, dtype=float)[None, :], n_steps, dt)
    return ContinuousTrajectory(
        dt=float(dt), times=np.arange(n_steps + 1) * dt,
        states=states[:, 0, :], clamped=clamped[:, 0])


def _simpson(samples, dt):
    """Composite Simpson along axis 0; needs an even step count."""
    n = samples.shape[0] - 1
    acc = samples[0] + samples[-1]
    acc = acc + 4.0 * samples[1:-1:2].sum(axis=0)
    if n > 2:
        acc = acc + 2.0 * samples[2:-1:2].sum(axis=0)
    return acc * (dt / 3.0)


def payoff_horizon(game: GameDefinition, tol: float) -> float:
    """Horizon T with continuous tail (M/rho) * exp(-rho*T) <= tol/2."""
    if game.hypothesis is None:
        raise InvalidInputError(
            "continuous payoff needs the payoff bound; attach HypothesisData "
            "to the game or run estimate_constants")
    m_bound = game.hypothesis.payoff_bound
    rho = game.discount_rate
    if m_bound == 0.0:
        return 0.0
    return max(0.0, math.log(2.0 * m_bound / (rho * tol)) / rho)


def _continuous_payoff_batch(game, player, strategies, x0_batch, tol, dt,
                             horizon=None):
    rho = game.discount_rate
    horizon = payoff_horizon(game, tol) if horizon is None else horizon
    # multiple of 4 steps so both the fine and the coarsened Simpson rule
    # see an even interval count
    n_steps = 4 * max(1, int(math.ceil(horizon / (4.0 * dt) - 1e-12)))
    t_end = n_steps * dt
    states, _ = _integrate_batch(game, strategies, x0_batch, n_steps, dt)

    flat = states.reshape(-1, game.state_dim)
    us = profile_controls(strategies, flat)
    f = np.asarray(game.payoffs[player](flat, us), dtype=float)
    f = f.reshape(states.shape[0], states.shape[1])
    weights = np.exp(-rho * np.arange(n_steps + 1) * dt)
    integrand = f * weights[:, None]

    fine = _simpson(integrand, dt)
    coarse = _simpson(integrand[::2], 2.0 * dt)
    quad_est = np.abs(fine - coarse) / 15.0
    tail = game.hypothesis.payoff_bound / rho * math.exp(-rho * t_end)
    return fine, tail, quad_est, t_end, n_steps


def continuous_payoff(game: GameDefinition, player: int, strategies, x0,
                      tol: float, dt: float,
                      horizon: float = None) -> ContinuousPayoff:
    """Discounted continuous payoff of a strategy profile from x0.

    The horizon is chosen so the truncation tail is below tol/2 (or taken
    from ``horizon`` when given, with the tail recomputed accordingly); the
    reported budget adds an empirical Simpson error estimate. Players are
    indexed 0..N-1.
    """
    if not 0 <= player < game.n_players:
        raise InvalidInputError("player index out of range")
    if tol <= 0 or dt <= 0:
        raise InvalidInputError("tol and dt must be positive")
    value, tail, quad, t_end, steps = _continuous_payoff_batch(
        game, player, strategies, np.asarray(x0, dtype=float)[None, :],
        tol, dt, horizon=horizon)
    return ContinuousPayoff(value=float(value[0]), tail_bound=float(tail),
                            quadrature_estimate=float(quad[0]),
                            horizon=t_end, steps=steps)


@dataclass(frozen=True)
class GrowthBoundReport:
    """Check of |y(t)| <= (|x0| + sqrt(2Kt)) * exp(Kt) along a trajectory.

    For K = 0 the dynamics vanish and the trajectory is frozen, so the
    bound degenerates to |y(t)| = |x0|; that trivially valid form is used.
    """

    satisfied: bool
    worst_margin: float
    times: np.ndarray
    norms: np.ndarray
    bounds: np.ndarray


def growth_bound_check(traj: ContinuousTrajectory, growth_const: float,
                       x0) -> GrowthBoundReport:
    if growth_const < 0:
        raise InvalidInputError("growth constant must be nonnegative")
    t = traj.times
    norms = np.linalg.norm(traj.states, axis=-1)
    base = float(np.linalg.norm(np.asarray(x0, dtype=float)))
    if growth_const == 0.0:
        bounds = np.full_like(t, base)
    else:
        bounds = (base + np.sqrt(2.0 * growth_const * t)) * np.exp(
            growth_const * t)
    margins = bounds - norms
    worst = float(margins.min())
    return GrowthBoundReport(satisfied=worst >= -1e-12, worst_margin=worst,
                             times=t, norms=norms, bounds=bounds)


@dataclass(frozen=True)
class GronwallGapReport:
    """Measured gap between the continuous trajectory y(t) and the
    piecewise-constant Euler interpolant, against the Gronwall envelope
    K*h*(1 + (|x0| + sqrt(2Kt))e^{Kt}) * e^{Lt} with L = L_g(1 + N*L_s)."""

    satisfied: bool
    sup_gap: float
    worst_margin: float
    times: np.ndarray
    gaps: np.ndarray
    bounds: np.ndarray
    continuous: np.ndarray
    interpolant: np.ndarray


def gronwall_gap_check(game: GameDefinition, strategies, x0, ts: TimeStep,
                       T: float, constants: HypothesisData,
                       dt: float = None) -> GronwallGapReport:
    """Compare sup_t |y(t) - ytilde(t)| on [0, T] with the Gronwall bound.

    ``constants.strategy_lip`` must dominate the Lipschitz modulus of every
    strategy in the profile, otherwise the bound's L is not the right one
    and the check refuses to run. dt defaults to h/20 and is snapped so a
    whole number of fine steps spans each Euler step.
    """
    ls = max(lipschitz_estimate(s) for s in strategies)
    if ls > constants.strategy_lip * (1 + 1e-9) + 1e-12:
        raise InvalidInputError(
            f"strategy Lipschitz modulus {ls:.6g} exceeds the L_s="
            f"{constants.strategy_lip:.6g} carried by the constants")
    if T < ts.h:
        raise InvalidInputError("horizon must cover at least one Euler step")
    per = max(1, int(round(ts.h / (dt if dt else ts.h / 20.0))))
    dt_fine = ts.h / per
    n_coarse = int(math.ceil(T / ts.h - 1e-12))
    n_fine = n_coarse * per

    x0 = np.asarray(x0, dtype=float)
    disc_states, _, _ = _rollout_batch(
        game, strategies, x0[None, :], ts, n_coarse)
    cont_states, _ = _integrate_batch(
        game, strategies, x0[None, :], n_fine, dt_fine)

    times = np.arange(n_fine + 1) * dt_fine
    coarse_index = np.minimum(np.arange(n_fine + 1) // per, n_coarse)
    interpolant = disc_states[coarse_index, 0, :]
    continuous = cont_states[:, 0, :]
    gaps = np.linalg.norm(continuous - interpolant, axis=-1)

    growth = constants.growth_const
    lam = constants.combined_lip
    base = float(np.linalg.norm(x0))
    envelope = (base + np.sqrt(2.0 * growth * times)) * np.exp(growth * times)
    bounds = growth * ts.h * (1.0 + envelope) * np.exp(lam * times)
    margins = bounds - gaps
    worst = float(margins.min())
    return GronwallGapReport(
        satisfied=worst >= -1e-12,
        sup_gap=float(gaps.max()),
        worst_margin=worst,
        times=times, gaps=gaps, bounds=bounds,
        continuous=continuous, interpolant=interpolant)
