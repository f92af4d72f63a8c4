"""Time discretization of the game: forward-Euler state updates paired with
a rectangle-rule discounted sum.

For step h the discrete discount factor is beta = 1 - rho*h; the scheme is
only admissible for 0 < h < 1/rho so that beta stays inside (0, 1). The
auxiliary factor theta = -log(1 - rho*h)/(rho*h) > 1 measures how far the
per-step discount is from exp(-rho*h) and enters the consistency bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, InvalidInputError, InvalidStepError
from .games import GameDefinition
from .grids import profile_controls


@dataclass(frozen=True)
class TimeStep:
    h: float
    discount_rate: float
    beta: float
    theta: float


def make_timestep(rho: float, h: float) -> TimeStep:
    """Validate a step length and precompute its discount quantities."""
    if rho <= 0:
        raise InvalidInputError("discount rate must be positive")
    if h <= 0:
        raise InvalidStepError("step length must be positive")
    if h >= 1.0 / rho:
        raise InvalidStepError(
            f"h={h} >= 1/rho={1.0 / rho}: discrete discount factor would "
            "leave (0, 1)")
    x = rho * h
    return TimeStep(h=float(h), discount_rate=float(rho),
                    beta=1.0 - x, theta=-math.log1p(-x) / x)


@dataclass(frozen=True)
class DiscreteTrajectory:
    """Euler chain x_{n+1} = clamp(x_n + h*g(x_n, u_n)) with the controls
    read from feedback strategies at each state."""

    h: float
    states: np.ndarray          # (steps+1, state_dim)
    controls: tuple             # per player, (steps, control_dim)
    clamped: np.ndarray         # (steps,) bool, True when clamping moved the state

    @property
    def steps(self) -> int:
        return self.states.shape[0] - 1

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.states.shape[0]) * self.h


@dataclass(frozen=True)
class DiscretePayoff:
    """Truncated discounted sum plus the geometric tail bound it satisfies."""

    value: float
    tail_bound: float
    steps: int

    @property
    def error_bound(self) -> float:
        return self.tail_bound


def euler_step(game: GameDefinition, x, controls, h: float):
    """One forward-Euler update, clamped to the state box.

    Returns (next_state, clamped) where ``clamped`` reports whether the
    projection onto the box moved the state.
    """
    x = np.asarray(x, dtype=float)
    us = [np.asarray(u, dtype=float) for u in controls]
    raw = x + h * np.asarray(game.dynamics(x, us), dtype=float)
    nxt = game.state_domain.clamp(raw)
    return nxt, bool(np.any(nxt != raw))


def _controls_at(game, strategies, x_batch):
    """Interpolated controls for a batch of states, clamped into each box."""
    return profile_controls(strategies, x_batch)


def _rollout_batch(game, strategies, x0_batch, ts, n_steps):
    """Vectorized Euler rollout over a batch of initial states.

    Returns (states (J+1, B, n), controls list of (J, B, m_i),
    clamped (J, B)). Raises DivergenceError naming the first bad step.
    """
    x = np.atleast_2d(np.asarray(x0_batch, dtype=float))
    batch, n = x.shape
    if n != game.state_dim:
        raise InvalidInputError("initial states have wrong dimension")
    states = np.empty((n_steps + 1, batch, n))
    controls = [np.empty((n_steps, batch, m)) for m in game.control_dims]
    clamped = np.empty((n_steps, batch), dtype=bool)
    states[0] = x
    for k in range(n_steps):
        us = _controls_at(game, strategies, states[k])
        for i, u in enumerate(us):
            controls[i][k] = u
        raw = states[k] + ts.h * np.asarray(
            game.dynamics(states[k], us), dtype=float)
        if not np.isfinite(raw).all():
            raise DivergenceError(k + 1)
        nxt = game.state_domain.clamp(raw)
        clamped[k] = np.any(nxt != raw, axis=-1)
        states[k + 1] = nxt
    return states, controls, clamped


def rollout_discrete(game: GameDefinition, strategies, x0, ts: TimeStep,
                     n_steps: int) -> DiscreteTrajectory:
    """Roll the Euler chain forward under feedback strategies.

    Parameters
    ----------
    strategies : per-player StrategyField
    x0 : state vector inside the state box
    n_steps : number of Euler steps, >= 1
    """
    if n_steps < 1:
        raise InvalidInputError("n_steps must be at least 1")
    if len(strategies) != game.n_players:
        raise InvalidInputError("need one strategy per player")
    states, controls, clamped = _rollout_batch(
        game, strategies, np.asarray(x0, dtype=float)[None, :], ts, n_steps)
    return DiscreteTrajectory(
        h=ts.h,
        states=states[:, 0, :],
        controls=tuple(c[:, 0, :] for c in controls),
        clamped=clamped[:, 0],
    )


def truncation_steps(game: GameDefinition, ts: TimeStep, tol: float) -> int:
    """Smallest horizon J (>= 1) whose geometric tail bound
    M * beta^J * h / (1 - beta) falls below tol."""
    if tol <= 0:
        raise InvalidInputError("tolerance must be positive")
    if game.hypothesis is None:
        raise InvalidInputError(
            "discrete payoff needs the payoff bound; attach HypothesisData "
            "to the game or run estimate_constants")
    m_bound = game.hypothesis.payoff_bound
    if m_bound == 0.0:
        return 1
    # tail(J) = M beta^J h/(1-beta) = M beta^J / rho
    target = ts.discount_rate * tol / m_bound
    if target >= 1.0:
        return 1
    return max(1, math.ceil(math.log(target) / math.log(ts.beta) - 1e-12))


def _tail_bound(game, ts, steps):
    m_bound = game.hypothesis.payoff_bound
    return m_bound * ts.beta ** steps / ts.discount_rate


def _discrete_payoff_batch(game, player, strategies, x0_batch, ts, tol,
                           n_steps=None):
    steps = truncation_steps(game, ts, tol) if n_steps is None else n_steps
    states, controls, _ = _rollout_batch(game, strategies, x0_batch, ts, steps)
    # payoff at (step, batch): evaluate on the whole trajectory at once
    us = [c.reshape(steps * states.shape[1], -1) for c in controls]
    xs = states[:-1].reshape(steps * states.shape[1], -1)
    f = np.asarray(game.payoffs[player](xs, us), dtype=float)
    f = f.reshape(steps, states.shape[1])
    weights = ts.beta ** np.arange(steps)
    values = ts.h * (weights[:, None] * f).sum(axis=0)
    return values, _tail_bound(game, ts, steps), steps


def discrete_payoff(game: GameDefinition, player: int, strategies, x0,
                    ts: TimeStep, tol: float) -> DiscretePayoff:
    """Discounted rectangle-rule payoff of a strategy profile, truncated at
    the smallest horizon whose geometric tail bound is below ``tol``.

    Returns the partial sum together with the tail bound actually used, so
    callers can budget total evaluation error. Players are indexed 0..N-1.
    """
    if not 0 <= player < game.n_players:
        raise InvalidInputError("player index out of range")
    values, tail, steps = _discrete_payoff_batch(
        game, player, strategies, np.asarray(x0, dtype=float)[None, :], ts, tol)
    return DiscretePayoff(value=float(values[0]), tail_bound=float(tail),
                          steps=steps)
