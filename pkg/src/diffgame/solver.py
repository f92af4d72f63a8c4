"""Coupled fixed-point solver for the discrete-time game.

Each player's problem, against frozen opponent feedback, is the dynamic
program

    V_i(x) = max_u { h*f_i(x, u, opp(x)) + beta * V_i(x + h*g(x, u, opp(x))) }

solved by value iteration on the grid: the operator is a beta-contraction
in sup norm because multilinear interpolation is nonexpansive. The running
payoff carries the factor h so that the fixed point equals the discounted
rectangle-rule objective (the value then scales like the continuous one).

The coupled system is attacked with damped Gauss-Seidel best-response
sweeps: players are updated in index order, each against the most recent
opponents, until the strategy profile is stationary. The control max is an
exhaustive search over a uniform lattice of the control box; ties resolve
to the lexicographically smallest control so runs are reproducible.

The transversality side condition of the discrete verification theorem
(the discounted value along the chain vanishes asymptotically) holds by
construction here and is not tested: grid values are bounded and the
discount factor lies strictly inside (0, 1), so beta^n * V(x_n) -> 0.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import (InnerConvergenceError, InvalidInputError,
                     OuterConvergenceError)
from .discretize import TimeStep
from .games import GameDefinition
from .grids import Grid, GridFunction, StrategyField


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and resolutions of the coupled solve.

    control_samples is the per-dimension lattice resolution of the control
    max, either one integer for all players or one per player. inner_tol is
    a bound on the sup-norm distance of each value function to its
    best-response fixed point (the stopping residual is rescaled by
    1 - beta to certify this). outer_tol bounds the sup-norm change of the
    undamped best-response strategies over a sweep.
    """

    control_samples: object = 101
    inner_tol: float = 1e-6
    outer_tol: float = 1e-4
    max_inner: int = 50_000
    max_outer: int = 100
    damping: float = 1.0

    def __post_init__(self):
        if self.inner_tol <= 0 or self.outer_tol <= 0:
            raise InvalidInputError("tolerances must be positive")
        if not 0 < self.damping <= 1:
            raise InvalidInputError("damping must lie in (0, 1]")
        if self.max_inner < 1 or self.max_outer < 1:
            raise InvalidInputError("iteration limits must be positive")
        for s in np.atleast_1d(self.control_samples):
            if int(s) < 2:
                raise InvalidInputError("control_samples must be >= 2")

    def samples_for(self, player: int, n_players: int) -> int:
        samples = np.atleast_1d(self.control_samples)
        if samples.size == 1:
            return int(samples[0])
        if samples.size != n_players:
            raise InvalidInputError(
                "control_samples must be scalar or one per player")
        return int(samples[player])

    def to_dict(self) -> dict:
        samples = np.atleast_1d(self.control_samples)
        return {
            "control_samples": int(samples[0]) if samples.size == 1
            else [int(s) for s in samples],
            "inner_tol": self.inner_tol,
            "outer_tol": self.outer_tol,
            "max_inner": self.max_inner,
            "max_outer": self.max_outer,
            "damping": self.damping,
        }


@dataclass
class SolveDiagnostics:
    outer_sweeps: int = 0
    inner_iterations: list = field(default_factory=list)  # per sweep, per player
    final_inner_residuals: tuple = ()
    final_strategy_change: float = float("nan")
    bellman_residuals: tuple = ()
    converged: bool = False
    stop_reason: str = ""
    backend: str = ""
    runtime_seconds: float = 0.0

    def to_dict(self) -> dict:
        return {
            "outer_sweeps": self.outer_sweeps,
            "inner_iterations": self.inner_iterations,
            "final_inner_residuals": list(self.final_inner_residuals),
            "final_strategy_change": self.final_strategy_change,
            "bellman_residuals": list(self.bellman_residuals),
            "converged": self.converged,
            "stop_reason": self.stop_reason,
            "backend": self.backend,
            "runtime_seconds": self.runtime_seconds,
        }


@dataclass(frozen=True)
class NashSolution:
    """Per-player value functions and greedy feedback strategies of the
    discrete game, plus solve diagnostics."""

    values: tuple       # per player GridFunction
    strategies: tuple   # per player StrategyField
    ts: TimeStep
    diagnostics: SolveDiagnostics

    @property
    def grid(self) -> Grid:
        return self.values[0].grid


class _PlayerStage:
    """Per-player precomputation for repeated operator application.

    The stage payoff h-weighted term and the interpolation stencil of the
    Euler targets depend only on the opponents' node controls, not on the
    value iterate, so value iteration reduces to gather + fma + max.
    """

    def __init__(self, game, player, strategies, ts, grid, cfg):
        if not grid.spans(game.state_domain):
            raise InvalidInputError("grid must span the state box")
        samples = cfg.samples_for(player, game.n_players)
        self.lattice = game.control_sets[player].lattice(samples)  # (C, m)
        x = grid.points                                            # (M, n)
        n_controls = self.lattice.shape[0]
        m_nodes = x.shape[0]

        controls = []
        for j in range(game.n_players):
            if j == player:
                controls.append(self.lattice[:, None, :])          # (C, 1, m)
            else:
                controls.append(strategies[j].controls[None, :, :])  # (1, M, m)
        xb = x[None, :, :]

        stage = np.asarray(game.payoffs[player](xb, controls), dtype=float)
        drift = np.asarray(game.dynamics(xb, controls), dtype=float)
        stage = np.broadcast_to(stage, (n_controls, m_nodes)).copy()
        targets = xb + ts.h * drift
        targets = np.broadcast_to(
            targets, (n_controls, m_nodes, game.state_dim))

        idx, w = grid.stencil(targets.reshape(-1, game.state_dim))
        corners = idx.shape[-1]
        self.stage = stage
        self.idx = np.ascontiguousarray(
            idx.reshape(n_controls, m_nodes, corners))
        self.w = np.ascontiguousarray(
            w.reshape(n_controls, m_nodes, corners))
        self.h = ts.h
        self.beta = ts.beta

    def apply(self, values: np.ndarray):
        new_values, best = kernels.ACTIVE["bellman"](
            values, self.stage, self.idx, self.w, self.h, self.beta)
        return new_values, best

    def greedy(self, best) -> np.ndarray:
        return self.lattice[best]


def bellman_operator(game: GameDefinition, player: int, v: GridFunction,
                     opponents, ts: TimeStep, cfg: SolverConfig):
    """One application of player ``player``'s dynamic-programming operator
    against the opponents' current feedback.

    ``opponents`` is the full per-player strategy list; entry ``player`` is
    ignored. Returns the updated value function and the argmax strategy.
    """
    stage = _PlayerStage(game, player, opponents, ts, v.grid, cfg)
    new_values, best = stage.apply(v.values)
    return (GridFunction(v.grid, new_values),
            StrategyField(v.grid, stage.greedy(best),
                          game.control_sets[player]))


def _iterate_to_fixed_point(stage, v0, cfg, player):
    v = np.ascontiguousarray(v0, dtype=float)
    threshold = cfg.inner_tol * (1.0 - stage.beta)
    residual = np.inf
    for it in range(1, cfg.max_inner + 1):
        v_new, best = stage.apply(v)
        residual = float(np.max(np.abs(v_new - v)))
        v = v_new
        if residual <= threshold:
            return v, best, it, residual
    raise InnerConvergenceError(player, cfg.max_inner, residual)


def best_response_value(game: GameDefinition, player: int, opponents,
                        ts: TimeStep, cfg: SolverConfig, v0: GridFunction):
    """Value iteration to player ``player``'s best-response fixed point.

    Stops once successive iterates differ by at most inner_tol*(1 - beta)
    in sup norm, which certifies a fixed-point distance of inner_tol.
    Returns (value, greedy strategy, iterations).
    """
    stage = _PlayerStage(game, player, opponents, ts, v0.grid, cfg)
    v, best, iters, _ = _iterate_to_fixed_point(stage, v0.values, cfg, player)
    return (GridFunction(v0.grid, v),
            StrategyField(v0.grid, stage.greedy(best),
                          game.control_sets[player]),
            iters)


def bellman_residual(game: GameDefinition, sol: NashSolution,
                     cfg: SolverConfig) -> tuple:
    """Sup-norm defect of each stored value function under one operator
    application against the stored strategy profile."""
    out = []
    for i in range(game.n_players):
        updated, _ = bellman_operator(
            game, i, sol.values[i], sol.strategies, sol.ts, cfg)
        out.append(float(np.max(np.abs(updated.values - sol.values[i].values))))
    return tuple(out)


def _strategy_change(old: StrategyField, new_controls: np.ndarray) -> float:
    return float(np.max(np.linalg.norm(new_controls - old.controls, axis=-1)))


def _oscillating(history, window=5):
    # flag when the change has not decreased across `window` consecutive sweeps
    if len(history) < window + 1:
        return False
    tail = history[-(window + 1):]
    return all(tail[k + 1] >= tail[k] for k in range(window))


def solve_nash(game: GameDefinition, grid: Grid, ts: TimeStep,
               cfg: SolverConfig, init=None) -> NashSolution:
    """Damped Gauss-Seidel best-response iteration on the coupled system.

    Starting from zero values and control-box-midpoint strategies (or the
    ``init`` (values, strategies) warm start), each sweep updates every
    player's value to its best response against the current opponents and
    moves its strategy toward the greedy one with the configured damping.
    The sweep stops once the largest undamped strategy change falls below
    outer_tol. Non-convergence (iteration budget or a change sequence that
    has stopped decreasing for 5 sweeps) raises OuterConvergenceError
    carrying the partial solution.
    """
    t0 = time.perf_counter()
    if init is None:
        values = [GridFunction(grid, np.zeros(grid.num_nodes))
                  for _ in range(game.n_players)]
        strategies = [
            StrategyField.constant(grid, box.midpoint(), box)
            for box in game.control_sets
        ]
    else:
        init_values, init_strategies = (
            (init.values, init.strategies) if isinstance(init, NashSolution)
            else init)
        values = list(init_values)
        strategies = list(init_strategies)
        if len(values) != game.n_players or len(strategies) != game.n_players:
            raise InvalidInputError("warm start must cover every player")
        if not all(v.grid.same_as(grid) for v in values):
            raise InvalidInputError("warm start lives on a different grid")

    diag = SolveDiagnostics(backend=kernels.backend_name())
    history = []

    def _partial(reason):
        diag.converged = False
        diag.stop_reason = reason
        diag.final_strategy_change = history[-1] if history else float("nan")
        diag.runtime_seconds = time.perf_counter() - t0
        return NashSolution(tuple(values), tuple(strategies), ts, diag)

    for sweep in range(1, cfg.max_outer + 1):
        sweep_change = 0.0
        sweep_iters = []
        sweep_residuals = []
        for i in range(game.n_players):
            stage = _PlayerStage(game, i, strategies, ts, grid, cfg)
            try:
                v, best, iters, residual = _iterate_to_fixed_point(
                    stage, values[i].values, cfg, i)
            except InnerConvergenceError as err:
                diag.outer_sweeps = sweep
                raise OuterConvergenceError(str(err), _partial(
                    "inner non-convergence")) from err
            greedy = stage.greedy(best)
            sweep_change = max(sweep_change,
                               _strategy_change(strategies[i], greedy))
            mixed = (strategies[i].controls
                     + cfg.damping * (greedy - strategies[i].controls))
            strategies[i] = StrategyField(grid, mixed, game.control_sets[i])
            values[i] = GridFunction(grid, v)
            sweep_iters.append(iters)
            sweep_residuals.append(residual)
        history.append(sweep_change)
        diag.inner_iterations.append(sweep_iters)
        diag.outer_sweeps = sweep
        diag.final_inner_residuals = tuple(sweep_residuals)
        if sweep_change <= cfg.outer_tol:
            diag.converged = True
            diag.stop_reason = "strategy profile stationary"
            break
        if _oscillating(history):
            raise OuterConvergenceError(
                "oscillation detected: strategy change not decreasing over "
                "5 sweeps", _partial("oscillation"))
    else:
        raise OuterConvergenceError(
            f"no stationary profile within {cfg.max_outer} sweeps",
            _partial("max_outer reached"))

    diag.final_strategy_change = history[-1]
    solution = NashSolution(tuple(values), tuple(strategies), ts, diag)
    diag.bellman_residuals = bellman_residual(game, solution, cfg)
    diag.runtime_seconds = time.perf_counter() - t0
    return solution
