"""Executable checks of the discretization guarantees.

Three families of checks, each against the continuous-time evaluator:

* consistency gaps |W_h - W| for a fixed strategy profile, and their
  empirical decay rate in h fitted on a log-log scale;
* epsilon-Nash certification of a solved discrete equilibrium, measured as
  the largest continuous-payoff improvement any member of a finite,
  deterministic family of Lipschitz deviations achieves;
* a pointwise residual of the stationary Hamilton-Jacobi-Bellman system,
  with grid-gradient central differences, as an independent cross-check on
  low-dimensional benchmarks.

Any gap or improvement smaller than the combined evaluator error budget is
treated as zero: below that floor the sign of a difference is quadrature
noise, and fitting rates to it would be meaningless. Deviation families are
finite and explicitly reported; no claim of coverage of the full Lipschitz
strategy class is ever made.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .continuous import _continuous_payoff_batch, continuous_payoff
from .discretize import TimeStep, _discrete_payoff_batch, make_timestep
from .errors import InvalidInputError
from .games import GameDefinition, HypothesisData, rate_condition_margin
from .grids import (GridFunction, StrategyField, interpolate,
                    lipschitz_estimate)
from .solver import NashSolution


@dataclass(frozen=True)
class ConsistencyGap:
    player: int
    gap: float
    budget: float
    discrete_value: float
    continuous_value: float


def consistency_gap(game: GameDefinition, strategies, x0, ts: TimeStep,
                    tol: float, dt: float = None):
    """|discrete payoff - continuous payoff| per player at one initial
    state, with the combined evaluator budget attached."""
    dt = dt if dt is not None else ts.h / 20.0
    out = []
    for i in range(game.n_players):
        disc = _discrete_payoff_batch(
            game, i, strategies, np.asarray(x0, float)[None, :], ts, tol)
        cont = continuous_payoff(game, i, strategies, x0, tol, dt)
        gap = abs(float(disc[0][0]) - cont.value)
        out.append(ConsistencyGap(
            player=i, gap=gap,
            budget=float(disc[1]) + cont.error_bound,
            discrete_value=float(disc[0][0]),
            continuous_value=cont.value))
    return out


@dataclass
class RateStudy:
    slope: float
    constant: float
    rows: list                  # dicts: h, player, x0, gap, budget
    excluded: list
    warnings: list
    regime: str
    degenerate: bool

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "constant": self.constant,
            "rows": self.rows,
            "excluded": self.excluded,
            "warnings": self.warnings,
            "regime": self.regime,
            "degenerate": self.degenerate,
        }


def rate_study(game: GameDefinition, strategies, x0_samples, h_list,
               tol: float = 1e-9, dt: float = None,
               constants: Optional[HypothesisData] = None) -> RateStudy:
    """Fit the consistency-gap decay rate over a list of steps.

    The continuous payoff of the fixed profile is evaluated once per
    (player, x0) at the finest resolution; the discrete payoff once per h.
    Gaps below the combined evaluator budget are excluded from the fit with
    a warning since the rate cannot be resolved below the noise floor.
    """
    h_list = [float(h) for h in h_list]
    if len(h_list) < 3:
        raise InvalidInputError("rate study needs at least 3 step sizes")
    if any(b <= a for a, b in zip(h_list[1:], h_list[:-1])):
        raise InvalidInputError("h_list must be strictly decreasing")
    rho = game.discount_rate
    if h_list[0] >= 1.0 / rho:
        raise InvalidInputError("every h must satisfy h < 1/rho")

    hyp = constants if constants is not None else game.hypothesis
    regime = "unknown (no hypothesis constants)"
    if hyp is not None:
        ls = max(lipschitz_estimate(s) for s in strategies)
        margins = rate_condition_margin(hyp.with_strategy_lip(ls), rho)
        regime = ("O(h) rate guaranteed" if margins.rate_guaranteed
                  else "outside guaranteed regime")

    dt_fine = dt if dt is not None else min(h_list) / 20.0
    x0_batch = np.atleast_2d(np.asarray(x0_samples, dtype=float))

    cont = []
    for i in range(game.n_players):
        vals, tail, quad, _, _ = _continuous_payoff_batch(
            game, i, strategies, x0_batch, tol, dt_fine)
        cont.append((vals, tail + quad))

    rows, excluded, warnings = [], [], []
    for h in h_list:
        ts = make_timestep(rho, h)
        for i in range(game.n_players):
            disc_vals, disc_tail, _ = _discrete_payoff_batch(
                game, i, strategies, x0_batch, ts, tol)
            for k in range(x0_batch.shape[0]):
                gap = abs(float(disc_vals[k]) - float(cont[i][0][k]))
                budget = float(disc_tail) + float(cont[i][1][k])
                row = {"h": h, "player": i,
                       "x0": list(map(float, x0_batch[k])),
                       "gap": gap, "budget": budget}
                if gap <= budget:
                    excluded.append(row)
                    warnings.append(
                        f"gap at h={h}, player {i + 1}, x0={row['x0']} is "
                        f"below the evaluator budget {budget:.3e}; excluded")
                else:
                    rows.append(row)

    if not rows:
        return RateStudy(slope=float("nan"), constant=float("nan"),
                         rows=rows, excluded=excluded, warnings=warnings
                         + ["degenerate: exact scheme (all gaps at noise floor)"],
                         regime=regime, degenerate=True)

    logs_h = np.log([r["h"] for r in rows])
    logs_g = np.log([r["gap"] for r in rows])
    slope, intercept = np.polyfit(logs_h, logs_g, 1)
    return RateStudy(slope=float(slope), constant=float(math.exp(intercept)),
                     rows=rows, excluded=excluded, warnings=warnings,
                     regime=regime, degenerate=False)


@dataclass(frozen=True)
class Deviation:
    label: str
    field: StrategyField


@dataclass(frozen=True)
class DeviationFamilyConfig:
    """Parameters of the deterministic deviation family.

    lipschitz_cap is the L_s bound every member must satisfy; it is a
    reported parameter of the certification, not a silent choice. The
    family contains, in order: the equilibrium itself, any injected
    strategies (analytic oracles), constants on a small control lattice,
    clamped scalings of the equilibrium, and seeded smooth perturbations;
    it is truncated to ``count`` members.
    """

    count: int = 12
    seed: int = 7
    lipschitz_cap: float = 2.0
    constant_samples: int = 3
    scale_factors: tuple = (0.5, 0.9, 1.1, 1.5)
    residual_max: float = 1e-3

    def __post_init__(self):
        if self.count < 1:
            raise InvalidInputError("family count must be at least 1")
        if self.lipschitz_cap <= 0:
            raise InvalidInputError("lipschitz_cap must be positive")


def deviation_family(game: GameDefinition, player: int,
                     equilibrium: StrategyField, lipschitz_cap: float,
                     count: int, seed: int, extra=(),
                     constant_samples: int = 3,
                     scale_factors=(0.5, 0.9, 1.1, 1.5)):
    """Deterministic family of admissible deviations for one player.

    Every returned member satisfies the Lipschitz cap; scaled equilibria
    that violate it are skipped, random perturbations are regenerated with
    shrinking amplitude and only reported impossible after that fails.
    """
    if count < 1:
        raise InvalidInputError("count must be at least 1")
    box = game.control_sets[player]
    grid = equilibrium.grid
    eq_lip = lipschitz_estimate(equilibrium)
    if eq_lip > lipschitz_cap * (1 + 1e-9):
        raise InvalidInputError(
            f"equilibrium Lipschitz modulus {eq_lip:.6g} exceeds the cap "
            f"{lipschitz_cap:.6g}; raise lipschitz_cap")

    members = [Deviation("equilibrium", equilibrium)]
    for k, fld in enumerate(extra):
        if lipschitz_estimate(fld) > lipschitz_cap * (1 + 1e-9):
            raise InvalidInputError(
                f"injected deviation {k} violates the Lipschitz cap")
        members.append(Deviation(f"injected-{k}", fld))

    for u in box.lattice(constant_samples):
        label = "constant@(" + ",".join(repr(float(v)) for v in u) + ")"
        members.append(Deviation(label, StrategyField.constant(grid, u, box)))

    for factor in scale_factors:
        scaled = box.clamp(factor * equilibrium.controls)
        fld = StrategyField(grid, scaled, box)
        if lipschitz_estimate(fld) <= lipschitz_cap * (1 + 1e-9):
            members.append(Deviation(f"scaled-x{factor}", fld))

    rng = np.random.default_rng(seed)
    width = grid.bounds.widths
    pert_index = 0
    while len(members) < count:
        freq = rng.integers(1, 4, size=grid.ndim)
        phase = rng.uniform(0.0, 2.0 * np.pi, size=box.dim)
        # amplitude chosen so the sine's slope fits under the remaining cap
        slope_scale = np.pi * float(np.sum(freq / width))
        headroom = max(lipschitz_cap - eq_lip, 0.0)
        amp = 0.5 * headroom / slope_scale if slope_scale > 0 else 0.0
        amp = min(amp, 0.1 * float(np.min(box.widths)))
        made = None
        for _ in range(8):
            xi = (grid.points - grid.bounds.lower) / width
            ridge = np.pi * (xi * freq).sum(axis=-1)
            bump = amp * np.sin(ridge[:, None] + phase[None, :])
            fld = StrategyField(grid, box.clamp(equilibrium.controls + bump),
                                box)
            if lipschitz_estimate(fld) <= lipschitz_cap * (1 + 1e-9):
                made = fld
                break
            amp *= 0.5
        if made is None:
            raise InvalidInputError(
                "could not generate a perturbation under the Lipschitz cap")
        members.append(Deviation(f"perturbed-{pert_index}", made))
        pert_index += 1

    return members[:count]


@dataclass
class EpsilonNashReport:
    epsilon: float
    per_player: list            # dicts: player, epsilon, witness
    rows: list                  # dicts: player, deviation, x0, delta, ...
    family_labels: dict
    lipschitz_cap: float

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "per_player": self.per_player,
            "rows": self.rows,
            "family_labels": self.family_labels,
            "lipschitz_cap": self.lipschitz_cap,
        }


def epsilon_nash_check(game: GameDefinition, sol: NashSolution, x0_samples,
                       family_cfg: DeviationFamilyConfig, tol: float,
                       dt: float = None, extra=None) -> EpsilonNashReport:
    """Largest continuous-payoff improvement over the deviation family.

    For each player, each deviation psi and each initial state, evaluates
    delta = W_i(psi, others) - W_i(profile) in the continuous game.
    Improvements below the two evaluations' combined budget count as zero.
    The observed epsilon per player is max(0, max delta); witnesses record
    where the maximum occurred. Refuses unconverged solutions.
    """
    if not sol.diagnostics.converged:
        raise InvalidInputError(
            "solution did not converge; refusing epsilon certification")
    residuals = sol.diagnostics.bellman_residuals
    if residuals and max(residuals) > family_cfg.residual_max:
        raise InvalidInputError(
            f"solution residual {max(residuals):.3e} exceeds "
            f"residual_max={family_cfg.residual_max:.3e}")
    dt = dt if dt is not None else sol.ts.h / 20.0
    x0_batch = np.atleast_2d(np.asarray(x0_samples, dtype=float))

    rows = []
    per_player = []
    labels = {}
    for i in range(game.n_players):
        family = deviation_family(
            game, i, sol.strategies[i], family_cfg.lipschitz_cap,
            family_cfg.count, family_cfg.seed + i,
            extra=(extra or {}).get(i, ()),
            constant_samples=family_cfg.constant_samples,
            scale_factors=family_cfg.scale_factors)
        labels[i] = [d.label for d in family]
        base_vals, base_tail, base_quad, _, _ = _continuous_payoff_batch(
            game, i, sol.strategies, x0_batch, tol, dt)
        base_budget = base_tail + base_quad

        best = 0.0
        witness = None
        for dev in family:
            profile = list(sol.strategies)
            profile[i] = dev.field
            dev_vals, dev_tail, dev_quad, _, _ = _continuous_payoff_batch(
                game, i, profile, x0_batch, tol, dt)
            dev_budget = dev_tail + dev_quad
            for k in range(x0_batch.shape[0]):
                delta = float(dev_vals[k] - base_vals[k])
                budget = float(base_budget[k] + dev_budget[k])
                effective = 0.0 if abs(delta) <= budget else delta
                rows.append({
                    "player": i, "deviation": dev.label,
                    "x0": list(map(float, x0_batch[k])),
                    "delta": delta, "budget": budget,
                    "delta_effective": effective,
                })
                if effective > best:
                    best = effective
                    witness = {"deviation": dev.label, "x0": rows[-1]["x0"]}
        per_player.append({"player": i, "epsilon": best, "witness": witness})

    return EpsilonNashReport(
        epsilon=max(p["epsilon"] for p in per_player),
        per_player=per_player, rows=rows, family_labels=labels,
        lipschitz_cap=family_cfg.lipschitz_cap)


def hjb_residual_lq(game: GameDefinition, sol: NashSolution, sample_points,
                    control_samples: int = 201) -> tuple:
    """Stationary HJB defect of the solved pair at sample states.

    rho*V_i(x) - max_u { f_i(x, u, opp(x)) + grad V_i(x) . g(x, u, opp(x)) }
    with the gradient taken by central differences on the grid. Only
    meaningful on 1-d or 2-d states; the defect scales like
    O(h + grid spacing) and serves as a cross-check, not a stopping rule.
    """
    if game.state_dim > 2:
        raise InvalidInputError("HJB residual check supports 1-d/2-d states")
    pts = np.atleast_2d(np.asarray(sample_points, dtype=float))
    rho = game.discount_rate
    grid = sol.grid

    grads = []
    for i in range(game.n_players):
        shaped = sol.values[i].shaped()
        comps = np.gradient(shaped, *grid.nodes, edge_order=2)
        comps = [comps] if game.state_dim == 1 else list(comps)
        grads.append([GridFunction(grid, c.ravel()) for c in comps])

    out = []
    for i in range(game.n_players):
        lattice = game.control_sets[i].lattice(control_samples)  # (C, m)
        opp = [interpolate(s, pts) for s in sol.strategies]
        controls = []
        for j in range(game.n_players):
            if j == i:
                controls.append(lattice[:, None, :])
            else:
                controls.append(opp[j][None, :, :])
        xb = pts[None, :, :]
        f = np.asarray(game.payoffs[i](xb, controls), dtype=float)
        g = np.asarray(game.dynamics(xb, controls), dtype=float)
        grad_at = np.stack(
            [interpolate(grads[i][d], pts) for d in range(game.state_dim)],
            axis=-1)                                   # (P, n)
        hamiltonian = (f + (g * grad_at[None, :, :]).sum(axis=-1)).max(axis=0)
        v_at = interpolate(sol.values[i], pts)
        out.append(float(np.max(np.abs(rho * v_at - hamiltonian))))
    return tuple(out)


@dataclass
class CertificationReport:
    """Aggregated certification artifacts: consistency gaps, the epsilon
    check, hypothesis margins and configured pass/fail verdicts. The rate
    section is filled by the rate pipeline when one is run."""

    game_name: str
    game_params: dict
    h: float
    gaps: list = field(default_factory=list)       # dicts per (player, x0)
    epsilon: Optional[EpsilonNashReport] = None
    margins: Optional[dict] = None
    hypothesis: Optional[dict] = None
    rate: Optional[RateStudy] = None
    verdicts: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v["passed"] for v in self.verdicts.values())

    def to_dict(self) -> dict:
        return {
            "game_name": self.game_name,
            "game_params": self.game_params,
            "h": self.h,
            "gaps": self.gaps,
            "epsilon": self.epsilon.to_dict() if self.epsilon else None,
            "margins": self.margins,
            "hypothesis": self.hypothesis,
            "rate": self.rate.to_dict() if self.rate else None,
            "verdicts": self.verdicts,
            "passed": self.passed,
        }
