"""Batch front-end.

Subcommands: ``solve``, ``certify``, ``rates``, ``simulate``,
``check-hypotheses``. One TOML config drives everything; flags only select
the command, the config path, an output-dir override and the worker cap.

Exit codes: 0 success, 1 input/config error, 2 runtime non-convergence or
divergence (artifacts still written when a partial iterate exists), 3
certification verdict failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import kernels
from .certify import (CertificationReport, consistency_gap,
                      epsilon_nash_check, rate_study)
from .continuous import gronwall_gap_check, integrate_closed_loop
from .discretize import rollout_discrete
from .errors import (ConvergenceError, DiffGameError, DivergenceError,
                     InvalidInputError, OuterConvergenceError)
from .games import estimate_constants, rate_condition_margin
from .grids import lipschitz_estimate
from .runio import (load_config, load_solution, save_solution,
                    write_certification_outputs,
                    write_continuous_trajectory_csv,
                    write_discrete_trajectory_csv, write_gap_curves_csv,
                    write_manifest, write_rate_outputs)
from .solver import solve_nash

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_RUNTIME = 2
EXIT_CERTIFY = 3


def _prepare(args):
    cfg = load_config(args.config)
    if args.output_dir:
        cfg.output_dir = args.output_dir
    kernels.set_threads(args.threads)
    game = cfg.build_game()
    grid = cfg.build_grid(game)
    return cfg, game, grid


def cmd_solve(args) -> int:
    cfg, game, grid = _prepare(args)
    ts = cfg.timestep(game)
    try:
        sol = solve_nash(game, grid, ts, cfg.solver)
    except OuterConvergenceError as err:
        print(f"solve: {err}", file=sys.stderr)
        if err.partial is not None:
            save_solution(cfg.output_dir, game, err.partial, cfg)
            print(f"solve: partial iterate written to {cfg.output_dir}",
                  file=sys.stderr)
        return EXIT_RUNTIME
    save_solution(cfg.output_dir, game, sol, cfg)
    print(f"solve: converged in {sol.diagnostics.outer_sweeps} sweeps, "
          f"residuals {[f'{r:.2e}' for r in sol.diagnostics.bellman_residuals]}, "
          f"artifacts in {cfg.output_dir}")
    return EXIT_OK


def _check_solution_matches(cfg, game, grid, manifest):
    stored = manifest["game"]
    if stored["name"] != game.name or stored["params"] != game.params:
        raise InvalidInputError(
            "solution was produced for a different game than the config")
    stored_nodes = [np.asarray(n, dtype=float)
                    for n in manifest["grid"]["nodes"]]
    if len(stored_nodes) != grid.ndim or not all(
            np.array_equal(a, b) for a, b in zip(stored_nodes, grid.nodes)):
        raise InvalidInputError(
            "solution was produced on a different grid than the config")


def cmd_certify(args) -> int:
    cfg, game, grid = _prepare(args)
    _, sol, manifest = load_solution(args.solution)
    _check_solution_matches(cfg, game, grid, manifest)
    if not cfg.x0_samples:
        raise InvalidInputError("config certify.x0 must list initial states")

    dt = cfg.dt if cfg.dt is not None else sol.ts.h / 20.0
    gaps = []
    for x0 in cfg.x0_samples:
        for res in consistency_gap(game, sol.strategies, np.asarray(x0),
                                   sol.ts, cfg.payoff_tol, dt):
            gaps.append({"h": sol.ts.h, "player": res.player, "x0": x0,
                         "gap": res.gap, "budget": res.budget})

    eps = epsilon_nash_check(game, sol, cfg.x0_samples, cfg.family,
                             cfg.payoff_tol, dt)

    hyp = game.hypothesis or estimate_constants(
        game, cfg.estimate_samples, cfg.seed)
    ls = max(lipschitz_estimate(s) for s in sol.strategies)
    margins = rate_condition_margin(hyp.with_strategy_lip(ls),
                                    game.discount_rate)

    verdicts = {
        "consistency_gap": {
            "passed": max(g["gap"] for g in gaps) <= cfg.gap_max,
            "threshold": cfg.gap_max,
            "observed": max(g["gap"] for g in gaps),
        },
        "epsilon_nash": {
            "passed": eps.epsilon <= cfg.epsilon_max,
            "threshold": cfg.epsilon_max,
            "observed": eps.epsilon,
        },
        "rate_regime": {
            "passed": margins.rate_guaranteed or not cfg.require_rate_regime,
            "threshold": "margins > 0" if cfg.require_rate_regime
            else "informational",
            "observed": margins.to_dict(),
        },
    }
    report = CertificationReport(
        game_name=game.name, game_params=game.params, h=sol.ts.h,
        gaps=gaps, epsilon=eps, margins=margins.to_dict(),
        hypothesis=hyp.with_strategy_lip(ls).to_dict(), verdicts=verdicts)
    write_certification_outputs(cfg.output_dir, report)
    for name, v in verdicts.items():
        print(f"certify: {name}: {'pass' if v['passed'] else 'FAIL'} "
              f"(observed {v['observed']}, threshold {v['threshold']})")
    return EXIT_OK if report.passed else EXIT_CERTIFY


def cmd_rates(args) -> int:
    cfg, game, grid = _prepare(args)
    if not cfg.h_list:
        raise InvalidInputError("config time.h_list is required for rates")
    if not cfg.x0_samples:
        raise InvalidInputError("config certify.x0 must list initial states")

    # solve per h from coarse to fine, warm-starting each solve with the
    # previous one; the finest equilibrium is the fixed profile under study
    sol = None
    for h in sorted(cfg.h_list, reverse=True):
        ts = cfg.timestep(game, h)
        try:
            sol = solve_nash(game, grid, ts, cfg.solver, init=sol)
        except OuterConvergenceError as err:
            print(f"rates: solve at h={h} failed: {err}", file=sys.stderr)
            return EXIT_RUNTIME

    study = rate_study(game, sol.strategies, cfg.x0_samples, cfg.h_list,
                       tol=cfg.payoff_tol, dt=cfg.dt)
    write_rate_outputs(cfg.output_dir, study)
    save_solution(os.path.join(cfg.output_dir, "solution"), game, sol, cfg)
    for w in study.warnings:
        print(f"rates: warning: {w}", file=sys.stderr)
    print(f"rates: regime: {study.regime}")
    if study.degenerate:
        print("rates: degenerate: exact scheme (all gaps at noise floor)")
    else:
        print(f"rates: fitted slope {study.slope:.4f}, "
              f"constant {study.constant:.4e}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg, game, grid = _prepare(args)
    _, sol, manifest = load_solution(args.solution)
    _check_solution_matches(cfg, game, grid, manifest)
    x0 = np.asarray([float(v) for v in args.x0.split(",")])
    if x0.shape != (game.state_dim,):
        raise InvalidInputError(
            f"--x0 must have {game.state_dim} component(s)")
    if not game.state_domain.contains(x0):
        raise InvalidInputError("--x0 lies outside the state box")

    horizon = args.horizon
    dt = cfg.dt if cfg.dt is not None else sol.ts.h / 20.0
    os.makedirs(cfg.output_dir, exist_ok=True)
    n_steps = max(1, int(round(horizon / sol.ts.h)))
    disc = rollout_discrete(game, sol.strategies, x0, sol.ts, n_steps)
    cont = integrate_closed_loop(game, sol.strategies, x0, horizon, dt)

    hyp = game.hypothesis or estimate_constants(
        game, cfg.estimate_samples, cfg.seed)
    ls = max(lipschitz_estimate(s) for s in sol.strategies)
    gap = gronwall_gap_check(game, sol.strategies, x0, sol.ts, horizon,
                             hyp.with_strategy_lip(ls), dt)

    write_discrete_trajectory_csv(
        os.path.join(cfg.output_dir, "trajectory_discrete.csv"), disc)
    write_continuous_trajectory_csv(
        os.path.join(cfg.output_dir, "trajectory_continuous.csv"), cont)
    write_gap_curves_csv(
        os.path.join(cfg.output_dir, "gap_curves.csv"), gap)
    print(f"simulate: sup|y - ytilde| = {gap.sup_gap:.6e}, bound "
          f"{'holds' if gap.satisfied else 'VIOLATED'} "
          f"(worst margin {gap.worst_margin:.3e})")
    return EXIT_OK


def cmd_check_hypotheses(args) -> int:
    cfg, game, grid = _prepare(args)
    est = estimate_constants(game, cfg.estimate_samples, cfg.seed)
    hyp = game.hypothesis or est
    margins = rate_condition_margin(hyp, game.discount_rate)
    payload = {
        "analytic": game.hypothesis.to_dict() if game.hypothesis else None,
        "estimated": est.to_dict(),
        "margins": margins.to_dict(),
    }
    os.makedirs(cfg.output_dir, exist_ok=True)
    write_manifest(os.path.join(cfg.output_dir, "hypotheses.json"), payload)
    print(f"check-hypotheses: L_g={hyp.lip_dynamics:.6g} "
          f"M={hyp.payoff_bound:.6g} K={hyp.growth_const:.6g} "
          f"L={hyp.combined_lip:.6g} (L_s={hyp.strategy_lip:.6g})")
    print(f"check-hypotheses: rho - L = {margins.margin_bounded}, "
          f"rho - (L+K) = {margins.margin_growth:.6g}, "
          f"rate {'guaranteed' if margins.rate_guaranteed else 'NOT guaranteed'}")
    return EXIT_OK if margins.rate_guaranteed else EXIT_CERTIFY


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diffgame",
        description="semi-Lagrangian differential-game solver and certifier")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="TOML run configuration")
        p.add_argument("--output-dir", help="override [output].dir")
        p.add_argument("--threads", type=int, default=1,
                       help="worker cap for the compiled kernels (default 1)")

    p = sub.add_parser("solve", help="solve the discrete game")
    common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("certify", help="certify a stored solution")
    common(p)
    p.add_argument("solution", help="solution directory from solve")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("rates", help="consistency-rate study over h_list")
    common(p)
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("simulate", help="paired discrete/continuous rollout")
    common(p)
    p.add_argument("solution", help="solution directory from solve")
    p.add_argument("--x0", required=True,
                   help="initial state, comma separated")
    p.add_argument("--horizon", type=float, default=5.0,
                   help="simulation horizon in time units (default 5)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("check-hypotheses",
                       help="estimate regularity constants and rate margins")
    common(p)
    p.set_defaults(func=cmd_check_hypotheses)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InvalidInputError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except DivergenceError as err:
        print(f"error: divergence at step {err.step}: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    except ConvergenceError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    except DiffGameError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
