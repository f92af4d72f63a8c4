"""Acceptance suite: one test per criterion, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines as the
criteria execute. Oracle values are closed-form Riccati roots re-derived
in util.py; empirical fixtures (the observed epsilon) were pinned at the
first oracle-verified run of this suite.
"""

import filecmp
import time

import numpy as np
import pytest

import diffgame as dg
from diffgame.cli import main
from util import linear_strategy, riccati_one_player, riccati_symmetric

X0_SAMPLES = [[-1.0], [-0.5], [0.5], [1.0]]
EPS_FIXTURE = 1e-4   # observed 1.93e-5 at h=0.01 on the first verified run


def _report(number, description, passed, detail=""):
    tag = "PASS" if passed else "FAIL"
    print(f"[criterion {number}] {tag} - {description}"
          + (f" ({detail})" if detail else ""))
    assert passed, f"criterion {number}: {description}: {detail}"


def _solve_symmetric(h, nodes):
    game = dg.lq_symmetric(2, rho=1.0, u_max=1.0)
    grid = dg.Grid.uniform(game.state_domain, nodes)
    cfg = dg.SolverConfig(control_samples=201, inner_tol=1e-6,
                          outer_tol=1e-4)
    sol = dg.solve_nash(game, grid, dg.make_timestep(1.0, h), cfg)
    return game, grid, sol


@pytest.fixture(scope="module")
def symmetric_solutions():
    # grids sized to keep the Euler displacement below one cell
    return {h: _solve_symmetric(h, nodes)
            for h, nodes in ((0.02, 101), (0.01, 201))}


def test_criterion_1_one_player_riccati_oracle():
    game = dg.lq_one_player(rho=1.0)
    grid = dg.Grid.uniform(game.state_domain, 401)
    cfg = dg.SolverConfig(control_samples=201, inner_tol=1e-6,
                          outer_tol=1e-4)
    start = time.perf_counter()
    sol = dg.solve_nash(game, grid, dg.make_timestep(1.0, 0.01), cfg)
    elapsed = time.perf_counter() - start

    p = riccati_one_player(rho=1.0)
    assert p == pytest.approx(0.61803, abs=5e-6)
    x = grid.points[:, 0]
    v_err = float(np.max(np.abs(sol.values[0].values + p * x ** 2)))
    s_err = float(np.max(np.abs(sol.strategies[0].controls[:, 0] + p * x)))
    _report(1, "one-player value/strategy match the Riccati oracle",
            v_err <= 0.02 and s_err <= 0.05 and elapsed <= 60.0,
            f"V err {v_err:.4f} <= 0.02, strategy err {s_err:.4f} <= 0.05, "
            f"{elapsed:.1f}s <= 60s")


def test_criterion_2_two_player_symmetric_riccati_oracle():
    p = riccati_symmetric(2, rho=1.0)
    # re-derived root of 3p^2 + rho*p - 1 = 0; see notes in util.py
    assert p == pytest.approx(0.4342585, abs=1e-6)
    game, grid, sol = _solve_symmetric(h=0.005, nodes=201)
    x = grid.points[:, 0]
    v_err = max(float(np.max(np.abs(sol.values[i].values + p * x ** 2)))
                for i in range(2))
    s_err = max(float(np.max(np.abs(sol.strategies[i].controls[:, 0] + p * x)))
                for i in range(2))
    _report(2, "two-player symmetric equilibrium matches the coupled "
               "Riccati oracle",
            sol.diagnostics.converged and v_err <= 0.02 and s_err <= 0.05,
            f"converged in {sol.diagnostics.outer_sweeps} sweeps, "
            f"V err {v_err:.4f} <= 0.02, strategy err {s_err:.4f} <= 0.05")


def test_criterion_3_exact_scheme_identities():
    game = dg.constant_payoff(c=2.0, rho=0.5)
    grid = dg.Grid.uniform(game.state_domain, 11)
    strat = dg.StrategyField.constant(grid, [0.0], game.control_sets[0])
    worst_const = 0.0
    for h in (0.1, 0.01):
        ts = dg.make_timestep(0.5, h)
        res = dg.consistency_gap(game, [strat], np.array([0.3]), ts,
                                 tol=1e-11, dt=2e-3)
        worst_const = max(worst_const, res[0].gap)

    from util import frozen_state_game
    frozen = frozen_state_game(rho=0.5)
    fgrid = dg.Grid.uniform(frozen.state_domain, 11)
    fstrat = dg.StrategyField.constant(fgrid, [0.2], frozen.control_sets[0])
    fres = dg.consistency_gap(frozen, [fstrat], np.array([0.7]),
                              dg.make_timestep(0.5, 0.05), tol=1e-10,
                              dt=2e-3)[0]
    _report(3, "constant-payoff and frozen-state games are exact",
            worst_const <= 1e-10 and fres.gap <= fres.budget,
            f"constant gap {worst_const:.2e} <= 1e-10, frozen gap "
            f"{fres.gap:.2e} <= budget {fres.budget:.2e}")


def test_criterion_4_consistency_rate_on_decay():
    game = dg.decay(a=0.5, rho=3.0)
    grid = dg.Grid.uniform(game.state_domain, 21)
    strat = linear_strategy(grid, 0.5, game.control_sets[0])
    margins = dg.rate_condition_margin(
        game.hypothesis.with_strategy_lip(dg.lipschitz_estimate(strat)),
        game.discount_rate)
    start = time.perf_counter()
    study = dg.rate_study(game, [strat], [[0.9], [0.6], [0.3]],
                          [0.1, 0.05, 0.025, 0.0125], tol=1e-9)
    elapsed = time.perf_counter() - start
    min_ratio = min(r["gap"] / r["budget"] for r in study.rows)
    _report(4, "consistency gap decays at first order in h",
            margins.margin_growth > 0 and not study.excluded
            and 0.8 <= study.slope <= 1.2 and min_ratio >= 10.0
            and elapsed <= 300.0,
            f"slope {study.slope:.3f} in [0.8, 1.2], min gap/budget "
            f"{min_ratio:.0f} >= 10, margin {margins.margin_growth:.2f} > 0, "
            f"{elapsed:.1f}s <= 300s")


def test_criterion_5_epsilon_nash_certification(symmetric_solutions):
    p = riccati_symmetric(2, rho=1.0)
    eps = {}
    for h, (game, grid, sol) in symmetric_solutions.items():
        oracle = linear_strategy(grid, p, game.control_sets[0])
        fam = dg.DeviationFamilyConfig(count=12, seed=7, lipschitz_cap=2.0,
                                       residual_max=1e-3)
        rep = dg.epsilon_nash_check(game, sol, X0_SAMPLES, fam, tol=1e-5,
                                    dt=h, extra={0: [oracle], 1: [oracle]})
        eps[h] = rep.epsilon
    _report(5, "observed epsilon is small and non-increasing as h halves",
            0.0 <= eps[0.01] <= EPS_FIXTURE and eps[0.01] <= eps[0.02],
            f"eps(0.02)={eps[0.02]:.2e}, eps(0.01)={eps[0.01]:.2e} "
            f"<= fixture {EPS_FIXTURE:.0e}")


def test_criterion_6_contraction_property_suite():
    rng = np.random.default_rng(2024)
    checked = 0
    ok = True
    while checked < 100:
        game = (dg.lq_symmetric(2, rho=1.0, x_max=1.0, u_max=1.0)
                if rng.uniform() < 0.5 else dg.decay(a=0.5, rho=3.0))
        grid = dg.Grid.uniform(game.state_domain, int(rng.integers(5, 30)))
        ts = dg.make_timestep(game.discount_rate,
                              float(rng.uniform(0.02, 0.9 / game.discount_rate)))
        cfg = dg.SolverConfig(control_samples=int(rng.integers(3, 12)))
        strategies = [
            dg.StrategyField(
                grid, box.lower + rng.uniform(size=(grid.num_nodes, box.dim))
                * box.widths, box)
            for box in game.control_sets]

        def apply(vals):
            out, _ = dg.bellman_operator(
                game, 0, dg.GridFunction(grid, vals), strategies, ts, cfg)
            return out.values

        for _ in range(5):
            va = rng.normal(size=grid.num_nodes)
            vb = rng.normal(size=grid.num_nodes)
            ta, tb = apply(va), apply(vb)
            c = float(rng.normal())
            ok &= bool(np.max(np.abs(ta - tb))
                       <= ts.beta * np.max(np.abs(va - vb)) + 1e-12)
            ok &= bool(np.all(apply(np.maximum(va, vb)) >= ta))
            ok &= bool(np.max(np.abs(apply(va + c) - (ta + ts.beta * c)))
                       <= 1e-10 * (1 + abs(c)))
            checked += 1
    _report(6, "Bellman operator is a beta contraction, monotone, and "
               "shifts constants by beta",
            ok, f"{checked} random value pairs")


def test_criterion_7_gronwall_gap_bounds():
    p1 = riccati_one_player(rho=1.0)
    p2 = riccati_symmetric(2, rho=1.0)
    cases = []
    game = dg.lq_one_player(rho=1.0)
    grid = dg.Grid.uniform(game.state_domain, 81)
    cases.append(("lq_one_player", game,
                  [linear_strategy(grid, p1, game.control_sets[0])],
                  np.array([1.5])))
    game = dg.lq_symmetric(2, rho=1.0, u_max=1.0)
    grid = dg.Grid.uniform(game.state_domain, 81)
    shared = linear_strategy(grid, p2, game.control_sets[0])
    cases.append(("lq_symmetric", game, [shared, shared], np.array([1.5])))
    game = dg.decay(a=0.5, rho=3.0)
    grid = dg.Grid.uniform(game.state_domain, 41)
    cases.append(("decay", game,
                  [linear_strategy(grid, 0.5, game.control_sets[0])],
                  np.array([0.9])))
    game = dg.constant_payoff(c=2.0, rho=0.5)
    grid = dg.Grid.uniform(game.state_domain, 11)
    cases.append(("constant", game,
                  [dg.StrategyField.constant(grid, [0.0],
                                             game.control_sets[0])],
                  np.array([0.4])))

    all_hold = True
    ratios = {}
    for name, game, strats, x0 in cases:
        constants = game.hypothesis.with_strategy_lip(
            max(dg.lipschitz_estimate(s) for s in strats))
        sups = []
        for h in (0.1, 0.05):
            ts = dg.make_timestep(game.discount_rate, h)
            rep = dg.gronwall_gap_check(game, strats, x0, ts, T=2.0,
                                        constants=constants)
            all_hold &= rep.satisfied
            sups.append(rep.sup_gap)
        if sups[1] > 0:
            ratios[name] = sups[0] / sups[1]
            all_hold &= 1.7 <= ratios[name] <= 2.3
        else:
            all_hold &= sups[0] == 0.0  # frozen dynamics: exact match
    _report(7, "trajectory gap sits under the Gronwall envelope and "
               "scales linearly in h",
            all_hold,
            "halving ratios " + ", ".join(
                f"{k}={v:.2f}" for k, v in ratios.items()))


def test_criterion_8_byte_identical_rate_tables(tmp_path):
    config = tmp_path / "decay.toml"
    config.write_text(f"""
[game]
name = "decay"
[game.params]
a = 0.5
rho = 3.0
[grid]
min = [-1.0]
max = [1.0]
nodes = [41]
[time]
h = 0.025
h_list = [0.1, 0.05, 0.025]
[solver]
control_samples = 81
inner_tol = 1e-7
[certify]
x0 = [[0.9], [0.5]]
payoff_tol = 1e-9
seed = 11
[output]
dir = "{tmp_path / 'run1'}"
""", encoding="utf-8")
    assert main(["rates", str(config)]) == 0
    assert main(["rates", str(config), "--output-dir",
                 str(tmp_path / "run2")]) == 0
    same = all(
        filecmp.cmp(tmp_path / "run1" / name, tmp_path / "run2" / name,
                    shallow=False)
        for name in ("rate_table.csv", "rate_loglog.csv"))
    same &= all(
        filecmp.cmp(tmp_path / "run1" / "solution" / name,
                    tmp_path / "run2" / "solution" / name, shallow=False)
        for name in ("value_player1.csv", "strategy_player1.csv"))
    _report(8, "identical config and seed give byte-identical CSV tables",
            same, "rate_table.csv, rate_loglog.csv, solution CSVs")
