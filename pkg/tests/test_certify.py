import numpy as np
import pytest

import diffgame as dg
from util import (frozen_state_game, linear_strategy, riccati_one_player,
                  riccati_symmetric, zero_game)


def _const_setup():
    game = dg.constant_payoff(c=2.0, rho=0.5)
    grid = dg.Grid.uniform(game.state_domain, 9)
    strat = dg.StrategyField.constant(grid, [0.0], game.control_sets[0])
    return game, grid, strat


def test_consistency_gap_constant_game_exact():
    game, _, strat = _const_setup()
    for h in (0.1, 0.5):
        ts = dg.make_timestep(0.5, h)
        gaps = dg.consistency_gap(game, [strat], np.array([0.3]), ts,
                                  tol=1e-11, dt=2e-3)
        assert gaps[0].gap <= 1e-10
        assert gaps[0].discrete_value == pytest.approx(4.0, abs=1e-10)
        assert gaps[0].continuous_value == pytest.approx(4.0, abs=1e-10)


def test_consistency_gap_frozen_state_within_budget():
    game = frozen_state_game(rho=0.5)
    grid = dg.Grid.uniform(game.state_domain, 9)
    strat = dg.StrategyField.constant(grid, [0.2], game.control_sets[0])
    ts = dg.make_timestep(0.5, 0.05)
    gaps = dg.consistency_gap(game, [strat], np.array([0.7]), ts,
                              tol=1e-10, dt=2e-3)
    assert gaps[0].gap <= gaps[0].budget + 1e-12


def test_consistency_gap_lq_decreases_with_h():
    game = dg.lq_one_player(rho=1.0)
    p = riccati_one_player(rho=1.0)
    grid = dg.Grid.uniform(game.state_domain, 81)
    strat = linear_strategy(grid, p, game.control_sets[0])
    # regression fixtures from the first verified run of this setup
    expected = {0.1: 0.067659, 0.05: 0.032999, 0.025: 0.016298}
    gaps = []
    for h, fixture in expected.items():
        ts = dg.make_timestep(1.0, h)
        res = dg.consistency_gap(game, [strat], np.array([1.2]), ts,
                                 tol=1e-9, dt=1e-3)
        gaps.append(res[0].gap)
        assert res[0].gap > res[0].budget  # resolvable above noise floor
        assert res[0].gap == pytest.approx(fixture, rel=1e-3)
    assert gaps[0] > gaps[1] > gaps[2]


def _decay_rate_setup():
    game = dg.decay(a=0.5, rho=3.0)
    grid = dg.Grid.uniform(game.state_domain, 21)
    strat = linear_strategy(grid, 0.5, game.control_sets[0])
    return game, strat


def test_rate_study_decay_first_order():
    game, strat = _decay_rate_setup()
    study = dg.rate_study(game, [strat], [[0.9]], [0.1, 0.05, 0.025],
                          tol=1e-9)
    assert not study.degenerate
    assert study.regime == "O(h) rate guaranteed"
    assert 0.8 <= study.slope <= 1.2
    assert study.constant > 0
    assert not study.excluded


def test_rate_study_matches_geometric_oracle():
    # closed loop x_{n+1} = (1-h) x_n with payoff -(1.25 x^2): the discrete
    # value has the closed form below, and the continuous limit is
    # -1.25 x0^2 / 5; the study's gaps must match the difference
    game, strat = _decay_rate_setup()
    x0 = 0.9
    study = dg.rate_study(game, [strat], [[x0]], [0.1, 0.05, 0.025],
                          tol=1e-10)
    for row in study.rows:
        h = row["h"]
        beta = 1.0 - 3.0 * h
        w_disc = -1.25 * h * x0 * x0 / (1.0 - beta * (1.0 - h) ** 2)
        w_cont = -1.25 * x0 * x0 / 5.0
        assert row["gap"] == pytest.approx(abs(w_disc - w_cont), rel=1e-4)


def test_rate_study_constant_game_degenerate():
    game, _, strat = _const_setup()
    study = dg.rate_study(game, [strat], [[0.3]], [0.5, 0.25, 0.125],
                          tol=1e-9)
    assert study.degenerate
    assert np.isnan(study.slope)
    assert any("degenerate" in w for w in study.warnings)


def test_rate_study_noise_floor_exclusion():
    game, strat = _decay_rate_setup()
    # with a coarse evaluator tolerance the finest gaps drown in the budget
    study = dg.rate_study(game, [strat], [[0.2]], [0.1, 0.05, 0.025],
                          tol=5e-3)
    assert study.excluded
    assert any("below the evaluator budget" in w for w in study.warnings)


def test_rate_study_validates_h_list():
    game, strat = _decay_rate_setup()
    with pytest.raises(dg.InvalidInputError):
        dg.rate_study(game, [strat], [[0.5]], [0.1, 0.05])
    with pytest.raises(dg.InvalidInputError):
        dg.rate_study(game, [strat], [[0.5]], [0.05, 0.1, 0.2])
    with pytest.raises(dg.InvalidInputError):
        dg.rate_study(game, [strat], [[0.5]], [0.5, 0.25, 0.125])


def _equilibrium_field(game, nodes=41):
    p = riccati_symmetric(game.n_players, game.discount_rate)
    grid = dg.Grid.uniform(game.state_domain, nodes)
    return linear_strategy(grid, p, game.control_sets[0]), p


def test_deviation_family_count_one_is_equilibrium():
    game = dg.lq_symmetric(2, rho=1.0, u_max=1.0)
    eq, _ = _equilibrium_field(game)
    family = dg.deviation_family(game, 0, eq, lipschitz_cap=2.0, count=1,
                                 seed=0)
    assert len(family) == 1
    assert family[0].label == "equilibrium"
    assert family[0].field is eq


def test_deviation_family_members_respect_cap():
    game = dg.lq_symmetric(2, rho=1.0, u_max=1.0)
    eq, _ = _equilibrium_field(game)
    cap = 1.5
    family = dg.deviation_family(game, 0, eq, lipschitz_cap=cap, count=14,
                                 seed=3)
    assert len(family) == 14
    for member in family:
        assert dg.lipschitz_estimate(member.field) <= cap * (1 + 1e-9)
    labels = [m.label for m in family]
    assert labels[0] == "equilibrium"
    assert any(l.startswith("constant@") for l in labels)
    assert any(l.startswith("scaled-") for l in labels)
    assert any(l.startswith("perturbed-") for l in labels)


def test_deviation_family_deterministic():
    game = dg.lq_symmetric(2, rho=1.0, u_max=1.0)
    eq, _ = _equilibrium_field(game)
    fam1 = dg.deviation_family(game, 0, eq, 2.0, 12, seed=9)
    fam2 = dg.deviation_family(game, 0, eq, 2.0, 12, seed=9)
    for a, b in zip(fam1, fam2):
        assert a.label == b.label
        np.testing.assert_array_equal(a.field.controls, b.field.controls)


def test_deviation_family_includes_injected_oracle():
    game = dg.lq_symmetric(2, rho=1.0, u_max=1.0)
    eq, p = _equilibrium_field(game)
    oracle = linear_strategy(eq.grid, p, game.control_sets[0])
    family = dg.deviation_family(game, 0, eq, 2.0, 6, seed=1,
                                 extra=[oracle])
    assert family[1].label == "injected-0"
    assert family[1].field is oracle


def test_deviation_family_rejects_cap_below_equilibrium():
    game = dg.lq_symmetric(2, rho=1.0, u_max=1.0)
    eq, p = _equilibrium_field(game)
    with pytest.raises(dg.InvalidInputError):
        dg.deviation_family(game, 0, eq, lipschitz_cap=p / 2, count=3, seed=0)


def _analytic_solution(game, nodes=41, h=0.02):
    p = riccati_symmetric(game.n_players, game.discount_rate)
    grid = dg.Grid.uniform(game.state_domain, nodes)
    ts = dg.make_timestep(game.discount_rate, h)
    values = tuple(
        dg.GridFunction.from_callable(grid, lambda pts: -p * pts[:, 0] ** 2)
        for _ in range(game.n_players))
    strategies = tuple(
        linear_strategy(grid, p, game.control_sets[i])
        for i in range(game.n_players))
    diag = dg.SolveDiagnostics(converged=True, stop_reason="injected oracle")
    sol = dg.NashSolution(values, strategies, ts, diag)
    cfg = dg.SolverConfig(control_samples=101)
    diag.bellman_residuals = dg.bellman_residual(game, sol, cfg)
    return sol, p


def test_epsilon_equilibrium_member_has_zero_delta():
    game = dg.lq_symmetric(2, rho=1.0, u_max=1.0)
    sol, _ = _analytic_solution(game)
    cfg = dg.DeviationFamilyConfig(count=4, seed=2, lipschitz_cap=2.0,
                                   residual_max=1.0)
    report = dg.epsilon_nash_check(game, sol, [[0.5], [-1.0]], cfg,
                                   tol=1e-5, dt=0.01)
    eq_rows = [r for r in report.rows if r["deviation"] == "equilibrium"]
    assert eq_rows
    for row in eq_rows:
        assert row["delta"] == 0.0


def test_epsilon_immune_to_x0_order():
    game = dg.lq_symmetric(2, rho=1.0, u_max=1.0)
    sol, _ = _analytic_solution(game)
    cfg = dg.DeviationFamilyConfig(count=6, seed=2, lipschitz_cap=2.0,
                                   residual_max=1.0)
    a = dg.epsilon_nash_check(game, sol, [[0.5], [-1.0], [1.2]], cfg,
                              tol=1e-5, dt=0.01)
    b = dg.epsilon_nash_check(game, sol, [[1.2], [0.5], [-1.0]], cfg,
                              tol=1e-5, dt=0.01)
    assert a.epsilon == b.epsilon


def test_epsilon_of_exact_continuous_equilibrium_is_noise():
    # the injected Riccati pair is the exact continuous equilibrium, so no
    # deviation can improve more than the evaluator budget; the noise-floor
    # rule then reports exactly zero
    game = dg.lq_symmetric(2, rho=1.0, u_max=1.0)
    sol, _ = _analytic_solution(game)
    cfg = dg.DeviationFamilyConfig(count=10, seed=5, lipschitz_cap=2.0,
                                   residual_max=1.0)
    report = dg.epsilon_nash_check(game, sol, [[0.5], [-1.0], [1.5]], cfg,
                                   tol=1e-5, dt=0.01)
    assert report.epsilon == 0.0


def test_epsilon_refuses_unconverged_solutions():
    game = dg.lq_symmetric(2, rho=1.0, u_max=1.0)
    sol, _ = _analytic_solution(game)
    bad_diag = dg.SolveDiagnostics(converged=False, stop_reason="test")
    bad = dg.NashSolution(sol.values, sol.strategies, sol.ts, bad_diag)
    cfg = dg.DeviationFamilyConfig(count=2, seed=0, lipschitz_cap=2.0)
    with pytest.raises(dg.InvalidInputError):
        dg.epsilon_nash_check(game, bad, [[0.5]], cfg, tol=1e-5, dt=0.01)
    tight = dg.DeviationFamilyConfig(count=2, seed=0, lipschitz_cap=2.0,
                                     residual_max=1e-12)
    with pytest.raises(dg.InvalidInputError):
        dg.epsilon_nash_check(game, sol, [[0.5]], tight, tol=1e-5, dt=0.01)


def test_hjb_residual_constant_game():
    game, grid, strat = _const_setup()
    ts = dg.make_timestep(0.5, 0.1)
    values = (dg.GridFunction(grid, np.full(grid.num_nodes, 4.0)),)
    diag = dg.SolveDiagnostics(converged=True)
    sol = dg.NashSolution(values, (strat,), ts, diag)
    res = dg.hjb_residual_lq(game, sol, [[0.0], [0.4], [-0.8]])
    assert res[0] <= 1e-8


def test_hjb_residual_analytic_lq_small():
    game = dg.lq_one_player(rho=1.0)
    p = riccati_one_player(rho=1.0)
    grid = dg.Grid.uniform(game.state_domain, 101)
    values = (dg.GridFunction.from_callable(
        grid, lambda pts: -p * pts[:, 0] ** 2),)
    strat = (linear_strategy(grid, p, game.control_sets[0]),)
    sol = dg.NashSolution(values, strat, dg.make_timestep(1.0, 0.05),
                          dg.SolveDiagnostics(converged=True))
    res = dg.hjb_residual_lq(game, sol, [[0.0], [0.5], [-1.0], [1.5]],
                             control_samples=201)
    # defect bounded by control-lattice quantization (du/2)^2 plus the
    # piecewise-linear interpolation error of the quadratic value, p*dx^2/4
    du, dx, p_coef = 4.0 / 200, 4.0 / 100, p
    assert res[0] <= (du / 2) ** 2 + p_coef * dx * dx / 4


def test_hjb_residual_decreases_with_h():
    game = dg.lq_one_player(rho=1.0)
    pts = [[0.0], [0.5], [-1.0]]
    defects = []
    for h, nodes in ((0.1, 21), (0.025, 81)):
        grid = dg.Grid.uniform(game.state_domain, nodes)
        cfg = dg.SolverConfig(control_samples=101, inner_tol=1e-7)
        sol = dg.solve_nash(game, grid, dg.make_timestep(1.0, h), cfg)
        defects.append(dg.hjb_residual_lq(game, sol, pts,
                                          control_samples=201)[0])
    assert defects[1] < defects[0]


def test_hjb_residual_rejects_high_dimensional_states():
    game = zero_game()
    grid = dg.Grid.uniform(game.state_domain, 5)
    sol = dg.NashSolution(
        (dg.GridFunction(grid, np.zeros(5)),),
        (dg.StrategyField.constant(grid, [0.0], game.control_sets[0]),),
        dg.make_timestep(1.0, 0.1), dg.SolveDiagnostics(converged=True))
    three_dim = dg.GameDefinition(
        name="wide", n_players=1, state_dim=3, control_dims=(1,),
        state_domain=dg.Box(-np.ones(3), np.ones(3)),
        control_sets=game.control_sets, dynamics=game.dynamics,
        payoffs=game.payoffs, discount_rate=1.0)
    with pytest.raises(dg.InvalidInputError):
        dg.hjb_residual_lq(three_dim, sol, [[0.0, 0.0, 0.0]])
