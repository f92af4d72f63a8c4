"""Shared helpers for the test suite: closed-form oracles and tiny games."""

import math

import numpy as np

import diffgame as dg


def riccati_one_player(a=0.0, b=1.0, q=1.0, r=1.0, rho=1.0):
    """Positive root p of (b^2/r) p^2 + (rho - 2a) p - q = 0.

    The value function of the scalar LQ problem xdot = a*x + b*u with
    running payoff -(q*x^2 + r*u^2) is V(x) = -p*x^2, and the optimal
    feedback is u = -(p*b/r)*x.
    """
    c2 = b * b / r
    c1 = rho - 2.0 * a
    return (-c1 + math.sqrt(c1 * c1 + 4.0 * c2 * q)) / (2.0 * c2)


def riccati_symmetric(n_players=2, rho=1.0):
    """Positive root of (2N-1) p^2 + rho p - 1 = 0.

    Symmetric feedback equilibrium of xdot = sum u_j, f_i = -(x^2 + u_i^2):
    V_i = -p x^2, u_i = -p x. Derivation: with opponents at -p*x the HJB
    reads rho V = max_u {-x^2 - u^2 + V'(x) (u - (N-1) p x)}; the ansatz
    V = -p x^2 gives the maximizer u = -p x and, after substitution,
    -rho p = -1 + (2N-1) p^2.
    """
    k = 2 * n_players - 1
    return (-rho + math.sqrt(rho * rho + 4.0 * k)) / (2.0 * k)


def linear_strategy(grid, slope, box):
    """Feedback u(x) = -slope * x1, clamped into the control box."""
    return dg.StrategyField.from_callable(
        grid, lambda pts: -slope * pts[:, :1], box)


def zero_game(x_max=1.0, u_max=1.0, rho=1.0, n_players=1):
    """All-zero dynamics and payoffs; the simplest valid game."""
    def dynamics(x, us):
        return 0.0 * x + 0.0 * us[0]

    def payoff(x, us):
        return 0.0 * x[..., 0] + 0.0 * us[0][..., 0]

    box = dg.Box(np.array([-x_max]), np.array([x_max]))
    ubox = dg.Box(np.array([-u_max]), np.array([u_max]))
    hyp = dg.HypothesisData(
        n_players=n_players, lip_dynamics=0.0,
        lip_payoffs=(0.0,) * n_players, payoff_bound=0.0, growth_const=0.0,
        dynamics_sup=0.0)
    return dg.GameDefinition(
        name="zero", n_players=n_players, state_dim=1,
        control_dims=(1,) * n_players, state_domain=box,
        control_sets=(ubox,) * n_players, dynamics=dynamics,
        payoffs=(payoff,) * n_players, discount_rate=rho, hypothesis=hyp)


def frozen_state_game(rho=0.5, x_max=1.0, u_max=1.0):
    """g = 0 with a state-only payoff f(x) = -x^2."""
    def dynamics(x, us):
        return 0.0 * x + 0.0 * us[0]

    def payoff(x, us):
        return -(x[..., 0] ** 2) + 0.0 * us[0][..., 0]

    box = dg.Box(np.array([-x_max]), np.array([x_max]))
    ubox = dg.Box(np.array([-u_max]), np.array([u_max]))
    hyp = dg.HypothesisData(
        n_players=1, lip_dynamics=0.0, lip_payoffs=(2.0 * x_max,),
        payoff_bound=x_max ** 2, growth_const=0.0, dynamics_sup=0.0)
    return dg.GameDefinition(
        name="frozen", n_players=1, state_dim=1, control_dims=(1,),
        state_domain=box, control_sets=(ubox,), dynamics=dynamics,
        payoffs=(payoff,), discount_rate=rho, hypothesis=hyp)
