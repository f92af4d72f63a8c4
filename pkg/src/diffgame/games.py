"""Continuous game definitions: dynamics, payoffs, domains and the
regularity constants the convergence theory consumes.

A game couples N players through shared dynamics ``xdot = g(x, u_1..u_N)``
and per-player running payoffs ``f_i(x, u_1..u_N)`` discounted at rate
``rho``. State and controls live in bounded boxes. All callables must be
numpy-vectorized: state arrays carry a trailing axis of length
``state_dim``, player-i control arrays a trailing axis of length
``control_dims[i]``, and leading axes broadcast.
"""

from __future__ import annotations

import inspect
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import InvalidInputError, UnsupportedDomainError


@dataclass(frozen=True)
class Box:
    """Axis-aligned box, the only domain shape supported."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.ndim != 1 or lo.shape != hi.shape:
            raise InvalidInputError("box bounds must be 1-d and equal length")
        if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
            raise UnsupportedDomainError("box bounds must be finite")
        if np.any(lo > hi):
            raise InvalidInputError("box lower bound exceeds upper bound")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def contains(self, x, tol=1e-9) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(
            np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol)
        )

    def clamp(self, x) -> np.ndarray:
        """Componentwise projection onto the box (acts on the last axis)."""
        return np.clip(np.asarray(x, dtype=float), self.lower, self.upper)

    def sample(self, rng, count) -> np.ndarray:
        return self.lower + rng.uniform(size=(count, self.dim)) * self.widths

    def lattice(self, samples_per_dim: int) -> np.ndarray:
        """Uniform lattice, rows in ascending lexicographic order."""
        if samples_per_dim < 2:
            raise InvalidInputError("lattice needs at least 2 samples per dim")
        axes = [
            np.linspace(self.lower[d], self.upper[d], samples_per_dim)
            for d in range(self.dim)
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


@dataclass(frozen=True)
class HypothesisData:
    """Regularity constants: Lipschitz moduli of dynamics and payoffs, the
    payoff sup bound, the linear growth constant of the dynamics, and the
    Lipschitz modulus of the strategy class under consideration.

    ``combined_lip`` is always derived as lip_dynamics * (1 + N*strategy_lip),
    the constant entering the trajectory-gap estimate.
    """

    n_players: int
    lip_dynamics: float
    lip_payoffs: tuple
    payoff_bound: float
    growth_const: float
    strategy_lip: float = 0.0
    dynamics_sup: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "lip_payoffs", tuple(float(v) for v in self.lip_payoffs))
        vals = (self.lip_dynamics, self.payoff_bound, self.growth_const,
                self.strategy_lip) + self.lip_payoffs
        if any(v < 0 for v in vals):
            raise InvalidInputError("hypothesis constants must be nonnegative")
        if len(self.lip_payoffs) != self.n_players:
            raise InvalidInputError("need one payoff Lipschitz constant per player")
        if self.dynamics_sup is not None and self.dynamics_sup < 0:
            raise InvalidInputError("dynamics_sup must be nonnegative")

    @property
    def combined_lip(self) -> float:
        return self.lip_dynamics * (1.0 + self.n_players * self.strategy_lip)

    def with_strategy_lip(self, strategy_lip: float) -> "HypothesisData":
        return replace(self, strategy_lip=float(strategy_lip))

    def to_dict(self) -> dict:
        return {
            "n_players": self.n_players,
            "lip_dynamics": self.lip_dynamics,
            "lip_payoffs": list(self.lip_payoffs),
            "payoff_bound": self.payoff_bound,
            "growth_const": self.growth_const,
            "strategy_lip": self.strategy_lip,
            "combined_lip": self.combined_lip,
            "dynamics_sup": self.dynamics_sup,
        }


@dataclass(frozen=True)
class GameDefinition:
    """An N-player differential game on bounded boxes.

    ``dynamics(x, controls)`` maps a state array and a list of per-player
    control arrays to the state velocity; ``payoffs[i]`` maps the same
    arguments to player i's running payoff. Both must accept broadcastable
    leading axes and be total on the boxes.
    """

    name: str
    n_players: int
    state_dim: int
    control_dims: tuple
    state_domain: Box
    control_sets: tuple
    dynamics: Callable
    payoffs: tuple
    discount_rate: float
    hypothesis: Optional[HypothesisData] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "control_dims", tuple(int(m) for m in self.control_dims))
        object.__setattr__(self, "control_sets", tuple(self.control_sets))
        object.__setattr__(self, "payoffs", tuple(self.payoffs))
        if self.n_players < 1:
            raise InvalidInputError("n_players must be positive")
        if self.state_dim < 1:
            raise InvalidInputError("state_dim must be positive")
        if self.discount_rate <= 0:
            raise InvalidInputError("discount_rate must be positive")
        if len(self.control_dims) != self.n_players:
            raise InvalidInputError("need one control dimension per player")
        if len(self.control_sets) != self.n_players:
            raise InvalidInputError("need one control box per player")
        if len(self.payoffs) != self.n_players:
            raise InvalidInputError("need one payoff function per player")
        if self.state_domain.dim != self.state_dim:
            raise InvalidInputError("state box dimension != state_dim")
        for i, (box, m) in enumerate(zip(self.control_sets, self.control_dims)):
            if box.dim != m:
                raise InvalidInputError(f"control box {i} dimension != control_dims[{i}]")


def _check_point(game, x, controls):
    x = np.asarray(x, dtype=float)
    if x.shape != (game.state_dim,):
        raise InvalidInputError(
            f"state must have shape ({game.state_dim},), got {x.shape}")
    if len(controls) != game.n_players:
        raise InvalidInputError(
            f"expected {game.n_players} control vectors, got {len(controls)}")
    us = []
    for i, u in enumerate(controls):
        u = np.asarray(u, dtype=float)
        if u.shape != (game.control_dims[i],):
            raise InvalidInputError(
                f"control {i} must have shape ({game.control_dims[i]},), "
                f"got {u.shape}")
        us.append(u)
    return x, us


def eval_dynamics(game: GameDefinition, x, controls) -> np.ndarray:
    """Evaluate the state velocity g(x, u_1..u_N) at a single point."""
    x, us = _check_point(game, x, controls)
    out = np.asarray(game.dynamics(x, us), dtype=float)
    if out.shape != (game.state_dim,):
        raise InvalidInputError(
            f"dynamics returned shape {out.shape}, expected ({game.state_dim},)")
    return out


def eval_payoff(game: GameDefinition, player: int, x, controls) -> float:
    """Evaluate player ``player``'s running payoff at a single point.

    Players are indexed 0..N-1.
    """
    if not 0 <= player < game.n_players:
        raise InvalidInputError(
            f"player index {player} out of range 0..{game.n_players - 1}")
    x, us = _check_point(game, x, controls)
    return float(game.payoffs[player](x, us))


def estimate_constants(game: GameDefinition, sample_count: int, seed: int) -> HypothesisData:
    """Estimate the regularity constants by sampling point pairs.

    Difference quotients only ever lower-bound the true Lipschitz moduli, so
    estimates are reported as such. For a fixed seed the estimates are
    non-decreasing in sample_count: the pair stream is a fixed prefix
    sequence and every statistic is a running maximum.
    """
    if sample_count < 2:
        raise InvalidInputError("sample_count must be at least 2")
    boxes = [game.state_domain] + list(game.control_sets)
    for b in boxes:
        if not (np.isfinite(b.lower).all() and np.isfinite(b.upper).all()):
            raise UnsupportedDomainError("sampling requires bounded boxes")

    dims = [b.dim for b in boxes]
    total = sum(dims)
    rng = np.random.default_rng(seed)
    raw = rng.uniform(size=(sample_count, 2, total))

    # slice the unit draws into per-box coordinates and rescale
    pieces = []
    ofs = 0
    for b, d in zip(boxes, dims):
        u = raw[:, :, ofs:ofs + d]
        pieces.append(b.lower + u * b.widths)
        ofs += d
    xs, us = pieces[0], pieces[1:]

    x_a, x_b = xs[:, 0, :], xs[:, 1, :]
    us_a = [u[:, 0, :] for u in us]
    us_b = [u[:, 1, :] for u in us]

    metric = np.linalg.norm(x_a - x_b, axis=-1)
    for ua, ub in zip(us_a, us_b):
        metric = metric + np.linalg.norm(ua - ub, axis=-1)
    ok = metric > 0

    g_a = np.asarray(game.dynamics(x_a, us_a), dtype=float)
    g_b = np.asarray(game.dynamics(x_b, us_b), dtype=float)
    g_norm_a = np.linalg.norm(g_a, axis=-1)
    g_norm_b = np.linalg.norm(g_b, axis=-1)

    lip_g = 0.0
    if ok.any():
        lip_g = float(np.max(
            np.linalg.norm(g_a - g_b, axis=-1)[ok] / metric[ok]))

    lip_f = []
    payoff_bound = 0.0
    for i in range(game.n_players):
        f_a = np.asarray(game.payoffs[i](x_a, us_a), dtype=float)
        f_b = np.asarray(game.payoffs[i](x_b, us_b), dtype=float)
        li = 0.0
        if ok.any():
            li = float(np.max(np.abs(f_a - f_b)[ok] / metric[ok]))
        lip_f.append(li)
        payoff_bound = max(payoff_bound,
                           float(np.max(np.abs(f_a))), float(np.max(np.abs(f_b))))

    growth = float(max(
        np.max(g_norm_a / (1.0 + np.linalg.norm(x_a, axis=-1))),
        np.max(g_norm_b / (1.0 + np.linalg.norm(x_b, axis=-1))),
    ))
    dyn_sup = float(max(np.max(g_norm_a), np.max(g_norm_b)))

    return HypothesisData(
        n_players=game.n_players,
        lip_dynamics=lip_g,
        lip_payoffs=tuple(lip_f),
        payoff_bound=payoff_bound,
        growth_const=growth,
        dynamics_sup=dyn_sup,
    )


@dataclass(frozen=True)
class RateConditionMargins:
    """Margins of the strict inequalities that guarantee the O(h) rate.

    Positive margin means the condition holds. The bounded-dynamics margin
    is only meaningful when a finite sup of the dynamics is known.
    """

    margin_bounded: Optional[float]
    margin_growth: float

    @property
    def bounded_ok(self) -> bool:
        return self.margin_bounded is not None and self.margin_bounded > 0

    @property
    def growth_ok(self) -> bool:
        return self.margin_growth > 0

    @property
    def rate_guaranteed(self) -> bool:
        return self.bounded_ok or self.growth_ok

    def to_dict(self) -> dict:
        return {
            "margin_bounded": self.margin_bounded,
            "margin_growth": self.margin_growth,
            "bounded_ok": self.bounded_ok,
            "growth_ok": self.growth_ok,
            "rate_guaranteed": self.rate_guaranteed,
        }


def rate_condition_margin(hyp: HypothesisData, rho: float) -> RateConditionMargins:
    """Margins rho - L (if the dynamics are bounded) and rho - (L + K)."""
    L = hyp.combined_lip
    margin_bounded = None
    if hyp.dynamics_sup is not None and math.isfinite(hyp.dynamics_sup):
        margin_bounded = rho - L
    return RateConditionMargins(
        margin_bounded=margin_bounded,
        margin_growth=rho - (L + hyp.growth_const),
    )


# ---------------------------------------------------------------------------
# benchmark game builders
# ---------------------------------------------------------------------------

def _sym_box(half_width, dim=1):
    return Box(np.full(dim, -float(half_width)), np.full(dim, float(half_width)))


def lq_one_player(a=0.0, b=1.0, q=1.0, r=1.0, rho=1.0, x_max=2.0, u_max=2.0):
    """Scalar linear-quadratic control benchmark.

    xdot = a*x + b*u, running payoff -(q*x^2 + r*u^2), discount rho, on
    state box [-x_max, x_max] and control box [-u_max, u_max]. Its value
    function is -p*x^2 with p the positive root of
    (b^2/r) p^2 + (rho - 2a) p - q = 0, the closed-form oracle used by the
    certification tests.
    """
    a, b, q, r = float(a), float(b), float(q), float(r)

    def dynamics(x, us):
        return a * x + b * us[0]

    def payoff(x, us):
        return -(q * x[..., 0] ** 2 + r * us[0][..., 0] ** 2)

    hyp = HypothesisData(
        n_players=1,
        lip_dynamics=max(abs(a), abs(b)),
        lip_payoffs=(max(2 * q * x_max, 2 * r * u_max),),
        payoff_bound=q * x_max ** 2 + r * u_max ** 2,
        growth_const=max(abs(a), abs(b) * u_max),
        dynamics_sup=abs(a) * x_max + abs(b) * u_max,
    )
    return GameDefinition(
        name="lq_one_player", n_players=1, state_dim=1, control_dims=(1,),
        state_domain=_sym_box(x_max), control_sets=(_sym_box(u_max),),
        dynamics=dynamics, payoffs=(payoff,), discount_rate=float(rho),
        hypothesis=hyp,
        params={"a": a, "b": b, "q": q, "r": r, "rho": float(rho),
                "x_max": float(x_max), "u_max": float(u_max)},
    )


def lq_symmetric(n_players=2, rho=1.0, x_max=2.0, u_max=1.0):
    """Symmetric N-player linear-quadratic benchmark.

    xdot = sum_j u_j, payoff_i = -(x^2 + u_i^2). The symmetric feedback
    equilibrium is u_i = -p*x, V_i = -p*x^2 with p the positive root of
    (2N-1) p^2 + rho p - 1 = 0.
    """
    n = int(n_players)
    if n < 1:
        raise InvalidInputError("n_players must be positive")

    def dynamics(x, us):
        drift = us[0]
        for u in us[1:]:
            drift = drift + u
        return 0.0 * x + drift

    def make_payoff(i):
        def payoff(x, us):
            return -(x[..., 0] ** 2 + us[i][..., 0] ** 2)
        return payoff

    hyp = HypothesisData(
        n_players=n,
        lip_dynamics=1.0,
        lip_payoffs=(max(2 * x_max, 2 * u_max),) * n,
        payoff_bound=x_max ** 2 + u_max ** 2,
        growth_const=n * u_max,
        dynamics_sup=n * u_max,
    )
    return GameDefinition(
        name="lq_symmetric", n_players=n, state_dim=1, control_dims=(1,) * n,
        state_domain=_sym_box(x_max), control_sets=(_sym_box(u_max),) * n,
        dynamics=dynamics, payoffs=tuple(make_payoff(i) for i in range(n)),
        discount_rate=float(rho), hypothesis=hyp,
        params={"n_players": n, "rho": float(rho),
                "x_max": float(x_max), "u_max": float(u_max)},
    )


def constant_payoff(c=2.0, rho=0.5, x_max=1.0, u_max=1.0):
    """Frozen-state game with constant payoff: g = 0, f = c.

    Both the discrete and the continuous payoff equal c/rho exactly for
    every admissible step, which makes this the exact-scheme benchmark.
    """
    c = float(c)

    def dynamics(x, us):
        return 0.0 * x + 0.0 * us[0]

    def payoff(x, us):
        return c + 0.0 * x[..., 0] + 0.0 * us[0][..., 0]

    hyp = HypothesisData(
        n_players=1, lip_dynamics=0.0, lip_payoffs=(0.0,),
        payoff_bound=abs(c), growth_const=0.0, dynamics_sup=0.0,
    )
    return GameDefinition(
        name="constant_payoff", n_players=1, state_dim=1, control_dims=(1,),
        state_domain=_sym_box(x_max), control_sets=(_sym_box(u_max),),
        dynamics=dynamics, payoffs=(payoff,), discount_rate=float(rho),
        hypothesis=hyp,
        params={"c": c, "rho": float(rho),
                "x_max": float(x_max), "u_max": float(u_max)},
    )


def decay(a=0.5, rho=3.0, x_max=1.0, u_max=1.0):
    """Stable scalar benchmark xdot = -a*x + u, payoff -(x^2 + u^2).

    With the default rho the O(h) rate condition rho > L + K holds for any
    strategy with Lipschitz modulus below (rho - K)/L_g - 1, so this is the
    benchmark for the consistency-rate study.
    """
    a = float(a)

    def dynamics(x, us):
        return -a * x + us[0]

    def payoff(x, us):
        return -(x[..., 0] ** 2 + us[0][..., 0] ** 2)

    hyp = HypothesisData(
        n_players=1,
        lip_dynamics=max(abs(a), 1.0),
        lip_payoffs=(max(2 * x_max, 2 * u_max),),
        payoff_bound=x_max ** 2 + u_max ** 2,
        growth_const=max(abs(a), u_max),
        dynamics_sup=abs(a) * x_max + u_max,
    )
    return GameDefinition(
        name="decay", n_players=1, state_dim=1, control_dims=(1,),
        state_domain=_sym_box(x_max), control_sets=(_sym_box(u_max),),
        dynamics=dynamics, payoffs=(payoff,), discount_rate=float(rho),
        hypothesis=hyp,
        params={"a": a, "rho": float(rho),
                "x_max": float(x_max), "u_max": float(u_max)},
    )


GAME_BUILDERS = {
    "lq_one_player": lq_one_player,
    "lq_symmetric": lq_symmetric,
    "constant_payoff": constant_payoff,
    "decay": decay,
}


def build_game(name: str, params: Optional[dict] = None) -> GameDefinition:
    """Construct a registered benchmark game from a flat parameter table."""
    if name not in GAME_BUILDERS:
        raise InvalidInputError(
            f"unknown game '{name}'; registered: {sorted(GAME_BUILDERS)}")
    builder = GAME_BUILDERS[name]
    params = dict(params or {})
    sig = inspect.signature(builder)
    unknown = set(params) - set(sig.parameters)
    if unknown:
        raise InvalidInputError(
            f"unknown parameter(s) {sorted(unknown)} for game '{name}'")
    return builder(**params)
