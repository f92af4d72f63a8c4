"""Run configuration, CSV tables and solution persistence.

One TOML file configures every pipeline so a run is reproducible from a
single artifact. Tables are plain CSV (comma separated, header row, ``.``
decimal, UTF-8, LF line endings) with floats rendered by ``repr`` so that
values round-trip exactly and reruns are byte-identical. The manifest is
JSON and is the only place a wall-clock timestamp may appear.
"""

from __future__ import annotations

import csv
import json
import os
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import tomli

from .certify import CertificationReport, DeviationFamilyConfig, RateStudy
from .discretize import DiscreteTrajectory, TimeStep, make_timestep
from .errors import ConfigError, InvalidInputError
from .games import Box, GameDefinition, build_game
from .grids import Grid, GridFunction, StrategyField
from .solver import NashSolution, SolveDiagnostics, SolverConfig


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def read_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader]


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    game_name: str
    game_params: dict
    grid_spec: dict                 # {"min": [...], "max": [...], "nodes": [...]}
    h: Optional[float]
    h_list: Optional[list]
    solver: SolverConfig
    x0_samples: list
    payoff_tol: float = 1e-8
    dt: Optional[float] = None
    family: DeviationFamilyConfig = field(
        default_factory=DeviationFamilyConfig)
    epsilon_max: float = 0.05
    gap_max: float = 0.05
    require_rate_regime: bool = False
    seed: int = 7
    estimate_samples: int = 4096
    output_dir: str = "out"

    def build_game(self) -> GameDefinition:
        return build_game(self.game_name, self.game_params)

    def build_grid(self, game: GameDefinition) -> Grid:
        spec = self.grid_spec
        lo = np.asarray(spec["min"], dtype=float)
        hi = np.asarray(spec["max"], dtype=float)
        counts = [int(c) for c in spec["nodes"]]
        box = game.state_domain
        if lo.size != box.dim or hi.size != box.dim or len(counts) != box.dim:
            raise ConfigError("grid", "dimension does not match the game state")
        if not (np.allclose(lo, box.lower, atol=1e-12)
                and np.allclose(hi, box.upper, atol=1e-12)):
            raise ConfigError(
                "grid.min/grid.max",
                f"must coincide with the game state box "
                f"[{box.lower.tolist()}, {box.upper.tolist()}]")
        return Grid.uniform(Box(lo, hi), counts)

    def timestep(self, game: GameDefinition, h=None) -> TimeStep:
        h = h if h is not None else self.h
        if h is None:
            raise ConfigError("time.h", "missing step length")
        try:
            return make_timestep(game.discount_rate, h)
        except InvalidInputError as err:
            raise ConfigError("time.h", str(err)) from err


def _as_list(value):
    return value if isinstance(value, list) else [value]


def load_config(path) -> RunConfig:
    """Parse and validate a TOML run configuration."""
    try:
        with open(path, "rb") as fh:
            raw = tomli.load(fh)
    except FileNotFoundError as err:
        raise ConfigError("<path>", f"cannot read config: {err}") from err
    except tomli.TOMLDecodeError as err:
        raise ConfigError("<syntax>", str(err)) from err

    try:
        game_tbl = raw["game"]
        name = game_tbl["name"]
    except KeyError as err:
        raise ConfigError("game.name", "missing") from err
    params = dict(game_tbl.get("params", {}))

    grid_tbl = raw.get("grid")
    if not grid_tbl:
        raise ConfigError("grid", "missing")
    for key in ("min", "max", "nodes"):
        if key not in grid_tbl:
            raise ConfigError(f"grid.{key}", "missing")
    grid_spec = {"min": _as_list(grid_tbl["min"]),
                 "max": _as_list(grid_tbl["max"]),
                 "nodes": _as_list(grid_tbl["nodes"])}

    time_tbl = raw.get("time", {})
    h = time_tbl.get("h")
    h_list = time_tbl.get("h_list")
    if h is None and not h_list:
        raise ConfigError("time.h", "need h or h_list")

    solver_tbl = raw.get("solver", {})
    try:
        solver = SolverConfig(
            control_samples=solver_tbl.get("control_samples", 101),
            inner_tol=solver_tbl.get("inner_tol", 1e-6),
            outer_tol=solver_tbl.get("outer_tol", 1e-4),
            max_inner=solver_tbl.get("max_inner", 50_000),
            max_outer=solver_tbl.get("max_outer", 100),
            damping=solver_tbl.get("damping", 1.0),
        )
    except InvalidInputError as err:
        raise ConfigError("solver", str(err)) from err

    cert = raw.get("certify", {})
    family_tbl = cert.get("family", {})
    try:
        family = DeviationFamilyConfig(
            count=family_tbl.get("count", 12),
            seed=family_tbl.get("seed", cert.get("seed", 7)),
            lipschitz_cap=family_tbl.get("lipschitz_cap", 2.0),
            constant_samples=family_tbl.get("constant_samples", 3),
            residual_max=family_tbl.get("residual_max", 1e-3),
        )
    except InvalidInputError as err:
        raise ConfigError("certify.family", str(err)) from err

    x0_samples = cert.get("x0", [])
    x0_samples = [x if isinstance(x, list) else [x] for x in _as_list(x0_samples)]

    cfg = RunConfig(
        game_name=name,
        game_params=params,
        grid_spec=grid_spec,
        h=h,
        h_list=list(h_list) if h_list else None,
        solver=solver,
        x0_samples=x0_samples,
        payoff_tol=cert.get("payoff_tol", 1e-8),
        dt=cert.get("dt"),
        family=family,
        epsilon_max=cert.get("epsilon_max", 0.05),
        gap_max=cert.get("gap_max", 0.05),
        require_rate_regime=cert.get("require_rate_regime", False),
        seed=cert.get("seed", 7),
        estimate_samples=cert.get("estimate_samples", 4096),
        output_dir=raw.get("output", {}).get("dir", "out"),
    )

    # surface invalid steps at load time with the field name attached
    game = cfg.build_game()
    cfg.build_grid(game)
    for step in ([cfg.h] if cfg.h else []) + (cfg.h_list or []):
        try:
            make_timestep(game.discount_rate, step)
        except InvalidInputError as err:
            raise ConfigError("time.h", str(err)) from err
    return cfg


# ---------------------------------------------------------------------------
# solution persistence
# ---------------------------------------------------------------------------

def _coord_header(ndim):
    return [f"x{d + 1}" for d in range(ndim)]


def write_value_csv(path, gf: GridFunction) -> None:
    pts = gf.grid.points
    rows = [list(p) + [v] for p, v in zip(pts, gf.values)]
    write_csv(path, _coord_header(gf.grid.ndim) + ["value"], rows)


def write_strategy_csv(path, sf: StrategyField) -> None:
    pts = sf.grid.points
    header = _coord_header(sf.grid.ndim) + [
        f"u{k + 1}" for k in range(sf.control_dim)]
    rows = [list(p) + list(c) for p, c in zip(pts, sf.controls)]
    write_csv(path, header, rows)


def write_discrete_trajectory_csv(path, traj: DiscreteTrajectory) -> None:
    ndim = traj.states.shape[1]
    header = ["step", "t"] + _coord_header(ndim)
    for i, ctrl in enumerate(traj.controls):
        header += [f"p{i + 1}_u{k + 1}" for k in range(ctrl.shape[1])]
    header.append("clamped")
    rows = []
    for k in range(traj.states.shape[0]):
        row = [k, k * traj.h] + list(traj.states[k])
        for ctrl in traj.controls:
            row += list(ctrl[k]) if k < ctrl.shape[0] else [""] * ctrl.shape[1]
        row.append(traj.clamped[k] if k < traj.clamped.shape[0] else 0)
        rows.append(row)
    write_csv(path, header, rows)


def write_manifest(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def save_solution(out_dir, game: GameDefinition, sol: NashSolution,
                  run_config: Optional[RunConfig] = None) -> None:
    """Persist a NashSolution as per-player CSVs plus a JSON manifest."""
    os.makedirs(out_dir, exist_ok=True)
    for i, (gf, sf) in enumerate(zip(sol.values, sol.strategies)):
        write_value_csv(os.path.join(out_dir, f"value_player{i + 1}.csv"), gf)
        write_strategy_csv(
            os.path.join(out_dir, f"strategy_player{i + 1}.csv"), sf)
    manifest = {
        "kind": "nash_solution",
        "game": {"name": game.name, "params": game.params},
        "n_players": game.n_players,
        "grid": {"nodes": [list(map(float, n)) for n in sol.grid.nodes]},
        "control_boxes": [
            {"lower": list(map(float, b.lower)),
             "upper": list(map(float, b.upper))}
            for b in game.control_sets],
        "timestep": {"h": sol.ts.h, "rho": sol.ts.discount_rate,
                     "beta": sol.ts.beta, "theta": sol.ts.theta},
        "diagnostics": sol.diagnostics.to_dict(),
        "solver": (run_config.solver.to_dict() if run_config else None),
        "written_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    write_manifest(os.path.join(out_dir, "manifest.json"), manifest)


def load_solution(out_dir):
    """Rebuild (game, NashSolution, manifest) from a solution directory.

    CSV floats were written with repr, so the reconstruction is exact.
    """
    manifest = read_manifest(os.path.join(out_dir, "manifest.json"))
    game = build_game(manifest["game"]["name"], manifest["game"]["params"])
    grid = Grid(tuple(np.asarray(n, dtype=float)
                      for n in manifest["grid"]["nodes"]))
    values = []
    strategies = []
    for i in range(manifest["n_players"]):
        _, rows = read_csv(os.path.join(out_dir, f"value_player{i + 1}.csv"))
        values.append(GridFunction(
            grid, np.array([float(r[-1]) for r in rows])))
        _, srows = read_csv(
            os.path.join(out_dir, f"strategy_player{i + 1}.csv"))
        m = game.control_dims[i]
        controls = np.array([[float(v) for v in r[-m:]] for r in srows])
        strategies.append(StrategyField(grid, controls, game.control_sets[i]))

    d = manifest["diagnostics"]
    diag = SolveDiagnostics(
        outer_sweeps=d["outer_sweeps"],
        inner_iterations=d["inner_iterations"],
        final_inner_residuals=tuple(d["final_inner_residuals"]),
        final_strategy_change=d["final_strategy_change"],
        bellman_residuals=tuple(d["bellman_residuals"]),
        converged=d["converged"],
        stop_reason=d["stop_reason"],
        backend=d["backend"],
        runtime_seconds=d["runtime_seconds"],
    )
    tsd = manifest["timestep"]
    ts = make_timestep(tsd["rho"], tsd["h"])
    sol = NashSolution(tuple(values), tuple(strategies), ts, diag)
    return game, sol, manifest


# ---------------------------------------------------------------------------
# report tables
# ---------------------------------------------------------------------------

def write_rate_outputs(out_dir, study: RateStudy) -> None:
    os.makedirs(out_dir, exist_ok=True)
    rows = [
        [r["h"], r["player"] + 1,
         " ".join(repr(v) for v in r["x0"]), r["gap"], r["budget"]]
        for r in study.rows + study.excluded]
    write_csv(os.path.join(out_dir, "rate_table.csv"),
              ["h", "player", "x0", "gap", "budget"], rows)
    plot = [[np.log(r["h"]), np.log(r["gap"])] for r in study.rows]
    write_csv(os.path.join(out_dir, "rate_loglog.csv"),
              ["log_h", "log_gap"], plot)
    write_manifest(os.path.join(out_dir, "rate_fit.json"), study.to_dict())


def write_certification_outputs(out_dir, report: CertificationReport) -> None:
    os.makedirs(out_dir, exist_ok=True)
    write_manifest(os.path.join(out_dir, "certification.json"),
                   report.to_dict())
    gap_rows = [
        [g["h"], g["player"] + 1, " ".join(repr(v) for v in g["x0"]),
         g["gap"], g["budget"]]
        for g in report.gaps]
    write_csv(os.path.join(out_dir, "gap_table.csv"),
              ["h", "player", "x0", "gap", "budget"], gap_rows)
    eps_rows = []
    if report.epsilon is not None:
        eps_rows = [
            [r["player"] + 1, r["deviation"],
             " ".join(repr(v) for v in r["x0"]), r["delta"], r["budget"],
             r["delta_effective"]]
            for r in report.epsilon.rows]
    write_csv(os.path.join(out_dir, "epsilon_table.csv"),
              ["player", "deviation", "x0", "delta", "budget",
               "delta_effective"], eps_rows)


def write_gap_curves_csv(path, report) -> None:
    """Gronwall gap/bound curves: t, y, ytilde, gap, bound."""
    ndim = report.continuous.shape[1]
    header = (["t"] + [f"y{d + 1}" for d in range(ndim)]
              + [f"ytilde{d + 1}" for d in range(ndim)] + ["gap", "bound"])
    rows = [
        list(row)
        for row in np.column_stack([
            report.times, report.continuous, report.interpolant,
            report.gaps, report.bounds])]
    write_csv(path, header, rows)


def write_continuous_trajectory_csv(path, traj) -> None:
    ndim = traj.states.shape[1]
    header = ["t"] + _coord_header(ndim) + ["clamped"]
    rows = [[traj.times[k]] + list(traj.states[k]) + [traj.clamped[k]]
            for k in range(traj.states.shape[0])]
    write_csv(path, header, rows)
