"""Outer finite-dimensional minimization over apertures and average transactions.

The classic reduction prices each cell as c(T - omega, x - omega*upsilon) +
omega * l(upsilon); the generalized reduction replaces l(upsilon) with the
moderated cost of the inner trajectory problem.  The zero-aperture cell always
contributes c(T, x), so the value never exceeds the instantaneous cost where
that is finite.  Grid optima are sharpened by a coordinate pattern search with
step halving around the incumbent.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .costs import CostField, TerminalCost, eval_cost, eval_terminal
from .errors import MisuseError
from .extreal import INF, ExtReal
from .moderation import SolverConfig, _solve_window_problem
from .trajectories import Trajectory, Window, enrichment

__all__ = [
    "OuterGrid",
    "ValueResult",
    "classic_lax_hopf",
    "generalized_lax_hopf",
    "optimum_certificate",
    "dynamic_value_profile",
    "wtp_value",
    "value_result_to_json",
]


@dataclass(frozen=True)
class OuterGrid:
    """Search grid over (omega, upsilon); omega = 0 is always a member."""

    omega_values: np.ndarray        # sorted, 0 plus positive apertures
    upsilon_lattice: np.ndarray     # (m, l)
    refine: bool = True
    shrink: float = 0.5
    max_rounds: int = 10

    @staticmethod
    def build(omega_max: float, n_omega: int, upsilon_box, n_upsilon: int,
              refine: bool = True, shrink: float = 0.5, max_rounds: int = 10) -> "OuterGrid":
        """Uniform grid: n_omega apertures in (0, omega_max] plus 0, and a box lattice."""
        if omega_max <= 0 or n_omega < 1:
            raise MisuseError("OuterGrid.build needs omega_max > 0 and n_omega >= 1")
        omegas = np.concatenate([[0.0], np.linspace(omega_max / n_omega, omega_max, n_omega)])
        box = np.asarray(upsilon_box, dtype=float).reshape(-1, 2)
        axes = [np.linspace(lo, hi, n_upsilon) for lo, hi in box]
        mesh = np.meshgrid(*axes, indexing="ij")
        lattice = np.stack([m.ravel() for m in mesh], axis=1)
        return OuterGrid(omega_values=omegas, upsilon_lattice=lattice,
                         refine=refine, shrink=shrink, max_rounds=max_rounds)

    def normalized(self) -> "OuterGrid":
        omegas = np.asarray(self.omega_values, dtype=float)
        if not np.any(omegas == 0.0):
            omegas = np.concatenate([[0.0], omegas])
        omegas = np.unique(omegas)
        if np.any(omegas < 0):
            raise MisuseError("omega grid values must be nonnegative")
        lattice = np.asarray(self.upsilon_lattice, dtype=float)
        if lattice.ndim == 1:
            lattice = lattice[:, None]
        if lattice.size == 0:
            raise MisuseError("upsilon lattice must be non-empty")
        return OuterGrid(omegas, lattice, self.refine, self.shrink, self.max_rounds)


@dataclass(frozen=True)
class ValueResult:
    """Value, optimizers, optimal trajectory and certificate residual."""

    value: ExtReal
    omega_star: Optional[float]
    upsilon_star: Optional[np.ndarray]
    start_state: Optional[np.ndarray]
    trajectory: Optional[Trajectory]
    moderation_lambda: Optional[ExtReal] = None
    certificate_residual: Optional[float] = None
    discount_factor: Optional[float] = None


def _cell_seed(base_seed: int, omega: float, upsilon: np.ndarray):
    """Deterministic, order-independent per-cell seed material."""
    quant = [int(round(omega * 1e9)) & 0xFFFFFFFF]
    quant += [int(round(float(c) * 1e9)) & 0xFFFFFFFF for c in np.atleast_1d(upsilon)]
    return np.random.SeedSequence([int(base_seed)] + quant)


class _CellCache:
    def __init__(self, fn):
        self.fn = fn
        self.store = {}

    def __call__(self, omega: float, upsilon: np.ndarray):
        key = (round(float(omega), 12), tuple(np.round(np.atleast_1d(upsilon), 12)))
        if key not in self.store:
            self.store[key] = self.fn(float(omega), np.atleast_1d(upsilon))
        return self.store[key]


def _outer_minimize(grid: OuterGrid, cell_fn, omega_max: float):
    """Grid pass plus optional pattern search; deterministic smallest-(omega, upsilon) tie-break."""
    grid = grid.normalized()
    cells = _CellCache(cell_fn)
    ell = grid.upsilon_lattice.shape[1]
    zero_ups = np.zeros(ell)

    def key_of(omega, ups, value):
        return (value, float(omega), tuple(np.atleast_1d(ups)))

    best = None
    for omega in grid.omega_values:
        if omega == 0.0:
            value, _ = cells(0.0, zero_ups)
            cand = key_of(0.0, zero_ups, value)
            if best is None or cand < best:
                best = cand
            continue
        for ups in grid.upsilon_lattice:
            value, _ = cells(float(omega), ups)
            cand = key_of(omega, ups, value)
            if cand < best:
                best = cand

    if grid.refine and math.isfinite(best[0]):
        pos = np.asarray(grid.omega_values)[np.asarray(grid.omega_values) > 0]
        d_omega = float(np.min(np.diff(pos))) if len(pos) > 1 else omega_max / 4.0
        steps = [d_omega]
        for h in range(ell):
            col = np.unique(grid.upsilon_lattice[:, h])
            steps.append(float(np.min(np.diff(col))) if len(col) > 1 else 0.25)
        steps = np.asarray(steps)
        y = np.array([best[1], *best[2]])
        for _ in range(grid.max_rounds):
            for _ in range(50):  # greedy moves at the current step size
                moved = False
                for d in range(1 + ell):
                    for sgn in (+1.0, -1.0):
                        probe = y.copy()
                        probe[d] += sgn * steps[d]
                        om = min(max(probe[0], 0.0), omega_max)
                        ups = probe[1:] if om > 0 else zero_ups
                        value, _ = cells(om, ups) if om > 0 else cells(0.0, zero_ups)
                        cand = (value, om, tuple(ups))
                        if cand < best:
                            best = cand
                            y = np.array([om, *ups])
                            moved = True
                if not moved:
                    break
            steps = steps * grid.shrink
    value, omega_star, ups_star = best[0], best[1], np.asarray(best[2])
    _, payload = cells(omega_star, ups_star if omega_star > 0 else zero_ups)
    return value, omega_star, ups_star, payload


def _straight_line(T, x, omega, upsilon, n_steps) -> Trajectory:
    return Trajectory(
        window=Window(T=float(T), omega=float(omega)),
        terminal_state=np.atleast_1d(np.asarray(x, dtype=float)),
        velocities=np.tile(np.atleast_1d(upsilon), (n_steps, 1)),
    )


def _finish(value, omega_star, ups_star, start, traj, lam, c_start, discount=None) -> ValueResult:
    if not math.isfinite(value):
        return ValueResult(INF, None, None, None, None)
    residual = None
    if omega_star > 0 and lam is not None and lam.is_finite and c_start is not None:
        d = 1.0 if discount is None else discount
        residual = abs(enrichment(d * c_start, value, omega_star) - lam.value)
    return ValueResult(
        value=ExtReal(value), omega_star=float(omega_star),
        upsilon_star=ups_star if omega_star > 0 else None,
        start_state=start, trajectory=traj, moderation_lambda=lam,
        certificate_residual=residual, discount_factor=discount,
    )


def classic_lax_hopf(terminal: TerminalCost, cost: CostField, T: float, x,
                     grid: OuterGrid, n_steps: int = 32) -> ValueResult:
    """Classic reduction for velocity-only convex costs.

    Each positive-aperture cell costs c(T - omega, x - omega*upsilon) +
    omega * l(upsilon); the optimal trajectory is the straight line.
    """
    if not (cost.velocity_only and cost.declared_convex_in_u):
        raise MisuseError("classic_lax_hopf requires a velocity-only cost declared convex in u")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    omega_max = float(np.max(grid.normalized().omega_values))

    def cell(omega, ups):
        if omega == 0.0:
            return eval_terminal(terminal, T, x).to_float(), None
        c_val = eval_terminal(terminal, T - omega, x - omega * ups)
        if not c_val.is_finite:
            return math.inf, None
        lval = eval_cost(cost, T, x, ups)
        return (c_val + lval * omega).to_float(), (lval, c_val.value)

    value, om, ups, payload = _outer_minimize(grid, cell, omega_max)
    if om == 0.0 or payload is None:
        return _finish(value, om, ups, x.copy() if math.isfinite(value) else None,
                       None, None, None)
    lval, c_start = payload
    traj = _straight_line(T, x, om, ups, n_steps)
    return _finish(value, om, ups, x - om * ups, traj, lval, c_start)


def generalized_lax_hopf(terminal: TerminalCost, cost: CostField, T: float, x,
                         grid: OuterGrid, cfg: SolverConfig) -> ValueResult:
    """Generalized reduction: omega * moderated cost replaces omega * l(upsilon)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    omega_max = float(np.max(grid.normalized().omega_values))

    def cell(omega, ups):
        if omega == 0.0:
            return eval_terminal(terminal, T, x).to_float(), None
        c_val = eval_terminal(terminal, T - omega, x - omega * ups)
        if not c_val.is_finite:
            return math.inf, None
        rng = np.random.default_rng(_cell_seed(cfg.seed, omega, ups))
        lam, traj = _solve_window_problem(cost, None, T, x, omega, ups, cfg, rng=rng)
        return (c_val + (lam * omega if lam.is_finite else INF)).to_float(), (lam, traj, c_val.value)

    value, om, ups, payload = _outer_minimize(grid, cell, omega_max)
    if om == 0.0 or payload is None:
        return _finish(value, om, ups, x.copy() if math.isfinite(value) else None,
                       None, None, None)
    lam, traj, c_start = payload
    return _finish(value, om, ups, x - om * ups, traj, lam, c_start)


def optimum_certificate(result: ValueResult, terminal: TerminalCost,
                        moderation_lambda: ExtReal) -> Optional[float]:
    """|enrichment(c(T - omega*, start), V, omega*) - lambda*|; None at omega* = 0.

    A zero-aperture optimum has no window to enrich over: flagged (None), not failed.
    """
    if result.omega_star is None or result.omega_star == 0:
        return None
    if result.trajectory is None:
        raise MisuseError("optimum_certificate needs the optimal trajectory")
    t_start = result.trajectory.window.start
    c_start = eval_terminal(terminal, t_start, result.start_state)
    if not (c_start.is_finite and result.value.is_finite and moderation_lambda.is_finite):
        raise MisuseError("optimum_certificate needs finite value, start cost and moderation")
    return abs(
        enrichment(c_start.value, result.value.value, result.omega_star)
        - moderation_lambda.value
    )


def dynamic_value_profile(result: ValueResult, terminal: TerminalCost, cost: CostField):
    """Running value along the optimal trajectory: V(t) from the start cost plus
    the partial cumulated transaction cost; endpoints match the start cost and
    the optimal value."""
    if result.trajectory is None or result.omega_star in (None, 0):
        raise MisuseError("dynamic_value_profile needs an optimizer with positive aperture")
    traj = result.trajectory
    c_start = eval_terminal(terminal, traj.window.start, traj.states[0])
    if not c_start.is_finite:
        raise MisuseError("start state leaves the departure tube")
    vals = [c_start.value]
    running = c_start.value
    for t, xm, u in zip(traj.mid_times, traj.mid_states, traj.velocities):
        step = eval_cost(cost, float(t), xm, u)
        if not step.is_finite:
            raise MisuseError("optimal trajectory hits an infinite-cost step")
        running += traj.dt * step.value
        vals.append(running)
    return list(zip(traj.times.tolist(), vals))


def wtp_value(terminal: TerminalCost, velocity_bound: float, T: float, x,
              omega: float, state_grid) -> ExtReal:
    """Willingness-to-pay value: cheapest reachable start state in the window.

    Start states reachable with speed at most the bound form the ball of radius
    omega * bound around x; zero aperture returns c(T, x) exactly.
    """
    if omega < 0:
        raise MisuseError(f"aperture must be nonnegative, got {omega}")
    if velocity_bound < 0:
        raise MisuseError(f"velocity bound must be nonnegative, got {velocity_bound}")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if omega == 0:
        return eval_terminal(terminal, T, x)
    if velocity_bound == 0:
        return eval_terminal(terminal, T - omega, x)
    pts = np.asarray(state_grid, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    radius = omega * velocity_bound
    inside = np.linalg.norm(pts - x, axis=1) <= radius + 1e-12
    best = INF
    for y in pts[inside]:
        v = eval_terminal(terminal, T - omega, y)
        if v < best:
            best = v
    return best


def value_result_to_json(result: ValueResult) -> str:
    """Serialize the value, optimizers and certificate to a JSON document."""
    def arr(a):
        return None if a is None else [float(v) for v in np.atleast_1d(a)]

    doc = {
        "value": "inf" if not result.value.is_finite else result.value.value,
        "omega_star": result.omega_star,
        "upsilon_star": arr(result.upsilon_star),
        "start_state": arr(result.start_state),
        "certificate_residual": result.certificate_residual,
    }
    if result.discount_factor is not None:
        doc["discount_factor"] = result.discount_factor
    return json.dumps(doc, indent=2, sort_keys=True)
