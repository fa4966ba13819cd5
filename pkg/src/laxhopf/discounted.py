"""Interest-rate variant: trajectory-dependent discounting of costs.

A rate field m(t, x, u) accumulates along each candidate trajectory; every
quantity is actualized to the terminal time T, i.e. the factor applied at time
tau is exp of the tail integral of m from tau to T along the trajectory itself.
With m identically zero every operation here reproduces its undiscounted
counterpart bit for bit under the same solver configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .costs import CostField, TerminalCost, eval_terminal
from .errors import MisuseError, RateOverflowError
from .extreal import INF, ExtReal
from .laxhopf_core import OuterGrid, ValueResult, _cell_seed, _finish, _outer_minimize
from .moderation import _EXP_CAP, SolverConfig, _solve_window_problem
from .trajectories import Trajectory, enrichment

__all__ = [
    "RateField",
    "AccumulationProfile",
    "make_rate",
    "accumulate_rate",
    "discounted_moderate",
    "discounted_value",
    "actualized_enrichment_certificate",
]


@dataclass(frozen=True)
class RateField:
    """Per-time-unit interest rate m(t, x, u); no sign restriction."""

    evaluator: Callable
    batch_evaluator: Optional[Callable] = None


def make_rate(name: str, **params) -> RateField:
    """Catalog: "zero", "constant" (r), "velocity" (m = sum of velocity components)."""
    if name == "zero":
        if params:
            raise MisuseError(f"unknown parameters for 'zero': {sorted(params)}")
        return RateField(
            evaluator=lambda t, x, u: 0.0,
            batch_evaluator=lambda t, X, U: np.zeros(len(U)),
        )
    if name == "constant":
        r = float(params.pop("r", 0.0))
        if params:
            raise MisuseError(f"unknown parameters for 'constant': {sorted(params)}")
        return RateField(
            evaluator=lambda t, x, u: r,
            batch_evaluator=lambda t, X, U: np.full(len(U), r),
        )
    if name == "velocity":
        if params:
            raise MisuseError(f"unknown parameters for 'velocity': {sorted(params)}")
        return RateField(
            evaluator=lambda t, x, u: float(np.sum(u)),
            batch_evaluator=lambda t, X, U: np.sum(U, axis=1),
        )
    raise MisuseError(f"unknown rate {name!r}")


@dataclass(frozen=True)
class AccumulationProfile:
    """Per-node factors exp(tail integral of m) along a trajectory; 1 at the terminal node."""

    times: np.ndarray
    factors: np.ndarray


def accumulate_rate(traj: Trajectory, rate: RateField) -> AccumulationProfile:
    """Node factors D_k = exp(integral of m from t_k to T), midpoint quadrature."""
    n = traj.n_steps
    if rate.batch_evaluator is not None:
        mvals = np.asarray(
            rate.batch_evaluator(traj.mid_times, traj.mid_states, traj.velocities),
            dtype=float,
        )
    else:
        mvals = np.array(
            [float(rate.evaluator(float(t), x, u))
             for t, x, u in zip(traj.mid_times, traj.mid_states, traj.velocities)]
        )
    tails = np.zeros(n + 1)
    tails[:-1] = np.cumsum((traj.dt * mvals)[::-1])[::-1]
    if np.any(tails > _EXP_CAP):
        k = int(np.flatnonzero(tails > _EXP_CAP)[0])
        raise RateOverflowError(
            f"accumulated rate overflows exp at node {k} (t={traj.times[k]})"
        )
    return AccumulationProfile(times=traj.times, factors=np.exp(tails))


def discounted_moderate(cost: CostField, rate: RateField, T: float, x,
                        omega: float, upsilon, cfg: SolverConfig, rng=None):
    """Moderation with the integrand weighted by the trajectory's own accumulation factor."""
    return _solve_window_problem(cost, rate, T, x, omega, upsilon, cfg, rng=rng)


def discounted_value(terminal: TerminalCost, cost: CostField, rate: RateField,
                     T: float, x, grid: OuterGrid, cfg: SolverConfig) -> ValueResult:
    """Outer minimization of D * c(T - omega, x - omega*upsilon) + omega * Lambda.

    The discount D on the start cost is the accumulation factor at T - omega
    along the cell's own discounted-moderation argmin trajectory.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    omega_max = float(np.max(grid.normalized().omega_values))

    def cell(omega, ups):
        if omega == 0.0:
            return eval_terminal(terminal, T, x).to_float(), None
        c_val = eval_terminal(terminal, T - omega, x - omega * ups)
        if not c_val.is_finite:
            return math.inf, None
        rng = np.random.default_rng(_cell_seed(cfg.seed, omega, ups))
        lam, traj = _solve_window_problem(cost, rate, T, x, omega, ups, cfg, rng=rng)
        if not lam.is_finite:
            return math.inf, None
        d0 = float(accumulate_rate(traj, rate).factors[0])
        return d0 * c_val.value + omega * lam.value, (lam, traj, c_val.value, d0)

    value, om, ups, payload = _outer_minimize(grid, cell, omega_max)
    if om == 0.0 or payload is None:
        return _finish(value, om, ups, x.copy() if math.isfinite(value) else None,
                       None, None, None)
    lam, traj, c_start, d0 = payload
    return _finish(value, om, ups, x - om * ups, traj, lam, c_start, discount=d0)


def actualized_enrichment_certificate(result: ValueResult, terminal: TerminalCost,
                                      rate: RateField) -> Optional[float]:
    """|Lambda* - (V - D(T - omega*) c(T - omega*, start)) / omega*|; None at omega* = 0."""
    if result.omega_star is None or result.omega_star == 0:
        return None
    if result.trajectory is None or result.moderation_lambda is None:
        raise MisuseError("certificate needs the optimal trajectory and moderation value")
    c_start = eval_terminal(terminal, result.trajectory.window.start, result.start_state)
    if not (c_start.is_finite and result.value.is_finite and result.moderation_lambda.is_finite):
        raise MisuseError("certificate needs finite value, start cost and moderation")
    d0 = float(accumulate_rate(result.trajectory, rate).factors[0])
    return abs(
        enrichment(d0 * c_start.value, result.value.value, result.omega_star)
        - result.moderation_lambda.value
    )
