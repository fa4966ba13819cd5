"""Temporal windows, terminal-anchored trajectories and enrichment ratios.

Trajectories live on the window [T - omega, T] and are anchored at the
prescribed terminal state: states are reconstructed backward from x(T), so the
terminal condition holds exactly and the unprescribed quantity is the start
state.  Velocities are piecewise constant on a uniform grid, which makes the
displacement constraint linear and lets the DP oracle work on the same class.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Union

import numpy as np

from .costs import CostField, eval_cost, eval_cost_batch
from .errors import DegenerateWindowError, MisuseError
from .extreal import INF, ExtReal

__all__ = [
    "Window",
    "Trajectory",
    "AdmissibleSpec",
    "InterestRates",
    "build_trajectory",
    "average_transaction",
    "cumulated_cost",
    "enrichment",
    "interest_rates",
    "refine_trajectory",
    "trajectory_to_csv",
]


@dataclass(frozen=True)
class Window:
    """The temporal window [T - omega, T]; zero aperture denotes an instant."""

    T: float
    omega: float

    def __post_init__(self):
        if self.omega < 0:
            raise MisuseError(f"aperture must be nonnegative, got {self.omega}")

    @property
    def start(self) -> float:
        return self.T - self.omega


@dataclass(frozen=True)
class Trajectory:
    """Uniform-grid evolution stored terminal-anchored (built backward from x(T))."""

    window: Window
    terminal_state: np.ndarray   # (l,)
    velocities: np.ndarray       # (N, l), constant on each subinterval

    @property
    def n_steps(self) -> int:
        return len(self.velocities)

    @property
    def dim(self) -> int:
        return len(self.terminal_state)

    @property
    def dt(self) -> float:
        return self.window.omega / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return self.window.start + self.dt * np.arange(self.n_steps + 1)

    @property
    def states(self) -> np.ndarray:
        """Node states (N+1, l): x_k = x_{k+1} - u_k * dt, backward from x(T)."""
        tail = np.cumsum(self.velocities[::-1], axis=0)[::-1] * self.dt
        out = np.empty((self.n_steps + 1, self.dim))
        out[-1] = self.terminal_state
        out[:-1] = self.terminal_state - tail
        return out

    def start_state(self) -> np.ndarray:
        return self.terminal_state - self.dt * self.velocities.sum(axis=0)

    @property
    def mid_times(self) -> np.ndarray:
        return self.window.start + self.dt * (np.arange(self.n_steps) + 0.5)

    @property
    def mid_states(self) -> np.ndarray:
        s = self.states
        return 0.5 * (s[:-1] + s[1:])


def build_trajectory(window: Window, terminal_state, velocities) -> Trajectory:
    terminal_state = np.atleast_1d(np.asarray(terminal_state, dtype=float))
    velocities = np.asarray(velocities, dtype=float)
    if velocities.ndim == 1:
        velocities = velocities[:, None]
    if len(velocities) == 0:
        raise MisuseError("a trajectory needs at least one velocity step")
    if velocities.shape[1] != len(terminal_state):
        raise MisuseError(
            f"velocity dimension {velocities.shape[1]} != state dimension {len(terminal_state)}"
        )
    if window.omega == 0:
        raise DegenerateWindowError("zero-aperture window cannot carry velocity steps")
    return Trajectory(window=window, terminal_state=terminal_state, velocities=velocities)


@dataclass(frozen=True)
class AdmissibleSpec:
    """Velocity-norm bound (possibly time-varying) plus an optional cost domain."""

    velocity_bound: Union[float, Callable[[float], float]]
    domain_cost: Optional[CostField] = None

    def bound_at(self, t: float) -> float:
        b = self.velocity_bound
        return float(b(t)) if callable(b) else float(b)

    def is_admissible(self, traj: Trajectory) -> bool:
        for t, x, u in zip(traj.mid_times, traj.mid_states, traj.velocities):
            if np.linalg.norm(u) > self.bound_at(float(t)) + 1e-12:
                return False
            if self.domain_cost is not None and not eval_cost(
                self.domain_cost, float(t), x, u
            ).is_finite:
                return False
        return True


def average_transaction(traj: Trajectory) -> np.ndarray:
    """(x(T) - x(T - omega)) / omega, the mean velocity over the window."""
    if traj.window.omega == 0:
        raise DegenerateWindowError("average transaction undefined on a zero aperture")
    return (traj.terminal_state - traj.start_state()) / traj.window.omega


def cumulated_cost(traj: Trajectory, cost: CostField) -> ExtReal:
    """Midpoint quadrature of the running cost l(t, x(t), x'(t)) over the window."""
    vals = eval_cost_batch(cost, traj.mid_times, traj.mid_states, traj.velocities)
    if np.isinf(vals).any():
        return INF
    return ExtReal(traj.dt * float(vals.sum()))


def enrichment(v_start: float, v_end: float, omega: float) -> float:
    """Profit-to-duration ratio (V(T) - V(T - omega)) / omega."""
    if omega <= 0:
        raise MisuseError(f"enrichment needs a positive aperture, got {omega}")
    return (v_end - v_start) / omega


class InterestRates(NamedTuple):
    forward: Optional[float]
    backward: Optional[float]
    symmetric: Optional[float]


def interest_rates(v_start: float, v_end: float, omega: float) -> InterestRates:
    """Forward, backward and symmetric interest rates of the window's profit.

    A rate whose denominator is zero (or, for the symmetric rate, whose
    geometric mean is undefined) is reported as None, not a global failure.
    """
    if omega <= 0:
        raise MisuseError(f"interest rates need a positive aperture, got {omega}")
    profit = v_end - v_start
    forward = profit / (omega * v_start) if v_start != 0 else None
    backward = profit / (omega * v_end) if v_end != 0 else None
    symmetric = (
        profit / (omega * math.sqrt(v_start * v_end)) if v_start * v_end > 0 else None
    )
    return InterestRates(forward, backward, symmetric)


def refine_trajectory(traj: Trajectory) -> Trajectory:
    """Double N by splitting each velocity step into two equal halves."""
    return Trajectory(
        window=traj.window,
        terminal_state=traj.terminal_state,
        velocities=np.repeat(traj.velocities, 2, axis=0),
    )


def trajectory_to_csv(traj: Trajectory, path) -> None:
    """Write t, x_1..x_l, u_1..u_l rows; velocities left-aligned with step start."""
    ell = traj.dim
    states = traj.states
    times = traj.times
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["t"] + [f"x_{h + 1}" for h in range(ell)] + [f"u_{h + 1}" for h in range(ell)]
        )
        for k in range(traj.n_steps + 1):
            u = traj.velocities[k] if k < traj.n_steps else np.full(ell, np.nan)
            writer.writerow(
                [repr(float(times[k]))]
                + [repr(float(v)) for v in states[k]]
                + ["" if np.isnan(w) else repr(float(w)) for w in u]
            )
