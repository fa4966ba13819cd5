"""Dynamic economy: allocations, prices, patrimonial value and impetus costs.

The economic value function is the generalized Lax-Hopf reduction run on the
doubled state (allocations, prices) with the impetus cost as running cost: a
convex scalar cost of the impetus, finite only while every agent's transaction
speed and every price fluctuation stay within their bounds.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .costs import CostField, TerminalCost
from .errors import MisuseError
from .extreal import INF, ExtReal
from .laxhopf_core import OuterGrid, ValueResult, generalized_lax_hopf, optimum_certificate
from .moderation import SolverConfig

__all__ = [
    "EconomyState",
    "ImpetusCostSpec",
    "patrimonial_value",
    "impetus",
    "impact_of_price_fluctuation",
    "impetus_cost",
    "impetus_cost_field",
    "pack_economy",
    "unpack_economy",
    "economic_value",
    "economy_enrichment_certificate",
]


@dataclass(frozen=True)
class EconomyState:
    """Allocations and prices for n agents over an l-dimensional commodity space."""

    allocations: np.ndarray   # (n, l)
    prices: np.ndarray        # (n, l)

    def __post_init__(self):
        a = np.asarray(self.allocations, dtype=float)
        p = np.asarray(self.prices, dtype=float)
        if a.ndim != 2 or p.shape != a.shape:
            raise MisuseError(
                f"allocations {a.shape} and prices {p.shape} must share (n_agents, dim)"
            )
        object.__setattr__(self, "allocations", a)
        object.__setattr__(self, "prices", p)

    @property
    def n_agents(self) -> int:
        return self.allocations.shape[0]

    @property
    def dim(self) -> int:
        return self.allocations.shape[1]


def patrimonial_value(state: EconomyState) -> float:
    """Total value of the agents' allocations at current prices."""
    return float(np.sum(state.prices * state.allocations))


def impetus(state: EconomyState, x_dot, p_dot) -> float:
    """Time derivative of the patrimonial value along an evolution:
    sum_i (<p_i, x_i'> + <p_i', x_i>)."""
    x_dot = np.asarray(x_dot, dtype=float)
    p_dot = np.asarray(p_dot, dtype=float)
    if x_dot.shape != state.allocations.shape or p_dot.shape != state.prices.shape:
        raise MisuseError("velocity shapes must match the economy state")
    return float(np.sum(state.prices * x_dot) + np.sum(p_dot * state.allocations))


def impact_of_price_fluctuation(p_prime, x) -> float:
    """Inner product <p', x> of a price fluctuation with a commodity."""
    p_prime = np.atleast_1d(np.asarray(p_prime, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if p_prime.shape != x.shape:
        raise MisuseError(f"shape mismatch {p_prime.shape} vs {x.shape}")
    return float(p_prime @ x)


def _bound_at(bound: Union[float, Callable], t: float) -> float:
    return float(bound(t)) if callable(bound) else float(bound)


@dataclass(frozen=True)
class ImpetusCostSpec:
    """Convex scalar cost of the impetus plus speed bounds on prices and transactions."""

    scalar_cost: Callable[[float], float]
    gamma_price: Union[float, Callable]            # bound on each price fluctuation norm
    gamma_agents: tuple                            # per-agent bounds on transaction norms
    shared_prices: bool = False                    # all agents quote one common price


def impetus_cost(spec: ImpetusCostSpec, t: float, state: EconomyState,
                 x_dot, p_dot) -> ExtReal:
    """scalar_cost(impetus) while every velocity-norm bound holds at t, else +infinity."""
    x_dot = np.asarray(x_dot, dtype=float)
    p_dot = np.asarray(p_dot, dtype=float)
    if len(spec.gamma_agents) != state.n_agents:
        raise MisuseError("one transaction bound per agent is required")
    for i in range(state.n_agents):
        if np.linalg.norm(x_dot[i]) > _bound_at(spec.gamma_agents[i], t) + 1e-12:
            return INF
    g0 = _bound_at(spec.gamma_price, t)
    rows = p_dot[:1] if spec.shared_prices else p_dot
    for row in rows:
        if np.linalg.norm(row) > g0 + 1e-12:
            return INF
    e = impetus(state, x_dot, p_dot)
    return ExtReal(float(spec.scalar_cost(e)))


def pack_economy(allocations, prices) -> np.ndarray:
    """Flatten (allocations, prices) into the doubled-state vector."""
    a = np.asarray(allocations, dtype=float)
    p = np.asarray(prices, dtype=float)
    return np.concatenate([a.ravel(), p.ravel()])


def unpack_economy(z: np.ndarray, n_agents: int, dim: int) -> EconomyState:
    z = np.asarray(z, dtype=float)
    half = n_agents * dim
    return EconomyState(
        allocations=z[:half].reshape(n_agents, dim),
        prices=z[half:].reshape(n_agents, dim),
    )


def impetus_cost_field(spec: ImpetusCostSpec, n_agents: int, dim: int) -> CostField:
    """Impetus cost as a CostField over the packed (allocations, prices) state."""
    half = n_agents * dim

    def scalar(t, z, z_dot):
        state = unpack_economy(z, n_agents, dim)
        return impetus_cost(
            spec, float(t), state,
            z_dot[:half].reshape(n_agents, dim),
            z_dot[half:].reshape(n_agents, dim),
        ).to_float()

    def batch(t, Z, Zd):
        m = len(Z)
        X = Z[:, :half].reshape(m, n_agents, dim)
        P = Z[:, half:].reshape(m, n_agents, dim)
        Xd = Zd[:, :half].reshape(m, n_agents, dim)
        Pd = Zd[:, half:].reshape(m, n_agents, dim)
        e = np.sum(P * Xd, axis=(1, 2)) + np.sum(Pd * X, axis=(1, 2))
        vals = np.array([float(spec.scalar_cost(v)) for v in e])
        t = np.broadcast_to(np.asarray(t, dtype=float), (m,))
        xa_bounds = np.stack(
            [[_bound_at(spec.gamma_agents[i], float(tv)) for i in range(n_agents)] for tv in t]
        )
        bad = np.any(np.linalg.norm(Xd, axis=2) > xa_bounds + 1e-12, axis=1)
        g0 = np.array([_bound_at(spec.gamma_price, float(tv)) for tv in t])
        p_rows = Pd[:, :1] if spec.shared_prices else Pd
        bad |= np.any(np.linalg.norm(p_rows, axis=2) > g0[:, None] + 1e-12, axis=1)
        return np.where(bad, np.inf, vals)

    return CostField(
        evaluator=scalar,
        velocity_only=False,
        declared_convex_in_u=False,
        domain_box=None,
        batch_evaluator=batch,
    )


def economic_value(terminal: TerminalCost, spec: ImpetusCostSpec, T: float,
                   allocations, prices, grid: OuterGrid, cfg: SolverConfig) -> ValueResult:
    """Economic value function on the doubled state via the generalized reduction.

    ``terminal`` is a cost over (t, packed state); the grid's upsilon lattice
    spans both the transaction and the price-fluctuation directions.
    """
    a = np.asarray(allocations, dtype=float)
    if a.ndim != 2:
        raise MisuseError("allocations must have shape (n_agents, dim)")
    n_agents, dim = a.shape
    z = pack_economy(a, prices)
    cost = impetus_cost_field(spec, n_agents, dim)
    if grid.normalized().upsilon_lattice.shape[1] != len(z):
        raise MisuseError(
            f"upsilon lattice dimension must be {len(z)} (doubled state), "
            f"got {grid.normalized().upsilon_lattice.shape[1]}"
        )
    return generalized_lax_hopf(terminal, cost, T, z, grid, cfg)


def economy_enrichment_certificate(result: ValueResult, terminal: TerminalCost) -> Optional[float]:
    """|(W(T) - W(T - omega*)) / omega* - Lambda*| at the optimal evolution."""
    if result.omega_star is None or result.omega_star == 0:
        return None
    if result.moderation_lambda is None:
        raise MisuseError("certificate needs the moderated impetus value")
    return optimum_certificate(result, terminal, result.moderation_lambda)
