"""Transaction-cost fields, terminal costs, conjugation and growth checks.

A :class:`CostField` wraps an evaluator ``l(t, x, u)`` together with the flags
the solvers rely on (velocity-only, declared convexity) and an optional
per-coordinate velocity box outside of which the cost is +infinity.  Conjugates
are computed by exhaustive maximization over a velocity lattice; at desk-scale
dimensions this is cheap and unconditionally correct.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import EmptyDomainError, EvaluationFault, MisuseError
from .extreal import INF, ExtReal

__all__ = [
    "CostField",
    "TerminalCost",
    "ConjugateTable",
    "MarchaudReport",
    "eval_cost",
    "eval_cost_batch",
    "eval_terminal",
    "legendre_fenchel",
    "build_conjugate_table",
    "subdifferential_check",
    "check_marchaud",
    "make_cost",
    "make_terminal",
]


def _as_vec(x) -> np.ndarray:
    a = np.atleast_1d(np.asarray(x, dtype=float))
    return a


@dataclass(frozen=True)
class CostField:
    """Evaluatable transaction-cost function l(t, x, u) with metadata.

    ``evaluator`` returns a float or ExtReal; ``batch_evaluator``, when
    present, takes arrays ``(t (m,), X (m, l), U (m, l))`` and returns a float
    array where +infinity is IEEE inf (internal fast path only; the scalar API
    always speaks ExtReal).
    """

    evaluator: Callable
    velocity_only: bool = False
    declared_convex_in_u: bool = False
    domain_box: Optional[np.ndarray] = None  # shape (l, 2) velocity bounds
    batch_evaluator: Optional[Callable] = None

    def in_domain_box(self, u: np.ndarray) -> bool:
        if self.domain_box is None:
            return True
        box = np.asarray(self.domain_box, dtype=float)
        return bool(np.all(u >= box[:, 0]) and np.all(u <= box[:, 1]))


@dataclass(frozen=True)
class TerminalCost:
    """Instantaneous cost condition c(t, x); finiteness defines the departure tube."""

    evaluator: Callable
    batch_evaluator: Optional[Callable] = None

    def in_departure_tube(self, t: float, x) -> bool:
        return eval_terminal(self, t, x).is_finite


def eval_cost(cost: CostField, t: float, x, u) -> ExtReal:
    """Evaluate l(t, x, u); +infinity outside the domain box, NaN is a fault."""
    x = _as_vec(x)
    u = _as_vec(u)
    if not cost.in_domain_box(u):
        return INF
    raw = cost.evaluator(t, x, u)
    raw = raw.to_float() if isinstance(raw, ExtReal) else float(raw)
    if math.isnan(raw):
        raise EvaluationFault(f"cost evaluator returned NaN at t={t}, x={x}, u={u}")
    return ExtReal(raw)


def eval_cost_batch(cost: CostField, t: np.ndarray, X: np.ndarray, U: np.ndarray) -> np.ndarray:
    """Vectorized cost evaluation; returns a float array using IEEE inf.

    Falls back to a scalar loop when the field carries no batch evaluator.
    """
    t = np.asarray(t, dtype=float)
    X = np.asarray(X, dtype=float)
    U = np.asarray(U, dtype=float)
    if cost.batch_evaluator is not None:
        vals = np.asarray(cost.batch_evaluator(t, X, U), dtype=float)
    else:
        vals = np.empty(len(U), dtype=float)
        for i in range(len(U)):
            vals[i] = eval_cost(cost, float(t[i]), X[i], U[i]).to_float()
    if cost.domain_box is not None:
        box = np.asarray(cost.domain_box, dtype=float)
        outside = np.any((U < box[:, 0]) | (U > box[:, 1]), axis=1)
        vals = np.where(outside, np.inf, vals)
    if np.isnan(vals).any():
        i = int(np.flatnonzero(np.isnan(vals))[0])
        raise EvaluationFault(
            f"cost evaluator returned NaN at t={t[i]}, x={X[i]}, u={U[i]}"
        )
    return vals


def eval_terminal(term: TerminalCost, t: float, x) -> ExtReal:
    x = _as_vec(x)
    raw = term.evaluator(t, x)
    raw = raw.to_float() if isinstance(raw, ExtReal) else float(raw)
    if math.isnan(raw):
        raise EvaluationFault(f"terminal evaluator returned NaN at t={t}, x={x}")
    return ExtReal(raw)


def eval_terminal_batch(term: TerminalCost, t: float, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if term.batch_evaluator is not None:
        vals = np.asarray(term.batch_evaluator(t, X), dtype=float)
    else:
        vals = np.array([eval_terminal(term, t, X[i]).to_float() for i in range(len(X))])
    if np.isnan(vals).any():
        raise EvaluationFault(f"terminal evaluator returned NaN at t={t}")
    return vals


# ---------------------------------------------------------------------------
# Legendre-Fenchel conjugation
# ---------------------------------------------------------------------------

def _grid_2d(velocity_grid) -> np.ndarray:
    g = np.asarray(velocity_grid, dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    return g


def legendre_fenchel(cost: CostField, t: float, x, p, velocity_grid) -> ExtReal:
    """Conjugate l*(t, x, p) = sup_u (<p,u> - l(t,x,u)) over a velocity lattice.

    A lower bound on the true supremum, converging under grid refinement.
    Raises :class:`EmptyDomainError` when every grid point has infinite cost.
    """
    grid = _grid_2d(velocity_grid)
    if grid.size == 0:
        raise MisuseError("legendre_fenchel needs a non-empty velocity grid")
    x = _as_vec(x)
    p = _as_vec(p)
    m = len(grid)
    lvals = eval_cost_batch(cost, np.full(m, float(t)), np.broadcast_to(x, (m, len(x))), grid)
    finite = np.isfinite(lvals)
    if not finite.any():
        raise EmptyDomainError(
            f"all velocity-grid points have infinite cost at t={t}, x={x}"
        )
    scores = grid[finite] @ p - lvals[finite]
    return ExtReal(float(scores.max()))


@dataclass(frozen=True)
class ConjugateTable:
    """Sampled slice p -> l*(t, x, p) at a fixed base point."""

    dual_grid: np.ndarray          # (m,) or (m, l)
    values: np.ndarray             # (m,)
    base_point: tuple              # (t, x)

    def midpoint_convexity_defect(self) -> float:
        """Largest violation of discrete midpoint convexity along the grid (1-D)."""
        v = self.values
        if len(v) < 3:
            return 0.0
        return float(np.max(v[1:-1] - 0.5 * (v[:-2] + v[2:]), initial=0.0))


def build_conjugate_table(cost: CostField, t: float, x, dual_grid, velocity_grid) -> ConjugateTable:
    dual = np.asarray(dual_grid, dtype=float)
    duals = dual if dual.ndim > 1 else dual[:, None]
    vals = np.array(
        [legendre_fenchel(cost, t, x, p, velocity_grid).to_float() for p in duals]
    )
    return ConjugateTable(dual_grid=dual, values=vals, base_point=(float(t), _as_vec(x)))


def subdifferential_check(cost: CostField, t: float, x, u, p, grid, tol: float) -> bool:
    """True iff <p,u> = l(t,x,u) + l*(t,x,p) within tol (p in the subdifferential at u)."""
    u = _as_vec(u)
    p = _as_vec(p)
    if not cost.in_domain_box(u):
        raise MisuseError("subdifferential_check requires u inside the domain box")
    lv = eval_cost(cost, t, x, u)
    conj = legendre_fenchel(cost, t, x, p, grid)
    if not (lv.is_finite and conj.is_finite):
        return False
    return abs(float(p @ u) - lv.value - conj.value) <= tol


# ---------------------------------------------------------------------------
# Marchaud growth/convexity sampling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MarchaudViolation:
    kind: str          # "domain-growth" | "nonnegativity" | "upper-bound" | "midpoint-convexity"
    t: float
    x: np.ndarray
    u: Optional[np.ndarray]
    detail: str


@dataclass(frozen=True)
class MarchaudReport:
    violations: list = field(default_factory=list)
    n_samples: int = 0

    @property
    def consistent(self) -> bool:
        return not self.violations

    def kinds(self) -> set:
        return {v.kind for v in self.violations}


def check_marchaud(
    cost: CostField,
    c_const: float,
    t_range: tuple,
    x_box,
    n_samples: int,
    rng=None,
    convexity_tol: float = 1e-9,
) -> MarchaudReport:
    """Sample-check the linear-growth and convexity conditions of a Marchaud cost.

    Checks, at each sampled base point (t, x) with R = c(|t| + ||x|| + 1):
    the domain box sits inside the R-ball, values are nonnegative and bounded
    by R on the domain, and midpoint convexity in u holds at sampled pairs.
    """
    if n_samples < 1:
        raise MisuseError("check_marchaud needs n_samples >= 1")
    if c_const <= 0:
        raise MisuseError("check_marchaud needs a positive growth constant")
    rng = np.random.default_rng(rng)
    x_box = np.asarray(x_box, dtype=float).reshape(-1, 2)
    ell = len(x_box)
    violations = []
    for _ in range(n_samples):
        t = float(rng.uniform(*t_range))
        x = rng.uniform(x_box[:, 0], x_box[:, 1])
        radius = c_const * (np.linalg.norm(x) + abs(t) + 1.0)
        if cost.domain_box is None:
            violations.append(
                MarchaudViolation("domain-growth", t, x, None, "unbounded velocity domain")
            )
            # sample inside the ball anyway so value checks still run
            lo, hi = -radius * np.ones(ell), radius * np.ones(ell)
        else:
            box = np.asarray(cost.domain_box, dtype=float)
            corner = np.max(np.abs(box), axis=1)
            if np.linalg.norm(corner) > radius + 1e-12:
                violations.append(
                    MarchaudViolation(
                        "domain-growth", t, x, None,
                        f"domain box corner norm {np.linalg.norm(corner):.3g} exceeds {radius:.3g}",
                    )
                )
            lo, hi = box[:, 0], box[:, 1]
        us = rng.uniform(lo, hi, size=(8, ell))
        finite_us = []
        for u in us:
            lv = eval_cost(cost, t, x, u)
            if not lv.is_finite:
                continue
            finite_us.append((u, lv.value))
            if lv.value < -1e-12:
                violations.append(
                    MarchaudViolation("nonnegativity", t, x, u, f"l = {lv.value:.3g} < 0")
                )
            if lv.value > radius + 1e-9:
                violations.append(
                    MarchaudViolation(
                        "upper-bound", t, x, u, f"l = {lv.value:.3g} exceeds {radius:.3g}"
                    )
                )
        for i in range(len(finite_us) - 1):
            (u1, v1), (u2, v2) = finite_us[i], finite_us[i + 1]
            mid = eval_cost(cost, t, x, 0.5 * (u1 + u2))
            if mid.is_finite and mid.value > 0.5 * (v1 + v2) + convexity_tol:
                violations.append(
                    MarchaudViolation(
                        "midpoint-convexity", t, x, 0.5 * (u1 + u2),
                        f"l(mid) = {mid.value:.3g} > {(0.5 * (v1 + v2)):.3g}",
                    )
                )
    return MarchaudReport(violations=violations, n_samples=n_samples)


# ---------------------------------------------------------------------------
# Built-in catalogs (addressable by name in scenario configs)
# ---------------------------------------------------------------------------

def _boxify(domain) -> Optional[np.ndarray]:
    if domain is None:
        return None
    return np.asarray(domain, dtype=float).reshape(-1, 2)


def make_cost(name: str, **params) -> CostField:
    """Resolve a named transaction-cost function.

    Catalog: "quadratic" (a*|u|^2, a defaults to 1/2), "abs" (sum |u_h|),
    "weighted_quadratic" ((a0 + a1*t)*|u|^2/2), "indicator_zero".
    Every entry accepts an optional ``domain`` velocity box.
    """
    domain = _boxify(params.pop("domain", None))
    if name == "quadratic":
        a = float(params.pop("a", 0.5))
        _reject_extras(name, params)
        return CostField(
            evaluator=lambda t, x, u: a * float(u @ u),
            velocity_only=True,
            declared_convex_in_u=a >= 0,
            domain_box=domain,
            batch_evaluator=lambda t, X, U: a * np.sum(U * U, axis=1),
        )
    if name == "abs":
        _reject_extras(name, params)
        return CostField(
            evaluator=lambda t, x, u: float(np.sum(np.abs(u))),
            velocity_only=True,
            declared_convex_in_u=True,
            domain_box=domain,
            batch_evaluator=lambda t, X, U: np.sum(np.abs(U), axis=1),
        )
    if name == "weighted_quadratic":
        a0 = float(params.pop("a0", 1.0))
        a1 = float(params.pop("a1", 1.0))
        _reject_extras(name, params)
        return CostField(
            evaluator=lambda t, x, u: (a0 + a1 * t) * float(u @ u) / 2.0,
            velocity_only=False,
            declared_convex_in_u=True,
            domain_box=domain,
            batch_evaluator=lambda t, X, U: (a0 + a1 * t) * np.sum(U * U, axis=1) / 2.0,
        )
    if name == "indicator_zero":
        tol = float(params.pop("tol", 1e-12))
        _reject_extras(name, params)
        return CostField(
            evaluator=lambda t, x, u: 0.0 if np.all(np.abs(u) <= tol) else math.inf,
            velocity_only=True,
            declared_convex_in_u=True,
            domain_box=domain,
            batch_evaluator=lambda t, X, U: np.where(
                np.all(np.abs(U) <= tol, axis=1), 0.0, np.inf
            ),
        )
    raise MisuseError(f"unknown cost {name!r}")


def make_terminal(name: str, **params) -> TerminalCost:
    """Resolve a named instantaneous cost condition.

    Catalog: "indicator_origin" (0 at (t0, x0), +inf elsewhere),
    "quadratic_state" (a*||x - x0||^2, time-independent), "zero".
    """
    if name == "indicator_origin":
        t0 = float(params.pop("t0", 0.0))
        x0 = params.pop("x0", 0.0)
        tol = float(params.pop("tol", 1e-9))
        _reject_extras(name, params)
        x0v = _as_vec(x0)

        def _ind(t, x):
            return 0.0 if abs(t - t0) <= tol and np.all(np.abs(x - x0v) <= tol) else math.inf

        return TerminalCost(
            evaluator=_ind,
            batch_evaluator=lambda t, X: np.where(
                (abs(t - t0) <= tol) & np.all(np.abs(X - x0v) <= tol, axis=1), 0.0, np.inf
            ),
        )
    if name == "quadratic_state":
        a = float(params.pop("a", 1.0))
        x0 = params.pop("x0", 0.0)
        _reject_extras(name, params)
        x0v = _as_vec(x0)
        return TerminalCost(
            evaluator=lambda t, x: a * float((x - x0v) @ (x - x0v)),
            batch_evaluator=lambda t, X: a * np.sum((X - x0v) ** 2, axis=1),
        )
    if name == "zero":
        _reject_extras(name, params)
        return TerminalCost(
            evaluator=lambda t, x: 0.0,
            batch_evaluator=lambda t, X: np.zeros(len(X)),
        )
    raise MisuseError(f"unknown terminal cost {name!r}")


def _reject_extras(name: str, params: dict) -> None:
    if params:
        raise MisuseError(f"unknown parameters for {name!r}: {sorted(params)}")
