import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from laxhopf import (
    CostField,
    build_conjugate_table,
    check_marchaud,
    eval_cost,
    legendre_fenchel,
    make_cost,
    make_terminal,
    subdifferential_check,
)
from laxhopf.costs import eval_terminal
from laxhopf.errors import EmptyDomainError, EvaluationFault, MisuseError

QUAD = make_cost("quadratic")                 # |u|^2 / 2
ABS = make_cost("abs")
WQ = make_cost("weighted_quadratic", a0=1.0, a1=1.0)
GRID = np.linspace(-10, 10, 2001)


class TestEvalCost:
    def test_quadratic_direct(self):
        assert eval_cost(QUAD, 0.0, 0.0, 2.0).value == 2.0

    def test_domain_box_infinity(self):
        boxed = make_cost("quadratic", domain=[[-1, 1]])
        assert not eval_cost(boxed, 0.0, 0.0, 2.0).is_finite

    def test_time_dependent(self):
        assert eval_cost(WQ, 1.0, 0.0, 1.0).value == 1.0

    def test_nan_is_a_fault(self):
        bad = CostField(evaluator=lambda t, x, u: math.nan)
        with pytest.raises(EvaluationFault, match="t="):
            eval_cost(bad, 0.5, 0.25, 1.0)


class TestLegendreFenchel:
    def test_quadratic_conjugate(self):
        # l = u^2/2 has l*(p) = p^2/2
        v = legendre_fenchel(QUAD, 0.0, 0.0, 3.0, np.arange(-10, 10.001, 0.01))
        assert abs(v.value - 4.5) <= 0.01

    def test_abs_conjugate_inside_unit_ball(self):
        v = legendre_fenchel(ABS, 0.0, 0.0, 0.5, np.linspace(-5, 5, 1001))
        assert abs(v.value) <= 1e-9

    def test_indicator_conjugate(self):
        ind = make_cost("indicator_zero")
        grid = np.linspace(-1, 1, 201)  # contains exactly 0
        for p in (-3.0, 0.0, 7.5):
            assert legendre_fenchel(ind, 0.0, 0.0, p, grid).value == 0.0

    def test_empty_effective_domain(self):
        ind = make_cost("indicator_zero")
        with pytest.raises(EmptyDomainError):
            legendre_fenchel(ind, 0.0, 0.0, 1.0, np.array([1.0, 2.0]))

    def test_empty_grid_is_misuse(self):
        with pytest.raises(MisuseError):
            legendre_fenchel(QUAD, 0.0, 0.0, 1.0, np.array([]))


class TestCheckMarchaud:
    def test_truncated_quadratic_consistent(self):
        K = 1.0
        trunc = CostField(
            evaluator=lambda t, x, u: min(float(u @ u), K),
            velocity_only=True,
            declared_convex_in_u=False,
            domain_box=np.array([[-1.0, 1.0]]),
        )
        report = check_marchaud(trunc, c_const=K + 2, t_range=(-1, 1),
                                x_box=[[-1, 1]], n_samples=40, rng=0)
        assert report.consistent

    def test_unbounded_domain_violation(self):
        report = check_marchaud(QUAD, c_const=100.0, t_range=(-1, 1),
                                x_box=[[-1, 1]], n_samples=5, rng=0)
        assert "domain-growth" in report.kinds()

    def test_negative_cost_violation(self):
        neg = CostField(
            evaluator=lambda t, x, u: -1.0,
            domain_box=np.array([[-1.0, 1.0]]),
        )
        report = check_marchaud(neg, c_const=10.0, t_range=(-1, 1),
                                x_box=[[-1, 1]], n_samples=5, rng=0)
        assert "nonnegativity" in report.kinds()


class TestSubdifferential:
    def test_gradient_pair(self):
        assert subdifferential_check(QUAD, 0.0, 0.0, 2.0, 2.0, GRID, tol=1e-4)

    def test_non_gradient_pair(self):
        assert not subdifferential_check(QUAD, 0.0, 0.0, 2.0, 1.0, GRID, tol=1e-4)

    def test_abs_subdifferential_at_zero(self):
        assert subdifferential_check(ABS, 0.0, 0.0, 0.0, 0.7, GRID, tol=1e-6)


class TestConjugateTable:
    def test_convex_in_p(self):
        table = build_conjugate_table(QUAD, 0.0, 0.0, np.linspace(-3, 3, 31), GRID)
        assert table.midpoint_convexity_defect() <= 1e-9

    def test_biconjugation_recovers_quadratic(self):
        # l** = l for declared-convex velocity-only costs, at grid scale
        dual = np.linspace(-6, 6, 601)
        table = build_conjugate_table(QUAD, 0.0, 0.0, dual, GRID)
        h = GRID[1] - GRID[0]
        for u in (-1.5, 0.0, 0.5, 2.0):
            bi = max(p * u - v for p, v in zip(dual, table.values))
            assert abs(bi - 0.5 * u * u) <= 2 * h + 1e-6


@settings(max_examples=50, deadline=None)
@given(
    u=st.floats(-3, 3),
    p=st.floats(-3, 3),
    t=st.floats(0, 1),
)
def test_fenchel_young_inequality(u, p, t):
    for cost in (QUAD, ABS, WQ):
        lv = eval_cost(cost, t, 0.0, u).value
        conj = legendre_fenchel(cost, t, 0.0, p, GRID).value
        # the grid conjugate lower-bounds l*, so allow the lattice quantization
        assert lv + conj >= p * u - 1e-4


class TestCatalogs:
    def test_unknown_cost(self):
        with pytest.raises(MisuseError):
            make_cost("cubical")

    def test_unknown_terminal(self):
        with pytest.raises(MisuseError):
            make_terminal("cubical")

    def test_unknown_params_rejected(self):
        with pytest.raises(MisuseError):
            make_cost("quadratic", b=3)

    def test_indicator_origin(self):
        term = make_terminal("indicator_origin")
        assert eval_terminal(term, 0.0, 0.0).value == 0.0
        assert not eval_terminal(term, 0.0, 0.5).is_finite
        assert not eval_terminal(term, 0.5, 0.0).is_finite

    def test_quadratic_state(self):
        term = make_terminal("quadratic_state")
        assert eval_terminal(term, 3.0, 2.0).value == 4.0

    def test_departure_tube(self):
        term = make_terminal("indicator_origin")
        assert term.in_departure_tube(0.0, 0.0)
        assert not term.in_departure_tube(1.0, 0.0)
