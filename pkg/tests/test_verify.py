import math

import numpy as np
import pytest

from laxhopf import (
    DPGrids,
    OuterGrid,
    Scenario,
    SolverConfig,
    convergence_study,
    dp_oracle,
    hj_residual,
    jensen_suite,
    make_cost,
    make_terminal,
    surface_to_csv,
)
from laxhopf.costs import CostField
from laxhopf.errors import CommensurabilityError, MisuseError

QUAD = make_cost("quadratic")          # u^2/2
QUAD1 = make_cost("quadratic", a=1.0)  # u^2
WQ = make_cost("weighted_quadratic", a0=1.0, a1=1.0)
IND = make_terminal("indicator_origin")
QTERM = make_terminal("quadratic_state")


def grids(n_t=50, state_step=0.002, velocity_step=0.1, box=2.0):
    return DPGrids.build(0.0, 1.0, n_t, [[-box, box]], state_step,
                         [[-box, box]], velocity_step)


class TestDPGrids:
    def test_commensurability_violation(self):
        with pytest.raises(CommensurabilityError):
            DPGrids.build(0.0, 1.0, 50, [[-2, 2]], 0.03, [[-2, 2]], 0.1)

    def test_commensurable_ok(self):
        g = grids()
        assert g.dt == pytest.approx(0.02)

    def test_dimension_mismatch(self):
        with pytest.raises(MisuseError):
            DPGrids(0.0, 1.0, 10, (np.linspace(-1, 1, 11),), ())


class TestDpOracle:
    def test_quadratic_benchmark(self):
        surface = dp_oracle(QTERM, QUAD1, grids())
        v = surface.value_near(1.0, 1.0)
        assert v.value == pytest.approx(0.5, abs=0.02)

    def test_indicator_benchmark(self):
        surface = dp_oracle(IND, QUAD, grids())
        v = surface.value_near(1.0, 1.0)
        assert v.value == pytest.approx(0.5, abs=0.02)

    def test_free_transport(self):
        zero_l = make_cost("quadratic", a=0.0)
        surface = dp_oracle(QTERM, zero_l, grids(n_t=10, state_step=0.01))
        assert surface.value_near(1.0, 1.0).value == pytest.approx(0.0, abs=1e-9)

    def test_obstacle_invariant(self):
        surface = dp_oracle(QTERM, QUAD1, grids(n_t=10, state_step=0.01, box=1.0))
        assert surface.obstacle_defect(QTERM) <= 1e-12

    def test_monotone_in_cost(self):
        g = grids(n_t=10, state_step=0.01, box=1.0)
        lo = dp_oracle(QTERM, QUAD, g)          # u^2/2
        hi = dp_oracle(QTERM, QUAD1, g)         # u^2
        assert np.all(hi.values >= lo.values - 1e-12)


DUAL_GRID = np.linspace(-8, 8, 3201)


class TestHjResidual:
    def test_analytic_hopf_lax_surface(self):
        surf = lambda t, y: float(y @ y) / (2.0 * t)
        r = hj_residual(surf, QUAD, (1.0, 1.0), DUAL_GRID, step=1e-3)
        assert abs(r) <= 1e-3

    def test_constant_surface(self):
        surf = lambda t, y: 7.0
        r = hj_residual(surf, QUAD, (1.0, 1.0), DUAL_GRID, step=1e-3)
        assert abs(r) <= 1e-9

    def test_linear_surface_detects_non_solution(self):
        p = 1.5
        surf = lambda t, y: p * float(y[0])
        r = hj_residual(surf, QUAD, (1.0, 1.0), DUAL_GRID, step=1e-3)
        assert r == pytest.approx(p * p / 2.0, abs=1e-2)

    def test_grid_surface_stencil(self):
        surface = dp_oracle(QTERM, QUAD1, grids(n_t=20, state_step=0.005, box=1.0))
        j, idx = surface.nearest_node(0.5, 0.0)
        r = hj_residual(surface, QUAD1, (j, idx), DUAL_GRID)
        assert r is not None and math.isfinite(r)

    def test_infinite_stencil_marker(self):
        surface = dp_oracle(IND, QUAD, grids(n_t=10, state_step=0.01, box=1.0))
        # far corner stays unreachable: residual undefined there
        j, idx = surface.nearest_node(0.1, 0.9)
        assert hj_residual(surface, QUAD, (j, idx), DUAL_GRID) is None


class TestJensenSuite:
    def test_quadratic(self, fast_cfg):
        report = jensen_suite(QUAD, 20, (0.2, 2.0), [[-2, 2]], fast_cfg)
        assert report.consistent
        assert report.max_abs_gap <= 1e-6

    def test_abs(self, fast_cfg):
        report = jensen_suite(make_cost("abs"), 20, (0.2, 2.0), [[-2, 2]], fast_cfg)
        assert report.consistent
        assert report.max_abs_gap <= 1e-6

    def test_nonconvex_detected(self, fast_cfg):
        # two-well cost dishonestly declared convex: moderation undercuts l(0) = 1
        twowell = CostField(
            evaluator=lambda t, x, u: float(min((u[0] - 1) ** 2, (u[0] + 1) ** 2)),
            velocity_only=True,
            declared_convex_in_u=True,
        )
        report = jensen_suite(twowell, 8, (0.5, 1.5), [[-0.3, 0.3]], fast_cfg)
        assert report.nonconvex_evidence


class TestConvergenceStudy:
    def scenario(self):
        return Scenario(
            terminal=IND, cost=WQ, T=1.0, x=np.array([1.0]),
            outer_grid=OuterGrid.build(1.0, 8, [[-2, 2]], 21),
            solver_cfg=SolverConfig(n_steps=32, multi_starts=2, seed=0),
            reference=1.0 / (2.0 * math.log(2.0)),
        )

    def test_decreasing_errors(self):
        levels = [
            grids(n_t=10, state_step=0.01),
            grids(n_t=25, state_step=0.004),
            grids(n_t=50, state_step=0.002),
        ]
        rows = convergence_study(self.scenario(), levels)
        assert rows[-1].error <= rows[-2].error
        assert rows[-1].error <= 0.02 * abs(rows[-1].oracle_value)
        ref = 1.0 / (2.0 * math.log(2.0))
        assert abs(rows[-1].formula_value - ref) <= 2e-3

    def test_needs_two_levels(self):
        with pytest.raises(MisuseError):
            convergence_study(self.scenario(), [grids(n_t=10, state_step=0.01)])


def test_surface_csv(tmp_path):
    surface = dp_oracle(IND, QUAD, grids(n_t=5, state_step=0.02, box=0.5))
    path = tmp_path / "surface.csv"
    surface_to_csv(surface, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "t,x_1,W"
    assert any(line.endswith(",inf") for line in lines[1:])
