#!/usr/bin/env python3
"""Tests for the one-step scheme, the lattice solver and the ladder studies"""

import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from src.approx.approximants import QSearchConfig, SolveMode
from src.catalog.registry import lookup
from src.core.errors import DomainTooSmall, FixedPointDiverged, InvalidLadder, SchemeConditionError
from src.model.types import (
    GParams,
    Generator,
    ModulusOfContinuity,
    ProblemSpec,
    TimeVaryingCoeff,
    zero_generator,
)
from src.solvers.lattice import (
    GapReport,
    SolverConfig,
    check_ladder,
    convergence_study,
    g_expect,
    gap_study,
    propagated_slack,
    ratio_spreads,
    sandwich_run,
    solve,
)
from src.solvers.one_step import (
    EXPLICIT,
    Coupling,
    backward_candidates,
    check_scheme_condition,
    select_worst_case,
)
from src.solvers.tree_oracle import TreeConfig, solve_tree

PARAMS = GParams(0.5, 1.0)
SMALL = SolverConfig(n_time=50, n_space=301, search=QSearchConfig(grid_points=201))


def linear_in_y(a):
    identity = ModulusOfContinuity(phi=lambda x: np.asarray(x, dtype=float), L=1.0, lipschitz=True)
    return Generator(
        f=lambda t, y, z: a * y + 0.0 * z,
        g=lambda t, y, z: 0.0 * y,
        coeff=TimeVaryingCoeff(u=lambda t: a + 0.0 * np.asarray(t), v=lambda t: 0.0 * np.asarray(t)),
        modulus=identity,
    )


def test_backward_candidates_zero_generator():
    up = np.array([[2.0, 1.0], [3.0, 1.0]])
    down = np.array([[0.0, 1.0], [-1.0, 1.0]])
    V, Z = backward_candidates(zero_generator(), 0.0, 0.25, [0.5, 1.0], up, down)
    assert V.tolist() == [[1.0, 1.0], [1.0, 1.0]]
    assert Z.tolist() == [[4.0, 0.0], [4.0, 0.0]]


def test_select_worst_case_breaks_ties_low():
    V = np.array([[1.0, 2.0, 0.5], [1.0, 1.5, 0.7]])
    Z = np.array([[10.0, 20.0, 30.0], [11.0, 21.0, 31.0]])
    Y, Zs, K, idx = select_worst_case(V, Z)
    assert Y.tolist() == [1.0, 2.0, 0.7]
    assert Zs.tolist() == [10.0, 20.0, 31.0]
    assert idx.tolist() == [0, 0, 1]
    assert K.tolist() == [0.0, -0.5, 0.5 - 0.7]


values = st.floats(-5.0, 5.0, allow_nan=False)
bumps = st.floats(0.0, 2.0, allow_nan=False)


@given(values, values, bumps, bumps)
@settings(max_examples=200)
def test_one_step_is_monotone(up, down, d_up, d_down):
    gen = lookup("lipschitz").gen
    sigmas = [0.5, 1.0]

    def step(a, b):
        V, _ = backward_candidates(gen, 0.5, 0.01, sigmas, np.full((2, 1), a), np.full((2, 1), b))
        return select_worst_case(V, np.zeros_like(V))[0][0]

    assert step(up + d_up, down + d_down) >= step(up, down) - 1e-12


def test_fixed_point_coupling_solves_the_implicit_step():
    gen = linear_in_y(0.5)
    up = np.array([[1.0, 2.0]])
    down = np.array([[1.0, 0.0]])
    V, _ = backward_candidates(gen, 0.0, 0.1, [1.0], up, down, Coupling("fixed_point", 1e-14, 200))
    m = 0.5 * (up + down)
    assert np.allclose(V, m / (1.0 - 0.05), rtol=1e-12)
    explicit, _ = backward_candidates(gen, 0.0, 0.1, [1.0], up, down, EXPLICIT)
    assert np.allclose(explicit, m * 1.05)


def test_fixed_point_divergence():
    gen = linear_in_y(100.0)
    with pytest.raises(FixedPointDiverged):
        backward_candidates(gen, 0.0, 1.0, [1.0], np.ones((1, 3)), np.ones((1, 3)),
                            Coupling("fixed_point", 1e-12, 50))


def test_unknown_coupling():
    with pytest.raises(ValueError):
        Coupling("implicit")
    with pytest.raises(ValueError):
        SolverConfig(y_coupling="newton")
    with pytest.raises(ValueError):
        SolverConfig(interpolation="cubic")


def test_scheme_condition():
    gen = linear_in_y(1.0)
    with pytest.raises(SchemeConditionError):
        check_scheme_condition(gen, PARAMS, 1.0, 1)
    check_scheme_condition(gen, PARAMS, 1.0, 2)


def test_space_grid_is_aligned_to_sigma_high():
    config = SolverConfig(n_time=200)
    x, dx = config.space_grid(PARAMS, 1.0)
    jump = PARAMS.sigma_high * math.sqrt(config.time_step(1.0))
    assert jump / dx == pytest.approx(round(jump / dx), abs=1e-9)
    assert x[len(x) // 2] == 0.0
    assert x[-1] >= 6.0 - 1e-9


def test_g_expectation_closed_forms():
    convex, _ = g_expect(lambda x: x ** 2, PARAMS)
    concave, _ = g_expect(lambda x: -x ** 2, PARAMS)
    assert convex == pytest.approx(1.0, rel=0.02)
    assert concave == pytest.approx(-0.25, rel=0.02)


def test_linear_terminal_needs_no_compensator():
    problem = ProblemSpec(PARAMS, zero_generator(), lambda x: x, 1.0)
    sol = solve(problem, config=SolverConfig(n_time=50))
    assert abs(sol.Y0) < 1e-12
    assert np.all(np.abs(sol.K_residual[:-1]) < 1e-12)


def test_k_residual_nonpositive():
    sol = solve(lookup("sqrt_z"), config=SolverConfig(n_time=50))
    assert sol.K_residual.max() <= 0.0
    assert sol.boundary_weight <= 1e-6


def test_small_domain_is_rejected():
    config = SolverConfig(n_time=50, n_space=101, domain_halfwidth_sigmas=0.5)
    with pytest.raises(DomainTooSmall):
        g_expect(lambda x: x ** 2, PARAMS, config)


def test_thread_count_does_not_change_results():
    problem = lookup("sqrt_z")
    one = solve(problem, config=SolverConfig(n_time=40, threads=1))
    three = solve(problem, config=SolverConfig(n_time=40, threads=3))
    assert np.array_equal(one.Y, three.Y)
    assert np.array_equal(one.Z, three.Z)


@pytest.mark.parametrize("name", ["lipschitz", "sqrt_z", "singular_uv", "comparison_pair"])
def test_matched_lattice_agrees_with_tree(name):
    problem = lookup(name)
    root = solve_tree(problem, TreeConfig(n_steps=10)).root
    lattice = solve(problem, config=SolverConfig.matched_to_tree(10, refinement=2))
    assert abs(lattice.Y0 - root) <= 1e-9


@pytest.mark.parametrize("name", ["lipschitz", "sqrt_z", "comparison_pair"])
def test_interpolating_lattice_close_to_tree(name):
    problem = lookup(name)
    root = solve_tree(problem, TreeConfig(n_steps=10)).root
    config = SolverConfig(n_time=10, n_space=1201, align_to_sigma_high=False)
    assert abs(solve(problem, config=config).Y0 - root) <= 5e-3


def test_check_ladder():
    problem = lookup("sqrt_z")
    assert check_ladder(problem, [2, 4]) == [2, 4]
    for ladder in ([], [4, 2], [1, 2], [2, 2]):
        with pytest.raises(InvalidLadder):
            check_ladder(problem, ladder)


def test_sandwich_and_convergence_on_sqrt_z():
    problem = lookup("sqrt_z")
    report = sandwich_run(problem, [2, 4, 8], SMALL)
    assert report.passed, [c for c in report.checks if not c.passed]
    for n in report.ladder:
        assert report.lower_Y0[n] <= report.upper_Y0[n]
        assert report.slack[n] > 0.0
    assert report.uniform_bound < 2.0

    conv = convergence_study(problem, [2, 4, 8], SMALL, sandwich=report)
    assert conv.passed, [c for c in conv.checks if not c.passed]
    assert conv.origin_gap[8] < conv.origin_gap[2]


def test_gap_decreases_on_sqrt_z():
    report = gap_study(lookup("sqrt_z"), [4, 8, 16], SMALL)
    assert report.gap[16] < report.gap[4]
    assert all(report.bound_scale[n] > 0.0 for n in report.ladder)


def test_lipschitz_problem_has_no_gap():
    report = gap_study(lookup("lipschitz"), [2, 4], SMALL)
    assert report.gap[2] <= 1e-12
    assert report.gap[4] <= 1e-12


def test_propagated_slack_is_positive():
    assert propagated_slack(lookup("sqrt_z"), 4, SMALL) > 0.0
    assert propagated_slack(lookup("lipschitz"), 4, SMALL) > 0.0


def test_solve_modes_are_ordered():
    problem = lookup("singular_uv")
    lower = solve(problem, SolveMode.lower(4), SMALL)
    upper = solve(problem, SolveMode.upper(4), SMALL)
    raw = solve(problem, SolveMode.raw(), SMALL)
    slack = propagated_slack(problem, 4, SMALL)
    assert lower.Y0 <= raw.Y0 + slack
    assert raw.Y0 <= upper.Y0 + slack


def test_interior_mask_excludes_extrapolated_nodes():
    sol = solve(lookup("singular_uv"), SolveMode.lower(2), SMALL)
    assert sol.interior.shape == sol.Y.shape
    assert sol.interior[-1].all()
    assert not sol.interior[:-1, 0].any()
    assert not sol.interior[:-1, -1].any()
    assert sol.interior[0, sol.origin]


def test_lower_stays_below_upper_without_slack():
    report = sandwich_run(lookup("sqrt_z"), [2, 4, 8], SMALL)
    for n in report.ladder:
        lower, upper = report.lower[n], report.upper[n]
        mask = lower.interior & upper.interior
        assert np.max(lower.Y - upper.Y, where=mask, initial=-np.inf) <= 1e-10
    same_n = [c for c in report.checks if c.name == "lower <= upper"]
    assert len(same_n) == 3
    assert all(c.slack == 0.0 and c.passed for c in same_n)


def test_exponential_growth_from_linear_y_term():
    problem = ProblemSpec(PARAMS, linear_in_y(1.0), lambda x: 1.0 + 0.0 * x, 1.0)
    sol = solve(problem, config=SolverConfig(n_time=100))
    assert sol.Y0 == pytest.approx(math.e, rel=0.01)


def test_unit_g_collects_the_largest_variance():
    unit_g = Generator(
        f=lambda t, y, z: 0.0 * y,
        g=lambda t, y, z: 1.0 + 0.0 * y,
        coeff=zero_generator().coeff,
        modulus=zero_generator().modulus,
    )
    problem = ProblemSpec(PARAMS, unit_g, lambda x: 0.0 * x, 1.0)
    sol = solve(problem, config=SolverConfig(n_time=100))
    assert sol.Y0 == pytest.approx(1.0, rel=0.01)


def test_finer_sigma_ladder_never_lowers_the_value():
    problem = lookup("lipschitz")
    two = solve(problem, config=SMALL)
    nine = solve(problem, config=replace(SMALL, sigma_levels=9))
    assert np.array_equal(two.x, nine.x)
    mask = two.interior & nine.interior
    assert np.min(nine.Y - two.Y, where=mask, initial=np.inf) >= -1e-8


def test_refining_both_grids_moves_y0_little():
    problem = lookup("lipschitz")
    coarse = solve(problem, config=SolverConfig(n_time=50, n_space=301))
    fine = solve(problem, config=SolverConfig(n_time=100, n_space=601))
    assert abs(fine.Y0 - coarse.Y0) < 1e-2


def test_ratio_spreads():
    spread, rising = ratio_spreads([3.0, 2.0, 1.0])
    assert spread == pytest.approx(3.0)
    assert rising == pytest.approx(2.0 / 3.0)
    assert ratio_spreads([1.0, 1.5]) == pytest.approx((1.5, 1.5))
    assert ratio_spreads([0.0, 1.0]) == (1.0, 1.0)
    spread, rising = ratio_spreads([1.99e-4, 1.44e-4, 1.00e-4])
    assert spread == pytest.approx(1.99)
    assert rising < 1.0


@given(st.lists(st.floats(1e-6, 1e3), min_size=2, max_size=8))
def test_rising_spread_never_exceeds_spread(ratios):
    spread, rising = ratio_spreads(ratios)
    assert 1.0 <= spread
    assert rising <= spread * (1 + 1e-12)


def gap_report(rising_spread, decreasing=True):
    ladder = [2, 4, 8]
    return GapReport(ladder, {n: 1.0 / n for n in ladder}, {n: 1.0 for n in ladder},
                     {n: 1.0 / n for n in ladder}, 1.2, 2.0, rising_spread, decreasing)


def test_gap_report_flag_and_verdict():
    assert not gap_report(0.9).flagged
    assert gap_report(0.9).passed
    assert gap_report(1.5).flagged
    assert not gap_report(1.5).passed
    assert not gap_report(1.0, decreasing=False).passed


def test_gap_study_reports_spreads_on_sqrt_z():
    report = gap_study(lookup("sqrt_z"), [2, 4, 8], SMALL)
    ratios = [report.ratio[n] for n in report.ladder[1:]]
    assert report.spread == pytest.approx(max(ratios) / min(ratios))
    assert report.rising_spread <= report.spread * (1 + 1e-12)


def test_approximants_move_sqrt_z_away_from_raw():
    problem = lookup("sqrt_z")
    raw = solve(problem, config=SMALL)
    upper = solve(problem, SolveMode.upper(8), SMALL)
    lower = solve(problem, SolveMode.lower(8), SMALL)
    assert upper.Y0 - lower.Y0 > 1e-5
    assert abs(upper.Y0 - raw.Y0) > 1e-6
