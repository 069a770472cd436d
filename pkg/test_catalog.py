#!/usr/bin/env python3
"""Tests for the built-in problem catalog"""

import numpy as np
import pytest

from src.catalog.base_problem import BaseProblem
from src.catalog.comparison_pair_problem import MAX_SHIFT, ordered_pairs, shifted
from src.catalog.registry import PROBLEMS, builtin_catalog, get_problem, lookup, problem_names
from src.core.errors import UnknownProblem
from src.model.types import GParams

GRID = np.linspace(-4.0, 4.0, 41)


def test_problem_names():
    assert problem_names() == ["lipschitz", "sqrt_z", "singular_uv", "comparison_pair", "linear_rep"]


def test_unknown_problem_lists_alternatives():
    with pytest.raises(UnknownProblem) as info:
        get_problem("heston")
    assert "Unknown problem 'heston'" in str(info.value)
    assert "sqrt_z" in str(info.value)


@pytest.mark.parametrize("problem", PROBLEMS, ids=lambda p: p.name)
def test_every_problem_describes_itself(problem):
    info = problem.describe()
    assert info["name"] == problem.name
    assert info["description"]
    assert info["stresses"]


def test_base_problem_is_abstract():
    with pytest.raises(NotImplementedError):
        BaseProblem("empty").build()


def test_lookup_defaults_and_overrides():
    spec = lookup("sqrt_z")
    assert spec.params == GParams(0.5, 1.0)
    assert spec.horizon == 1.0
    assert spec.name == "sqrt_z"
    custom = lookup("sqrt_z", params=GParams(0.2, 0.8), horizon=2.0)
    assert custom.params.sigma_low == 0.2
    assert custom.horizon == 2.0
    assert len(builtin_catalog()) == len(PROBLEMS)


def test_linear_rep_variants():
    problem = get_problem("linear_rep")
    assert problem.build().name == "linear_rep"
    assert problem.build(variant="variance").name == "linear_rep:variance"
    with pytest.raises(KeyError):
        problem.build(variant="quadratic")


def test_singular_coefficients_blow_up_at_zero():
    gen = lookup("singular_uv").gen
    assert gen.coeff.singular_at_zero
    assert gen.coeff.u(np.array([0.25]))[0] == pytest.approx(1.0)
    assert gen.coeff.v(np.array([1.0 / 16]))[0] == pytest.approx(2.0)


def ordered(pair, t=0.3):
    a, b = pair
    y, z = np.meshgrid(GRID, GRID)
    return (np.all(a.terminal(GRID) <= b.terminal(GRID))
            and np.all(a.gen.f(t, y, z) <= b.gen.f(t, y, z))
            and np.all(a.gen.g(t, y, z) <= b.gen.g(t, y, z)))


def test_catalog_pair_is_ordered():
    lower, upper = get_problem("comparison_pair").build_pair()
    assert ordered((lower, upper))
    assert upper.name == "comparison_pair+shift"


def test_random_pairs_are_ordered_and_reproducible():
    base = lookup("comparison_pair")
    pairs = ordered_pairs(base, count=20, seed=3)
    again = get_problem("comparison_pair").ordered_pairs(count=20, seed=3)
    assert len(pairs) == 20
    for (a, b), (_, c) in zip(pairs, again):
        assert ordered((a, b))
        assert np.array_equal(b.terminal(GRID), c.terminal(GRID))
        assert np.all(b.terminal(GRID) - a.terminal(GRID) <= MAX_SHIFT)


def test_negative_shift_is_rejected():
    with pytest.raises(ValueError):
        shifted(lookup("comparison_pair"), -0.1, 0.0, 0.0)
