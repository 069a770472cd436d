#!/usr/bin/env python3
"""Tests for the G-function, coefficients and problem validation"""

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from src.catalog.registry import builtin_catalog, lookup
from src.catalog.singular_uv_problem import u_singular, v_singular
from src.core.errors import InvalidSpec, NonFinite
from src.model.types import (
    GParams,
    Generator,
    ModulusOfContinuity,
    ProblemSpec,
    TimeVaryingCoeff,
    big_g,
    evaluation_time,
    g_sandwich_holds,
    lambda_integral,
    zero_generator,
)
from src.model.validation import validate_problem

PARAMS = GParams(0.5, 1.0)
reals = st.floats(-100.0, 100.0, allow_nan=False)


def test_big_g_closed_form():
    assert big_g(2.0, PARAMS) == 1.0
    assert big_g(-2.0, PARAMS) == -0.25
    assert big_g(0.0, PARAMS) == 0.0
    values = big_g(np.array([2.0, -2.0]), PARAMS)
    assert values.tolist() == [1.0, -0.25]


@given(reals, reals)
def test_big_g_sublinear(a, b):
    assert big_g(a + b, PARAMS) <= big_g(a, PARAMS) + big_g(b, PARAMS) + 1e-12 * (1 + abs(a) + abs(b))


@given(reals, reals)
def test_big_g_monotone(a, b):
    lo, hi = min(a, b), max(a, b)
    assert big_g(lo, PARAMS) <= big_g(hi, PARAMS)


@given(reals, st.floats(0.0, 10.0))
def test_big_g_positively_homogeneous(a, lam):
    assert big_g(lam * a, PARAMS) == pytest.approx(lam * big_g(a, PARAMS), rel=1e-12, abs=1e-12)


@given(reals, reals)
def test_g_sandwich(a, b):
    assert g_sandwich_holds(max(a, b), min(a, b), PARAMS)


def test_g_sandwich_rejects_unordered():
    with pytest.raises(ValueError):
        g_sandwich_holds(0.0, 1.0, PARAMS)


def test_sigma_levels_include_endpoints():
    levels = PARAMS.sigma_levels(3)
    assert levels.tolist() == [0.5, 0.75, 1.0]
    with pytest.raises(ValueError):
        PARAMS.sigma_levels(1)


def test_lambda_integral_singular_coefficients():
    coeff = TimeVaryingCoeff(u_singular, v_singular, singular_at_zero=True)
    assert lambda_integral(coeff, 1.0, 100_000) == pytest.approx(3.0, abs=1e-2)


def test_lambda_integral_additive():
    coeff = TimeVaryingCoeff(u_singular, v_singular, singular_at_zero=True)
    whole = lambda_integral(coeff, 1.0, 1000)
    parts = lambda_integral(coeff, 0.5, 500) + lambda_integral(coeff, 1.0, 500, start=0.5)
    assert whole == pytest.approx(parts, rel=1e-12)


def test_lambda_integral_non_finite():
    coeff = TimeVaryingCoeff(u=lambda t: np.where(t > 0.5, np.inf, 1.0), v=lambda t: 0.0 * t)
    with pytest.raises(NonFinite):
        lambda_integral(coeff, 1.0, 100)


def test_evaluation_time_midpoint_only_when_singular():
    singular = TimeVaryingCoeff(u_singular, v_singular, singular_at_zero=True)
    regular = zero_generator().coeff
    assert evaluation_time(0.0, 0.1, singular) == 0.05
    assert evaluation_time(0.0, 0.1, regular) == 0.0


def test_generator_origin_values_and_h0():
    gen = lookup("sqrt_z").gen
    t = np.array([0.25, 0.75])
    assert np.allclose(gen.value_at_origin("f", t), 0.1)
    assert np.allclose(gen.value_at_origin("g", t), 0.0)
    assert np.allclose(gen.h0(t), 0.1)
    with pytest.raises(ValueError):
        gen.component("h")


def test_normalized_l_is_at_least_one():
    small = ModulusOfContinuity(phi=np.sqrt, L=0.3)
    large = ModulusOfContinuity(phi=np.sqrt, L=2.5)
    assert small.normalized_L == 1.0
    assert large.normalized_L == 2.5


@pytest.mark.parametrize("problem", builtin_catalog(), ids=lambda p: p.name)
def test_catalog_problems_validate(problem):
    report = validate_problem(problem, sample_budget=500)
    assert report.passed
    assert np.isfinite(report.lambda_value)


def test_singular_uv_lambda_is_three():
    report = validate_problem(lookup("singular_uv"), sample_budget=200)
    assert report.lambda_value == pytest.approx(3.0, abs=1e-2)


def test_invalid_sigma_reports_every_violation():
    spec = lookup("sqrt_z")
    bad = ProblemSpec(GParams(0.0, 1.0), spec.gen, spec.terminal, -1.0)
    with pytest.raises(InvalidSpec) as info:
        validate_problem(bad)
    message = str(info.value)
    assert "sigma_low > 0 violated" in message
    assert "horizon > 0 violated" in message
    assert len(info.value.report.failures) == 2


def test_swapped_sigmas_are_rejected():
    spec = lookup("sqrt_z")
    swapped = ProblemSpec(GParams(1.0, 0.5), spec.gen, spec.terminal, 1.0)
    with pytest.raises(InvalidSpec) as info:
        validate_problem(swapped)
    assert "sigma_low <= sigma_high violated" in str(info.value)


def test_modulus_must_vanish_at_zero():
    spec = lookup("sqrt_z")
    lifted = ModulusOfContinuity(phi=lambda x: 0.1 + np.sqrt(np.abs(x)), L=1.0)
    gen = Generator(spec.gen.f, spec.gen.g, spec.gen.coeff, lifted)
    with pytest.raises(InvalidSpec) as info:
        validate_problem(spec.with_generator(gen))
    assert "phi(0)=0 violated" in str(info.value)


def test_invalid_modulus():
    spec = lookup("sqrt_z")
    square = ModulusOfContinuity(phi=lambda x: np.asarray(x, dtype=float) ** 2, L=1.0)
    gen = Generator(spec.gen.f, spec.gen.g, spec.gen.coeff, square)
    with pytest.raises(InvalidSpec) as info:
        validate_problem(spec.with_generator(gen))
    assert "phi sub-additive violated" in str(info.value)
    assert "phi(x) <= L(1+x) violated" in str(info.value)


def test_generator_breaking_its_modulus():
    spec = lookup("lipschitz")
    steep = Generator(
        f=lambda t, y, z: 3.0 * np.abs(z) + 0.0 * t,
        g=spec.gen.g,
        coeff=spec.gen.coeff,
        modulus=spec.gen.modulus,
    )
    with pytest.raises(InvalidSpec) as info:
        validate_problem(spec.with_generator(steep))
    assert "generator modulus bound violated" in str(info.value)


def test_terminal_growth_degree():
    spec = lookup("sqrt_z")
    cubic = ProblemSpec(spec.params, spec.gen, lambda x: x ** 3, 1.0, growth_degree=2.0)
    with pytest.raises(InvalidSpec) as info:
        validate_problem(cubic)
    assert "terminal polynomial growth violated" in str(info.value)
