"""Sampled checks of the standing assumptions on a ProblemSpec."""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from src.core.errors import InvalidSpec, NonFinite
from src.model.types import lambda_integral

# Samples for y and z are drawn from [-SAMPLE_RADIUS, SAMPLE_RADIUS],
# modulus arguments from [0, 2 * SAMPLE_RADIUS].
SAMPLE_RADIUS = 5.0
LAMBDA_QUADRATURE_POINTS = 100_000
RELATIVE_TOL = 1e-9


@dataclass
class InvariantCheck:
    name: str
    passed: bool
    margin: float = 0.0
    witness: Optional[tuple] = None


@dataclass
class ValidationReport:
    problem: str
    checks: List[InvariantCheck] = field(default_factory=list)
    lambda_value: Optional[float] = None

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    @property
    def failures(self):
        return [c for c in self.checks if not c.passed]

    def add(self, name, margin, witness=None, passed=None):
        """Record a check; ``margin`` >= 0 means the invariant holds."""
        if passed is None:
            passed = bool(np.isfinite(margin) and margin >= 0.0)
        self.checks.append(InvariantCheck(name, passed, float(margin), witness))


def validate_modulus(modulus, rng, sample_budget, report):
    """Check phi(0)=0, monotonicity, sub-additivity and phi(x) <= L(1+x)."""
    phi = modulus.phi
    phi0 = float(phi(np.asarray(0.0)))
    report.add("phi(0)=0", -abs(phi0), (0.0, phi0))

    x = rng.uniform(0.0, 2 * SAMPLE_RADIUS, sample_budget)
    y = rng.uniform(0.0, 2 * SAMPLE_RADIUS, sample_budget)
    px, py = np.asarray(phi(x), dtype=float), np.asarray(phi(y), dtype=float)
    pxy = np.asarray(phi(x + y), dtype=float)
    tol = RELATIVE_TOL * (1.0 + np.abs(pxy))

    lo, hi = np.minimum(x, y), np.maximum(x, y)
    plo, phi_hi = np.asarray(phi(lo), dtype=float), np.asarray(phi(hi), dtype=float)
    mono = phi_hi - plo + tol
    k = int(np.argmin(mono))
    report.add("phi non-decreasing", mono[k], (lo[k], hi[k]))

    sub = px + py - pxy + tol
    k = int(np.argmin(sub))
    report.add("phi sub-additive", sub[k], (x[k], y[k]))

    growth = modulus.L * (1.0 + x) - px + tol
    k = int(np.argmin(growth))
    report.add("phi(x) <= L(1+x)", growth[k], (x[k],))


def validate_problem(spec, sample_budget=1000, seed=0):
    """Run every sampled validity check on ``spec``.

    Returns the ValidationReport when all checks pass; otherwise raises
    InvalidSpec carrying the report and naming every violated invariant.
    """
    if sample_budget < 1:
        raise ValueError("sample_budget must be >= 1")
    rng = np.random.default_rng(seed)
    report = ValidationReport(problem=spec.name or "inline")
    params, gen = spec.params, spec.gen

    report.add("sigma_low > 0", params.sigma_low if params.sigma_low > 0 else -1.0)
    report.add("sigma_low <= sigma_high", params.sigma_high - params.sigma_low,
               (params.sigma_low, params.sigma_high))
    report.add("horizon > 0", spec.horizon if spec.horizon > 0 else -1.0)
    if not report.passed:
        _raise_if_failed(report)

    validate_modulus(gen.modulus, rng, sample_budget, report)

    T = spec.horizon
    # Open at zero: singular coefficients are only required finite on (0, T].
    t = T * (1.0 - rng.uniform(0.0, 1.0, sample_budget))
    u = np.broadcast_to(np.asarray(gen.coeff.u(t), dtype=float), t.shape)
    v = np.broadcast_to(np.asarray(gen.coeff.v(t), dtype=float), t.shape)
    finite = np.isfinite(u) & np.isfinite(v)
    report.add("u, v finite on (0,T]", 0.0 if finite.all() else -1.0,
               None if finite.all() else (t[~finite][0],))
    nonneg = np.minimum(u, v)
    k = int(np.argmin(np.where(finite, nonneg, np.inf)))
    report.add("u, v >= 0", nonneg[k] if finite.all() else -1.0, (t[k],))

    try:
        report.lambda_value = lambda_integral(gen.coeff, T, LAMBDA_QUADRATURE_POINTS)
        report.add("Lambda(u,v) finite", 0.0)
    except NonFinite as exc:
        report.add("Lambda(u,v) finite", -1.0, (str(exc),))

    if finite.all():
        _validate_generator(spec, rng, t, u, v, sample_budget, report)
    _validate_terminal(spec, report)
    _raise_if_failed(report)
    return report


def _validate_generator(spec, rng, t, u, v, sample_budget, report):
    gen = spec.gen
    zero = np.zeros_like(t)
    for which in ("f", "g"):
        direct = np.asarray(gen.component(which)(t, zero, zero), dtype=float)
        stored = np.asarray(gen.value_at_origin(which, t), dtype=float)
        gap = -np.abs(direct - stored) + RELATIVE_TOL * (1.0 + np.abs(direct))
        k = int(np.argmin(gap))
        report.add(f"{which}0(t) = {which}(t,0,0)", gap[k], (t[k],))

    y1, y2 = rng.uniform(-SAMPLE_RADIUS, SAMPLE_RADIUS, (2, sample_budget))
    z1, z2 = rng.uniform(-SAMPLE_RADIUS, SAMPLE_RADIUS, (2, sample_budget))
    # Half the pairs get nearby z so the modulus is sampled at small arguments.
    near = rng.uniform(0.0, 1.0, sample_budget) < 0.5
    z2 = np.where(near, z1 + rng.uniform(-1e-3, 1e-3, sample_budget), z2)

    lhs = np.zeros_like(t)
    for which in ("f", "g"):
        phi = gen.component(which)
        a = np.asarray(phi(t, y1, z1), dtype=float)
        b = np.asarray(phi(t, y2, z2), dtype=float)
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            report.add(f"{which} finite", -1.0)
            return
        lhs = lhs + np.abs(a - b)
    rhs = u * np.abs(y1 - y2) + v * np.asarray(gen.modulus.phi(np.abs(z1 - z2)), dtype=float)
    margin = rhs - lhs + RELATIVE_TOL * (1.0 + rhs)
    k = int(np.argmin(margin))
    report.add("generator modulus bound", margin[k], (t[k], y1[k], z1[k], y2[k], z2[k]))


def _validate_terminal(spec, report):
    """Polynomial growth of the terminal function with the declared degree.

    The normalized size |Phi(x)| / (1+|x|)^degree is compared between a
    moderate and a far range of x; it may not grow without bound.
    """
    x = np.concatenate([2.0 ** np.arange(0, 21), -(2.0 ** np.arange(0, 21))])
    values = np.asarray(spec.terminal(x), dtype=float)
    if not np.all(np.isfinite(values)):
        report.add("terminal finite", -1.0)
        return
    ratio = np.abs(values) / (1.0 + np.abs(x)) ** spec.growth_degree
    scale = np.abs(x)
    near = ratio[scale < 2.0 ** 10].max()
    far = ratio[scale >= 2.0 ** 10].max()
    report.add("terminal polynomial growth", 2.0 * near + 1.0 - far, (spec.growth_degree,))


def _raise_if_failed(report):
    if report.passed:
        return
    names = ", ".join(f"{c.name} violated" for c in report.failures)
    raise InvalidSpec(names, report)
