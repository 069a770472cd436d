"""Sampled verification of the six approximant properties.

Each property is checked on random (t, y, z, y', z') samples for every n
in a ladder, for both generator components and both directions. The q-grid
can only overestimate an infimum and underestimate a supremum, so
every inequality gets the grid slack on exactly the side that bias can
break and nothing on the other side.
"""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from src.approx.approximants import (
    ApproxGenerator,
    Direction,
    QSearchConfig,
    gap_bound,
    growth_envelope,
)
from src.core.errors import InvalidLadder, PropertyViolation
from src.model.validation import SAMPLE_RADIUS, ValidationReport, validate_modulus

ROUNDING_TOL = 1e-12

PROPERTIES = (
    "linear growth",
    "monotone in n",
    "lipschitz in (y,z)",
    "modulus in z",
    "gap bound",
    "convergence",
)


@dataclass
class PropertyCheck:
    prop: str
    n: int
    component: str
    direction: str
    margin: float
    witness: Optional[tuple] = None

    @property
    def passed(self):
        return bool(np.isfinite(self.margin) and self.margin >= 0.0)


@dataclass
class PropertyReport:
    ladder: List[int]
    normalized_L: float
    checks: List[PropertyCheck] = field(default_factory=list)
    precondition: Optional[ValidationReport] = None
    aborted: bool = False

    @property
    def passed(self):
        return not self.aborted and all(c.passed for c in self.checks)

    @property
    def violations(self):
        return [c for c in self.checks if not c.passed]

    def worst(self, prop, n=None):
        rows = [c for c in self.checks if c.prop == prop and (n is None or c.n == n)]
        return min(rows, key=lambda c: c.margin) if rows else None

    def raise_for_violations(self):
        if self.aborted:
            names = ", ".join(c.name for c in self.precondition.failures)
            raise PropertyViolation(f"modulus precondition failed: {names}")
        bad = self.violations
        if bad:
            worst = min(bad, key=lambda c: c.margin)
            raise PropertyViolation(
                f"{worst.prop} violated for {worst.direction} {worst.component}, n={worst.n}",
                witness=worst.witness,
                margin=worst.margin,
            )


def verify_approximant_properties(gen, n_ladder, sample_budget=1000, seed=0,
                                  horizon=1.0, search=None, components=("f", "g")):
    """Check all six approximant properties for every n in ``n_ladder``."""
    if sample_budget < 1:
        raise ValueError("sample_budget must be >= 1")
    ladder = sorted(int(n) for n in n_ladder)
    if not ladder:
        raise InvalidLadder("n-ladder is empty")
    search = search or QSearchConfig()
    rng = np.random.default_rng(seed)
    report = PropertyReport(ladder=ladder, normalized_L=gen.modulus.normalized_L)

    precondition = ValidationReport(problem="modulus")
    validate_modulus(gen.modulus, rng, sample_budget, precondition)
    report.precondition = precondition
    if not precondition.passed:
        report.aborted = True
        return report
    if ladder[0] <= gen.modulus.normalized_L:
        raise InvalidLadder(f"every n must exceed L={gen.modulus.normalized_L:g}")

    s = _draw_samples(rng, sample_budget, horizon)
    for which in components:
        base = _base_minus_origin(gen, which, s["t"], s["y"], s["z"])
        for n in ladder:
            for direction in (Direction.LOWER, Direction.UPPER):
                ag = ApproxGenerator(gen, n, direction, search)
                _check_single_index(report, ag, which, s, base)
        for n, n_next in zip(ladder, ladder[1:]):
            _check_monotone(report, gen, search, which, n, n_next, s)
    return report


def _draw_samples(rng, m, horizon):
    t = horizon * (1.0 - rng.uniform(0.0, 1.0, m))
    y = rng.uniform(-SAMPLE_RADIUS, SAMPLE_RADIUS, m)
    z = rng.uniform(-SAMPLE_RADIUS, SAMPLE_RADIUS, m)
    near = rng.uniform(0.0, 1.0, m) < 0.5
    dz = np.where(near, rng.uniform(-0.05, 0.05, m), rng.uniform(-2.0, 2.0, m))
    dy = rng.uniform(-1.0, 1.0, m)
    return {"t": t, "y": y, "z": z, "y2": y + dy, "z2": z + dz}


def _base_minus_origin(gen, which, t, y, z):
    values = np.asarray(gen.component(which)(t, y, z), dtype=float)
    return values - gen.value_at_origin(which, t)


def _record(report, prop, ag, which, margin, s, extra=None):
    k = int(np.argmin(margin))
    witness = (s["t"][k], s["y"][k], s["z"][k], s["y2"][k], s["z2"][k])
    if extra is not None:
        witness = witness + (extra[k],)
    report.checks.append(PropertyCheck(prop, ag.n, which, ag.direction.value,
                                       float(margin[k]), witness))


def _check_single_index(report, ag, which, s, base):
    t, y, z, y2, z2 = s["t"], s["y"], s["z"], s["y2"], s["z2"]
    gen = ag.base
    u = np.asarray(gen.coeff.u(t), dtype=float) * np.ones_like(t)
    v = np.asarray(gen.coeff.v(t), dtype=float) * np.ones_like(t)
    eps = ag.grid_slack(t)
    lower = ag.direction is Direction.LOWER

    a = ag.evaluate(which, t, y, z)
    tol = ROUNDING_TOL * (1.0 + np.abs(a) + np.abs(base))

    env = growth_envelope(gen, t, y, z)
    if lower:
        growth = np.minimum(a + env, base - a) + tol
    else:
        growth = np.minimum(a - base, env - a) + tol
    _record(report, "linear growth", ag, which, growth, s)

    b = ag.evaluate(which, t, y2, z2)
    lip = u * np.abs(y - y2) + ag.n * v * np.abs(z - z2) + eps - np.abs(a - b) + tol
    _record(report, "lipschitz in (y,z)", ag, which, lip, s)

    c = ag.evaluate(which, t, y, z2)
    phi_dz = np.asarray(gen.modulus.phi(np.abs(z - z2)), dtype=float)
    mod = v * phi_dz + eps - np.abs(a - c) + tol
    _record(report, "modulus in z", ag, which, mod, s)

    bound = gap_bound(ag, t)
    if lower:
        # base - a >= 0 is exact because q = z is always searched.
        gap = np.minimum(base - a + tol, bound + eps - (base - a) + tol)
    else:
        gap = np.minimum(a - base + tol, bound + eps - (a - base) + tol)
    _record(report, "gap bound", ag, which, gap, s)

    shift = 1.0 / ag.n
    d = ag.evaluate(which, t, y + shift, z + shift)
    phi_shift = float(gen.modulus.phi(np.asarray(shift)))
    limit = u * shift + v * phi_shift + bound + eps
    conv = limit - np.abs(d - base) + tol
    _record(report, "convergence", ag, which, conv, s, extra=np.abs(d - base))


def _check_monotone(report, gen, search, which, n, n_next, s):
    """lower_n <= lower_n' and upper_n' <= upper_n for n < n'.

    On a shared q-grid this is exact: raising the cone slope can only
    raise every candidate of the infimum and lower every candidate of the
    supremum. On each index's own grid the grid slack of the smaller index
    applies.
    """
    t, y, z = s["t"], s["y"], s["z"]
    for direction in (Direction.LOWER, Direction.UPPER):
        small = ApproxGenerator(gen, n, direction, search)
        large = ApproxGenerator(gen, n_next, direction, search)
        shared = small.offsets()
        a = small.evaluate(which, t, y, z, offsets=shared)
        b = large.evaluate(which, t, y, z, offsets=shared)
        exact = (b - a) if direction is Direction.LOWER else (a - b)
        _record(report, "monotone in n", small, which, exact, s)

        a_own = small.evaluate(which, t, y, z)
        b_own = large.evaluate(which, t, y, z)
        eps = small.grid_slack(t) + large.grid_slack(t)
        own = (b_own - a_own) if direction is Direction.LOWER else (a_own - b_own)
        _record(report, "monotone in n", small, which, own + eps, s)
