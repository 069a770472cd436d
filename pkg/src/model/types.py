"""Domain types for one-dimensional G-BSDE problems.

Every callable stored on these types is expected to accept numpy arrays
and broadcast like a ufunc: ``f(t, y, z)`` with arrays of matching shape,
``u(t)``, ``phi(x)`` and ``terminal(x)`` elementwise. Scalars work too.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from src.core.errors import NonFinite


@dataclass(frozen=True)
class GParams:
    """Volatility interval [sigma_low, sigma_high] of the G-Brownian motion."""

    sigma_low: float
    sigma_high: float

    @property
    def variance_low(self):
        return self.sigma_low ** 2

    @property
    def variance_high(self):
        return self.sigma_high ** 2

    def sigma_levels(self, count=2):
        """Evenly spaced volatilities from sigma_low to sigma_high."""
        if count < 2:
            raise ValueError("need at least the two endpoint volatilities")
        return np.linspace(self.sigma_low, self.sigma_high, count)


def big_g(a, params):
    """Scalar G-function G(a) = 1/2 (sigma_high^2 a+ - sigma_low^2 a-).

    This is the supremum of a*s^2/2 over s in [sigma_low, sigma_high].
    Works elementwise on arrays.
    """
    a = np.asarray(a, dtype=float)
    value = 0.5 * (params.variance_high * np.maximum(a, 0.0)
                   - params.variance_low * np.maximum(-a, 0.0))
    return value if value.ndim else float(value)


def g_sandwich_holds(a1, a2, params, tol=1e-12):
    """Check 1/2 s_low^2 (a1-a2) <= G(a1)-G(a2) <= 1/2 s_high^2 (a1-a2) for a1 >= a2."""
    diff = a1 - a2
    if diff < 0:
        raise ValueError("a1 must be >= a2")
    delta = big_g(a1, params) - big_g(a2, params)
    scale = tol * (1.0 + abs(a1) + abs(a2))
    return (0.5 * params.variance_low * diff - scale <= delta
            <= 0.5 * params.variance_high * diff + scale)


@dataclass(frozen=True)
class ModulusOfContinuity:
    """Modulus phi of the z-dependence, with its linear-growth constant L.

    ``lipschitz`` marks phi = identity (up to a constant), which turns the
    uniformly continuous case into the Lipschitz one.
    """

    phi: Callable
    L: float
    name: str = "custom"
    lipschitz: bool = False

    @property
    def normalized_L(self):
        """L raised to at least 1, the value every approximant formula uses."""
        return max(float(self.L), 1.0)


@dataclass(frozen=True)
class TimeVaryingCoeff:
    """Deterministic coefficients u(t) (in y) and v(t) (in z)."""

    u: Callable
    v: Callable
    singular_at_zero: bool = False


def evaluation_time(t, dt, coeff):
    """Time at which a backward step starting at ``t`` evaluates the generator.

    Coefficients that blow up at t=0 are evaluated at the interval
    midpoint so that no evaluation ever lands on the singularity.
    """
    if coeff.singular_at_zero:
        return t + 0.5 * dt
    return t


def lambda_integral(coeff, horizon, n_quad, start=0.0):
    """Midpoint-rule value of the integral of u + v^2 over [start, horizon]."""
    if n_quad < 1:
        raise ValueError("n_quad must be >= 1")
    if horizon < start:
        raise ValueError("horizon must not precede start")
    h = (horizon - start) / n_quad
    mids = start + h * (np.arange(n_quad) + 0.5)
    u = np.broadcast_to(np.asarray(coeff.u(mids), dtype=float), mids.shape)
    v = np.broadcast_to(np.asarray(coeff.v(mids), dtype=float), mids.shape)
    integrand = u + v * v
    if not np.all(np.isfinite(integrand)):
        bad = mids[~np.isfinite(integrand)][0]
        raise NonFinite(f"u + v^2 is not finite at t={bad!r}")
    return float(h * integrand.sum())


@dataclass(frozen=True)
class Generator:
    """Generator pair (f, g) with its regularity data.

    ``f`` multiplies dt and ``g`` multiplies d<B>. ``f0``/``g0`` default to
    the generators evaluated at (y, z) = (0, 0).
    """

    f: Callable
    g: Callable
    coeff: TimeVaryingCoeff
    modulus: ModulusOfContinuity
    f0: Optional[Callable] = None
    g0: Optional[Callable] = None

    def value_at_origin(self, which, t):
        """phi_0(t) = phi(t, 0, 0) for phi = f or g."""
        explicit = self.f0 if which == "f" else self.g0
        if explicit is not None:
            return _as_float_array(explicit(t), t)
        t = np.asarray(t, dtype=float)
        zero = np.zeros_like(t)
        return _as_float_array(self.component(which)(t, zero, zero), t)

    def component(self, which):
        if which == "f":
            return self.f
        if which == "g":
            return self.g
        raise ValueError(f"unknown generator component {which!r}")

    def h0(self, t):
        """Magnitude |f0(t)| + |g0(t)| of the generator at the origin."""
        return np.abs(self.value_at_origin("f", t)) + np.abs(self.value_at_origin("g", t))


@dataclass(frozen=True)
class ProblemSpec:
    """A Markovian G-BSDE instance with terminal condition terminal(B_T)."""

    params: GParams
    gen: Generator
    terminal: Callable
    horizon: float
    growth_degree: float = 2.0
    name: str = ""
    description: str = field(default="", compare=False)

    def with_generator(self, gen, name=None):
        return ProblemSpec(self.params, gen, self.terminal, self.horizon,
                           self.growth_degree, name or self.name, self.description)


def zero_generator(coeff=None):
    """The generator f = g = 0 (plain G-expectation)."""
    coeff = coeff or TimeVaryingCoeff(u=_zeros_like, v=_zeros_like)
    return Generator(
        f=lambda t, y, z: np.zeros(np.broadcast(t, y, z).shape),
        g=lambda t, y, z: np.zeros(np.broadcast(t, y, z).shape),
        coeff=coeff,
        modulus=ModulusOfContinuity(phi=lambda x: np.asarray(x, dtype=float), L=1.0,
                                    name="identity", lipschitz=True),
        f0=_zeros_like,
        g0=_zeros_like,
    )


def _zeros_like(t):
    return np.zeros_like(np.asarray(t, dtype=float))


def _as_float_array(value, like):
    shape = np.shape(like)
    return np.broadcast_to(np.asarray(value, dtype=float), shape).copy() if shape else float(value)
