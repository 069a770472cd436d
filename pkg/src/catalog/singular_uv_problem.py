import numpy as np

from src.catalog.base_problem import BaseProblem, sqrt_abs
from src.model.types import Generator, ModulusOfContinuity, ProblemSpec, TimeVaryingCoeff


def u_singular(t):
    return 0.5 / np.sqrt(np.asarray(t, dtype=float))


def v_singular(t):
    return np.asarray(t, dtype=float) ** -0.25


class SingularUVProblem(BaseProblem):
    """Coefficients u(t) = t^(-1/2)/2 and v(t) = t^(-1/4), both unbounded at t = 0.

    The integral of u + v^2 over [0, 1] is 1 + 2 = 3. Solvers evaluate the
    generator at step midpoints, so t = 0 itself is never touched.
    """

    PROBLEM_INFO = {
        "description": "f = 0.25 u sin(y) + 0.1 v sqrt|z|, g = 0.1 v sqrt|z| - 0.25 u sin(y), terminal sin(x)",
        "stresses": "time-integrable blow-up of u and v at t = 0",
    }

    def __init__(self):
        super().__init__("singular_uv")

    def build(self, params=None, horizon=None):
        params, T = self.resolve(params, horizon)
        gen = Generator(
            f=lambda t, y, z: 0.25 * u_singular(t) * np.sin(y) + 0.1 * v_singular(t) * sqrt_abs(z),
            g=lambda t, y, z: 0.1 * v_singular(t) * sqrt_abs(z) - 0.25 * u_singular(t) * np.sin(y),
            coeff=TimeVaryingCoeff(u=u_singular, v=v_singular, singular_at_zero=True),
            modulus=ModulusOfContinuity(phi=sqrt_abs, L=1.0, name="sqrt"),
            f0=lambda t: np.zeros_like(np.asarray(t, dtype=float)),
            g0=lambda t: np.zeros_like(np.asarray(t, dtype=float)),
        )
        return ProblemSpec(params, gen, np.sin, T, growth_degree=0.0, name=self.name,
                           description=self.PROBLEM_INFO["description"])
