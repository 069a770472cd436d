import numpy as np

from src.catalog.base_problem import BaseProblem, constant, sqrt_abs
from src.model.types import Generator, ModulusOfContinuity, ProblemSpec, TimeVaryingCoeff


class SqrtZProblem(BaseProblem):
    """Square-root dependence on z: uniformly continuous but not Lipschitz.

    The terminal cos(x) is even, so Z = 0 along the whole origin line and the
    solution keeps visiting the kink of sqrt|z|, where the approximants part
    from the generator by about 0.15^2 / (4 n v). v = 0.2 keeps the slopes
    n v small enough for the lattice step to stay monotone up to n = 16 at
    200 time steps and n = 32 at 400.
    """

    PROBLEM_INFO = {
        "description": "f = 0.25 sin(y) + 0.15 sqrt|z| + 0.1, g = 0.15 sqrt|z| - 0.25 sin(y), terminal cos(x)",
        "stresses": "non-Lipschitz z-dependence with modulus sqrt and L = 1",
    }

    def __init__(self):
        super().__init__("sqrt_z")

    def build(self, params=None, horizon=None):
        params, T = self.resolve(params, horizon)
        gen = Generator(
            f=lambda t, y, z: 0.25 * np.sin(y) + 0.15 * sqrt_abs(z) + 0.1 + 0.0 * t,
            g=lambda t, y, z: 0.15 * sqrt_abs(z) - 0.25 * np.sin(y) + 0.0 * t,
            coeff=TimeVaryingCoeff(u=constant(0.5), v=constant(0.2)),
            modulus=ModulusOfContinuity(phi=sqrt_abs, L=1.0, name="sqrt"),
        )
        return ProblemSpec(params, gen, np.cos, T, growth_degree=0.0, name=self.name,
                           description=self.PROBLEM_INFO["description"])
