import numpy as np

from src.catalog.base_problem import BaseProblem, constant, identity
from src.model.types import Generator, ModulusOfContinuity, ProblemSpec, TimeVaryingCoeff


class LipschitzProblem(BaseProblem):
    """Generators Lipschitz in z, i.e. the modulus is the identity.

    With phi = identity and n v at least the z-slope, both approximants
    coincide with the generator itself, so every approximant check should
    pass with no gap at all.
    """

    PROBLEM_INFO = {
        "description": "f = 0.25 sin(y) + 0.1|z|, g = 0.1|z| - 0.25 cos(y), terminal max(x, 0)",
        "stresses": "Lipschitz case recovered by an identity modulus",
    }

    def __init__(self):
        super().__init__("lipschitz")

    def build(self, params=None, horizon=None):
        params, T = self.resolve(params, horizon)
        gen = Generator(
            f=lambda t, y, z: 0.25 * np.sin(y) + 0.1 * np.abs(z) + 0.0 * t,
            g=lambda t, y, z: 0.1 * np.abs(z) - 0.25 * np.cos(y) + 0.0 * t,
            coeff=TimeVaryingCoeff(u=constant(0.5), v=constant(0.2)),
            modulus=ModulusOfContinuity(phi=identity, L=1.0, name="identity", lipschitz=True),
        )
        return ProblemSpec(params, gen, lambda x: np.maximum(x, 0.0), T,
                           growth_degree=1.0, name=self.name,
                           description=self.PROBLEM_INFO["description"])
