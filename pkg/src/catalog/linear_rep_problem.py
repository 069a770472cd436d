import numpy as np

from src.catalog.base_problem import BaseProblem, constant
from src.model.types import ProblemSpec
from src.solvers.tree_oracle import LinearSpec, linear_generator


def square(x):
    return np.asarray(x, dtype=float) ** 2


def one(x):
    return np.ones_like(np.asarray(x, dtype=float))


def linear_specs():
    """The three linear parameterizations, name -> (LinearSpec, terminal).

    compounding: a = 1, terminal x^2, value (1 + dt)^N sigma_high^2 T on the tree
    variance:    c = 1, terminal 1, value (1 + sigma_high^2 dt)^N
    trivial:     a = c = m = n = 0, terminal x^2, value sigma_high^2 T
    """
    zero = constant(0.0)
    return {
        "compounding": (LinearSpec(a=constant(1.0), c=zero, m=zero, n=zero), square),
        "variance": (LinearSpec(a=zero, c=constant(1.0), m=zero, n=zero), one),
        "trivial": (LinearSpec(a=zero, c=zero, m=zero, n=zero), square),
    }


class LinearRepProblem(BaseProblem):
    """Linear generators f = a y + m, g = c y + n for the multiplicative representation."""

    PROBLEM_INFO = {
        "description": "f = y, g = 0, terminal x^2 (see linear_specs for the other two)",
        "stresses": "linear generators solved through the weight Gamma",
    }

    def __init__(self):
        super().__init__("linear_rep")

    def build(self, params=None, horizon=None, variant="compounding"):
        params, T = self.resolve(params, horizon)
        lin, terminal = linear_specs()[variant]
        return ProblemSpec(params, linear_generator(lin), terminal, T, growth_degree=2.0,
                           name=self.name if variant == "compounding" else f"{self.name}:{variant}",
                           description=self.PROBLEM_INFO["description"])
