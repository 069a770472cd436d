import numpy as np

from src.catalog.base_problem import BaseProblem, constant, identity
from src.model.types import Generator, ModulusOfContinuity, ProblemSpec, TimeVaryingCoeff


MAX_SHIFT = 0.2


def _bump(x):
    return 1.0 / (1.0 + np.asarray(x, dtype=float) ** 2)


def _wave(x):
    return 0.5 * (1.0 + np.cos(x))


class ComparisonPairProblem(BaseProblem):
    """Two problems whose terminal functions and generators are ordered pointwise.

    ``build`` returns the smaller member; ``build_pair`` returns both, and
    ``ordered_pairs`` draws further pairs by adding random nonnegative
    shifts to the smaller member.
    """

    PROBLEM_INFO = {
        "description": "f = 0.2 sin(y) + 0.05|z| - 0.05, g = 0.1 cos(y) + 0.05 sin(z), "
                       "terminal sin(x) - 0.1; the larger member adds nonnegative shifts",
        "stresses": "comparison of ordered terminal values and generators",
    }

    def __init__(self):
        super().__init__("comparison_pair")

    def build(self, params=None, horizon=None):
        params, T = self.resolve(params, horizon)
        gen = Generator(
            f=lambda t, y, z: 0.2 * np.sin(y) + 0.05 * np.abs(z) - 0.05 + 0.0 * t,
            g=lambda t, y, z: 0.1 * np.cos(y) + 0.05 * np.sin(z) + 0.0 * t,
            coeff=TimeVaryingCoeff(u=constant(0.5), v=constant(0.2)),
            modulus=ModulusOfContinuity(phi=identity, L=1.0, name="identity", lipschitz=True),
        )
        return ProblemSpec(params, gen, lambda x: np.sin(x) - 0.1, T, growth_degree=0.0,
                           name=self.name, description=self.PROBLEM_INFO["description"])

    def build_pair(self, params=None, horizon=None):
        lower = self.build(params, horizon)
        return lower, shifted(lower, 0.1, 0.05, 0.025, weights=(0.0, 1.0, 0.0))

    def ordered_pairs(self, count=100, seed=0, params=None, horizon=None):
        return ordered_pairs(self.build(params, horizon), count, seed)


def ordered_pairs(problem, count=100, seed=0):
    """``count`` ordered pairs (problem, shifted problem) drawn reproducibly from ``seed``."""
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(count):
        dxi, df, dg = rng.uniform(0.0, MAX_SHIFT, 3)
        weights = tuple(rng.uniform(0.0, 1.0, 3))
        pairs.append((problem, shifted(problem, dxi, df, dg, weights)))
    return pairs


def shifted(problem, dxi, df, dg, weights=(1.0, 1.0, 1.0)):
    """Copy of ``problem`` with terminal and generators raised by nonnegative amounts.

    Each shift is ``amount * (w + (1 - w) * shape)`` with a shape valued in
    [0, 1]: 1/(1+x^2) for the terminal value, (1 + cos z)/2 for f and
    (1 + cos y)/2 for g.
    """
    if min(dxi, df, dg) < 0.0:
        raise ValueError("shifts must be nonnegative to keep the pair ordered")
    wx, wf, wg = weights
    base, terminal = problem.gen, problem.terminal

    def f(t, y, z):
        return base.f(t, y, z) + df * (wf + (1.0 - wf) * _wave(z))

    def g(t, y, z):
        return base.g(t, y, z) + dg * (wg + (1.0 - wg) * _wave(y))

    def xi(x):
        return terminal(x) + dxi * (wx + (1.0 - wx) * _bump(x))

    gen = Generator(f=f, g=g, coeff=base.coeff, modulus=base.modulus)
    return ProblemSpec(problem.params, gen, xi, problem.horizon, problem.growth_degree,
                       name=f"{problem.name}+shift", description=problem.description)
