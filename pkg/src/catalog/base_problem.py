import numpy as np

from src.model.types import GParams


DEFAULT_PARAMS = GParams(sigma_low=0.5, sigma_high=1.0)
DEFAULT_HORIZON = 1.0


class BaseProblem:
    """Base class for every built-in catalog problem."""

    PROBLEM_INFO = {}

    def __init__(self, name):
        self.name = name

    def build(self, params=None, horizon=None):
        """Return the ProblemSpec. This should be overridden by subclasses.

        Args:
            params: Optional GParams, defaults to sigma in [0.5, 1].
            horizon: Optional horizon T, defaults to 1.
        """
        raise NotImplementedError("Subclasses must implement build method")

    def describe(self):
        """Catalog metadata: what the problem is and which assumption it stresses."""
        info = {"name": self.name, "description": "", "stresses": ""}
        info.update(self.PROBLEM_INFO)
        return info

    @staticmethod
    def resolve(params, horizon):
        return params or DEFAULT_PARAMS, DEFAULT_HORIZON if horizon is None else float(horizon)


def constant(value):
    """Time coefficient that is constant in t and broadcasts like t."""
    def coeff(t):
        return value + np.zeros_like(np.asarray(t, dtype=float))
    return coeff


def identity(x):
    return np.asarray(x, dtype=float)


def sqrt_abs(x):
    return np.sqrt(np.abs(x))
