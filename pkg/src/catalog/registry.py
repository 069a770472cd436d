from src.catalog.comparison_pair_problem import ComparisonPairProblem
from src.catalog.linear_rep_problem import LinearRepProblem
from src.catalog.lipschitz_problem import LipschitzProblem
from src.catalog.singular_uv_problem import SingularUVProblem
from src.catalog.sqrt_z_problem import SqrtZProblem
from src.core.errors import UnknownProblem


PROBLEMS = [
    LipschitzProblem(),
    SqrtZProblem(),
    SingularUVProblem(),
    ComparisonPairProblem(),
    LinearRepProblem(),
]


def problem_names():
    return [p.name for p in PROBLEMS]


def get_problem(name):
    """Catalog entry (a BaseProblem) registered under ``name``."""
    for problem in PROBLEMS:
        if problem.name == name:
            return problem
    raise UnknownProblem(f"Unknown problem '{name}'. Available: {', '.join(problem_names())}")


def lookup(name, params=None, horizon=None):
    """ProblemSpec of the catalog entry ``name``."""
    return get_problem(name).build(params, horizon)


def builtin_catalog(params=None, horizon=None):
    """Every built-in problem, built with the default or given parameters."""
    return [p.build(params, horizon) for p in PROBLEMS]
