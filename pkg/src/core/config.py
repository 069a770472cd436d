"""Experiment configuration: one JSON document parsed into frozen dataclasses.

Every level is fail-closed: a key that no dataclass field names raises
ConfigError, as does a value the dataclass rejects.
"""

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Tuple

from src.approx.approximants import QSearchConfig
from src.core.errors import ConfigError, GBsdeError
from src.solvers.lattice import SolverConfig
from src.solvers.tree_oracle import TreeConfig


@dataclass(frozen=True)
class PdeSettings:
    n_space: int = 201
    halfwidth_sigmas: Optional[float] = None
    cfl: float = 0.4


@dataclass(frozen=True)
class Tolerances:
    ordering: float = 1e-10
    comparison: float = 1e-10
    closed_form_tree: float = 1e-12
    closed_form_lattice: float = 0.02
    k_martingale: float = 1e-12
    linear_rep: float = 1e-9
    tree_matched: float = 1e-9
    tree_interpolated: float = 5e-3
    pde_relative: float = 0.01
    pde_absolute: float = 1e-6
    gap_growth: float = 1.2
    norm_factor: float = 2.0


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str = "sqrt_z"
    n_ladder: Tuple[int, ...] = (2, 4, 8, 16)
    seed: int = 0
    out: str = "results"
    sample_budget: int = 1000
    compare_pairs: int = 100
    solver: SolverConfig = field(default_factory=SolverConfig)
    tree: TreeConfig = field(default_factory=TreeConfig)
    pde: PdeSettings = field(default_factory=PdeSettings)
    tolerances: Tolerances = field(default_factory=Tolerances)

    def __post_init__(self):
        ladder = tuple(int(n) for n in self.n_ladder)
        if not ladder:
            raise ValueError("n_ladder is empty")
        if any(b <= a for a, b in zip(ladder, ladder[1:])):
            raise ValueError(f"n_ladder {list(ladder)} is not strictly increasing")
        if ladder[0] < 1:
            raise ValueError("n_ladder entries must be positive")
        object.__setattr__(self, "n_ladder", ladder)
        if self.sample_budget < 1:
            raise ValueError("sample_budget must be >= 1")
        if self.compare_pairs < 0:
            raise ValueError("compare_pairs must be >= 0")

    def to_dict(self):
        return asdict(self)


# Fields whose JSON value is itself an object parsed into a dataclass.
NESTED = {
    (ExperimentConfig, "solver"): SolverConfig,
    (ExperimentConfig, "tree"): TreeConfig,
    (ExperimentConfig, "pde"): PdeSettings,
    (ExperimentConfig, "tolerances"): Tolerances,
    (SolverConfig, "search"): QSearchConfig,
    (TreeConfig, "search"): QSearchConfig,
}


def from_dict(data, cls=ExperimentConfig, path="config"):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object, got {type(data).__name__}")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {', '.join(unknown)}")
    values = {}
    for name, value in data.items():
        nested = NESTED.get((cls, name))
        if nested is not None:
            value = from_dict(value, nested, f"{path}.{name}")
        elif isinstance(value, list):
            value = tuple(value)
        values[name] = value
    try:
        return cls(**values)
    except (TypeError, ValueError, GBsdeError) as e:
        raise ConfigError(f"{path}: {e}") from e


def load_config(path=None):
    """Read a JSON config file; no path means all defaults."""
    if path is None:
        return ExperimentConfig()
    try:
        with open(Path(path), "r") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    return from_dict(data)


def apply_overrides(config, problem=None, n_ladder=None, seed=None, threads=None,
                    out=None, steps=None, space=None, tree_steps=False):
    """Return ``config`` with the command-line overrides applied.

    ``steps`` sets the tree depth when ``tree_steps`` is true and the
    lattice time steps otherwise.
    """
    try:
        if problem is not None:
            config = replace(config, problem=problem)
        if n_ladder is not None:
            config = replace(config, n_ladder=tuple(n_ladder))
        if seed is not None:
            config = replace(config, seed=int(seed))
        if out is not None:
            config = replace(config, out=out)
        solver = config.solver
        if threads is not None:
            solver = replace(solver, threads=int(threads))
        if space is not None:
            solver = replace(solver, n_space=int(space))
        if steps is not None and not tree_steps:
            solver = replace(solver, n_time=int(steps))
        config = replace(config, solver=solver)
        if steps is not None and tree_steps:
            config = replace(config, tree=replace(config.tree, n_steps=int(steps)))
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e
    return config


def parse_ladder(text):
    """Parse "2,4,8,16" into a tuple of ints."""
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError as e:
        raise ConfigError(f"invalid n-ladder {text!r}") from e
