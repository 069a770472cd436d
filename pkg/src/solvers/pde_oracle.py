"""Explicit finite differences for the fully nonlinear PDE

    u_t + G(u_xx + 2 g(t, u, u_x)) + f(t, u, u_x) = 0,   u(T, x) = terminal(x)

whose solution at (0, 0) is the G-BSDE value Y_0. Used to cross-check the
lattice with a method that shares none of its interpolation.
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from src.approx.approximants import QSearchConfig, SolveMode, effective_generator
from src.core.errors import CflViolation, InconsistentConfigs, NonFinite
from src.model.types import big_g, evaluation_time
from src.solvers.lattice import SolverConfig, solve

MAX_CFL = 0.5
HORIZON_TOL = 1e-12


@dataclass(frozen=True)
class PdeGrid:
    n_time: int
    n_space: int
    halfwidth: float
    sigma_high: float
    horizon: float = 1.0

    def __post_init__(self):
        if self.n_time < 1:
            raise ValueError("n_time must be >= 1")
        if self.n_space < 5 or self.n_space % 2 == 0:
            raise ValueError("n_space must be odd and >= 5 so x = 0 is a node")
        if self.cfl_ratio > MAX_CFL:
            raise CflViolation(
                f"sigma_high^2 dt/dx^2 = {self.cfl_ratio:.4g} exceeds {MAX_CFL}; "
                f"use n_time >= {self.min_steps()}")

    @property
    def dt(self):
        return self.horizon / self.n_time

    @property
    def dx(self):
        return 2.0 * self.halfwidth / (self.n_space - 1)

    @property
    def cfl_ratio(self):
        return self.sigma_high ** 2 * self.dt / self.dx ** 2

    def min_steps(self, cfl=MAX_CFL):
        return math.ceil(self.sigma_high ** 2 * self.horizon / (cfl * self.dx ** 2))

    def x(self):
        half = (self.n_space - 1) // 2
        return self.dx * np.arange(-half, half + 1, dtype=float)

    @classmethod
    def for_problem(cls, problem, n_space=201, halfwidth_sigmas=6.0, cfl=0.4):
        """Grid over +/- halfwidth_sigmas * sigma_high * sqrt(T) with the fewest
        time steps that keep the CFL ratio at or below ``cfl``."""
        if not 0.0 < cfl <= MAX_CFL:
            raise ValueError(f"cfl must lie in (0, {MAX_CFL}]")
        s, T = problem.params.sigma_high, problem.horizon
        halfwidth = halfwidth_sigmas * s * math.sqrt(T)
        dx = 2.0 * halfwidth / (n_space - 1)
        n_time = math.ceil(s * s * T / (cfl * dx * dx))
        return cls(n_time, n_space, halfwidth, s, T)


@dataclass
class PdeSolution:
    u: np.ndarray
    x: np.ndarray
    times: np.ndarray
    grid: PdeGrid
    mode: SolveMode

    @property
    def u0(self):
        return float(self.u[0, len(self.x) // 2])


def _check_grid(problem, grid):
    if abs(grid.horizon - problem.horizon) > HORIZON_TOL:
        raise InconsistentConfigs(
            f"PDE horizon {grid.horizon} differs from problem horizon {problem.horizon}")
    if abs(grid.sigma_high - problem.params.sigma_high) > HORIZON_TOL:
        raise InconsistentConfigs(
            f"PDE grid built for sigma_high={grid.sigma_high}, "
            f"problem has {problem.params.sigma_high}")


def solve_pde(problem, grid, mode=None, search=None):
    """Backward explicit Euler with central differences.

    The two outermost nodes are filled by linear extrapolation from the
    interior after every step.
    """
    _check_grid(problem, grid)
    mode = mode or SolveMode.raw()
    gen = effective_generator(problem.gen, mode, search or QSearchConfig())
    params = problem.params
    N, dt, dx = grid.n_time, grid.dt, grid.dx
    x = grid.x()

    u = np.empty((N + 1, len(x)))
    u[N] = np.asarray(problem.terminal(x), dtype=float)
    if not np.all(np.isfinite(u[N])):
        raise NonFinite("terminal function is not finite on the PDE grid")
    for i in range(N - 1, -1, -1):
        t = evaluation_time(i * dt, dt, problem.gen.coeff)
        prev = u[i + 1]
        mid = prev[1:-1]
        ux = (prev[2:] - prev[:-2]) / (2.0 * dx)
        uxx = (prev[2:] - 2.0 * mid + prev[:-2]) / (dx * dx)
        g = np.asarray(gen.g(t, mid, ux), dtype=float)
        f = np.asarray(gen.f(t, mid, ux), dtype=float)
        row = mid + dt * (big_g(uxx + 2.0 * g, params) + f)
        if not np.all(np.isfinite(row)):
            raise NonFinite(f"PDE step at t={t:.6g} produced a non-finite value")
        u[i, 1:-1] = row
        u[i, 0] = 2.0 * row[0] - row[1]
        u[i, -1] = 2.0 * row[-1] - row[-2]
    return PdeSolution(u, x, dt * np.arange(N + 1), grid, mode)


@dataclass
class DiscrepancyReport:
    problem: str
    mode: str
    lattice_Y0: float
    pde_u0: float
    slice_times: List[float] = field(default_factory=list)
    slice_max: List[float] = field(default_factory=list)
    indicative: bool = False
    rel_tol: float = 0.01
    abs_tol: float = 1e-6

    @property
    def origin_abs(self):
        return abs(self.lattice_Y0 - self.pde_u0)

    @property
    def origin_rel(self):
        return self.origin_abs / max(abs(self.lattice_Y0), 1e-12)

    @property
    def bound(self):
        return self.rel_tol * abs(self.lattice_Y0) + self.abs_tol

    @property
    def passed(self):
        return self.origin_abs <= self.bound


def cross_check(problem, solver_config=None, grid=None, mode=None, max_slices=50,
                rel_tol=0.01, abs_tol=1e-6):
    """Compare lattice Y and the PDE surface at the origin and on the inner half of the domain."""
    solver_config = solver_config or SolverConfig()
    grid = grid or PdeGrid.for_problem(
        problem, halfwidth_sigmas=solver_config.domain_halfwidth_sigmas)
    _check_grid(problem, grid)
    mode = mode or SolveMode.raw()
    lattice = solve(problem, mode, solver_config)
    pde = solve_pde(problem, grid, mode, solver_config.search)

    reach = 0.5 * min(lattice.x[-1], pde.x[-1])
    inner = np.abs(pde.x) <= reach
    report = DiscrepancyReport(
        problem=problem.name,
        mode=mode.label,
        lattice_Y0=lattice.Y0,
        pde_u0=pde.u0,
        indicative=mode.kind == "raw" and not problem.gen.modulus.lipschitz,
        rel_tol=rel_tol,
        abs_tol=abs_tol,
    )
    rows = np.unique(np.linspace(0, len(lattice.times) - 1,
                                 min(max_slices, len(lattice.times))).astype(int))
    for i in rows:
        t = lattice.times[i]
        j = min(int(round(t / grid.dt)), grid.n_time)
        mapped = np.interp(pde.x[inner], lattice.x, lattice.Y[i])
        report.slice_times.append(float(t))
        report.slice_max.append(float(np.max(np.abs(mapped - pde.u[j, inner]))))
    return report
