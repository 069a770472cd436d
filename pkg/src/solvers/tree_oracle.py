"""Exact sublinear expectations and G-BSDE values on a scenario tree.

Each node branches into 2 * len(sigma_set) children: for every volatility
s the increment is +s sqrt(dt) or -s sqrt(dt) with equal weight. The
sublinear expectation is the value of a game in which an adversary picks
s at every node, so a node's value is the largest fair average over s.

Children of a node at depth k are stored contiguously: child ``2*s + b``
of parent ``p`` sits at index ``p * 2M + 2*s + b`` at depth k+1, with
b = 0 for the up move and b = 1 for the down move.
"""

from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from src.approx.approximants import SolveMode, effective_generator, QSearchConfig
from src.core.errors import BudgetExceeded, NotLinear
from src.model.types import (
    Generator,
    ModulusOfContinuity,
    ProblemSpec,
    TimeVaryingCoeff,
    evaluation_time,
)
from src.solvers.one_step import backward_candidates, select_worst_case

MAX_STEPS = 14
DEFAULT_LEAF_BUDGET = 1 << 20


@dataclass(frozen=True)
class TreeConfig:
    n_steps: int = 8
    sigma_set: Optional[Tuple[float, ...]] = None
    leaf_budget: int = DEFAULT_LEAF_BUDGET
    search: QSearchConfig = QSearchConfig(grid_points=401)

    def resolve_sigmas(self, params):
        """Volatilities used for branching; the two endpoints by default."""
        if self.sigma_set is None:
            return np.array([params.sigma_low, params.sigma_high])
        sigmas = np.asarray(self.sigma_set, dtype=float)
        tol = 1e-12 * params.sigma_high
        if sigmas.size == 0 or np.any(sigmas < params.sigma_low - tol) \
                or np.any(sigmas > params.sigma_high + tol):
            raise ValueError(f"sigma_set {self.sigma_set} is not inside "
                             f"[{params.sigma_low}, {params.sigma_high}]")
        return sigmas

    def check_budget(self, branching):
        if self.n_steps < 1 or self.n_steps > MAX_STEPS:
            raise BudgetExceeded(f"n_steps={self.n_steps} outside 1..{MAX_STEPS}")
        leaves = branching ** self.n_steps
        if leaves > self.leaf_budget:
            raise BudgetExceeded(
                f"{leaves} leaves exceed the budget of {self.leaf_budget}")
        return leaves


@dataclass
class Tree:
    """Forward skeleton: B and <B> at every node, by depth."""

    sigmas: np.ndarray
    dt: float
    b: List[np.ndarray]
    qv: List[np.ndarray]

    @property
    def n_steps(self):
        return len(self.b) - 1

    @property
    def branching(self):
        return 2 * len(self.sigmas)

    def along_paths(self, per_depth, depths=None):
        """Matrix (leaves, len(depths)) of per-node values seen along every path."""
        N = self.n_steps
        depths = range(N + 1) if depths is None else depths
        leaf = np.arange(self.branching ** N)
        cols = [per_depth[k][leaf // self.branching ** (N - k)] for k in depths]
        return np.stack(cols, axis=1)


def build_tree(params, config, horizon):
    sigmas = config.resolve_sigmas(params)
    branching = 2 * len(sigmas)
    config.check_budget(branching)
    dt = horizon / config.n_steps
    jump = np.empty(branching)
    jump[0::2] = sigmas * np.sqrt(dt)
    jump[1::2] = -sigmas * np.sqrt(dt)
    qv_jump = np.repeat(sigmas * sigmas * dt, 2)
    b, qv = [np.zeros(1)], [np.zeros(1)]
    for _ in range(config.n_steps):
        b.append((b[-1][:, None] + jump[None, :]).ravel())
        qv.append((qv[-1][:, None] + qv_jump[None, :]).ravel())
    return Tree(sigmas, dt, b, qv)


def adversarial_value(tree, leaf_values, keep_levels=False):
    """Backward induction: a node takes the best fair average over volatilities."""
    M = len(tree.sigmas)
    value = np.asarray(leaf_values, dtype=float)
    levels = [value]
    for _ in range(tree.n_steps):
        value = value.reshape(-1, M, 2).mean(axis=2).max(axis=1)
        levels.append(value)
    if keep_levels:
        return levels[::-1]
    return float(value[0])


def sublinear_expect(functional, config, params, horizon=1.0):
    """Sublinear expectation of functional(B path, <B> path).

    ``functional`` receives two arrays of shape (leaves, n_steps + 1) and
    returns one value per leaf.
    """
    tree = build_tree(params, config, horizon)
    leaf = functional(tree.along_paths(tree.b), tree.along_paths(tree.qv))
    return adversarial_value(tree, leaf)


@dataclass
class TreeSolution:
    tree: Tree
    y: List[np.ndarray]
    z: List[np.ndarray]
    dk: List[np.ndarray]
    sigma_star: List[np.ndarray]
    mode: SolveMode = field(default_factory=SolveMode.raw)

    @property
    def root(self):
        return float(self.y[0][0])

    def k_levels(self):
        """K at every node: K_0 = 0, plus the stored increment of each branch."""
        K = [np.zeros(1)]
        for k in range(self.tree.n_steps):
            step = np.repeat(self.dk[k], 2, axis=1)
            K.append((K[-1][:, None] + step).ravel())
        return K


def solve_tree(problem, config=None, mode=None):
    """Solve the G-BSDE exactly on the scenario tree.

    ``dk[k][node, s]`` holds V^s - max V, the compensator increment if the
    adversary branches with volatility s at that node; it is zero for the
    chosen volatility.
    """
    config = config or TreeConfig()
    mode = mode or SolveMode.raw()
    tree = build_tree(problem.params, config, problem.horizon)
    gen = effective_generator(problem.gen, mode, config.search)
    M, N, dt = len(tree.sigmas), tree.n_steps, tree.dt

    y = [None] * (N + 1)
    z = [None] * N
    dk = [None] * N
    star = [None] * N
    y[N] = np.asarray(problem.terminal(tree.b[N]), dtype=float) * np.ones(tree.b[N].shape)
    for k in range(N - 1, -1, -1):
        t = evaluation_time(k * dt, dt, problem.gen.coeff)
        children = y[k + 1].reshape(-1, M, 2)
        V, Zc = backward_candidates(gen, t, dt, tree.sigmas,
                                    children[:, :, 0].T, children[:, :, 1].T)
        y[k], z[k], _, star[k] = select_worst_case(V, Zc)
        dk[k] = (V - y[k]).T
    return TreeSolution(tree, y, z, dk, star, mode)


def constant_policy_value(problem, sigma, config=None, mode=None):
    """Discrete BSDE value when the volatility is held at ``sigma`` throughout."""
    config = config or TreeConfig()
    return solve_tree(problem, replace(config, sigma_set=(float(sigma),)), mode).root


@dataclass
class KMartingaleCheck:
    max_increase: float
    max_martingale_violation: float

    @property
    def max_violation(self):
        return max(self.max_increase, self.max_martingale_violation)


def verify_k_martingale(sol):
    """Check that K is non-increasing pathwise and that E_t[K_T] = K_t at every node."""
    K = sol.k_levels()
    increase = max(float(np.max(d)) for d in sol.dk) if sol.dk else 0.0
    expected = adversarial_value(sol.tree, K[-1], keep_levels=True)
    violation = max(float(np.max(np.abs(e - k))) for e, k in zip(expected, K))
    return KMartingaleCheck(max(increase, 0.0), violation)


@dataclass(frozen=True)
class LinearSpec:
    """Linear generator f = a(t) y + m(t), g = c(t) y + n(t)."""

    a: Callable
    c: Callable
    m: Callable
    n: Callable


def linear_generator(lin):
    def f(t, y, z):
        return lin.a(t) * y + lin.m(t) + 0.0 * z

    def g(t, y, z):
        return lin.c(t) * y + lin.n(t) + 0.0 * z

    coeff = TimeVaryingCoeff(
        u=lambda t: np.abs(lin.a(t)) + np.abs(lin.c(t)) + 0.0 * np.asarray(t, dtype=float),
        v=lambda t: np.zeros_like(np.asarray(t, dtype=float)),
    )
    identity = ModulusOfContinuity(phi=lambda x: np.asarray(x, dtype=float), L=1.0,
                                   name="identity", lipschitz=True)
    return Generator(f=f, g=g, coeff=coeff, modulus=identity)


def check_linear(gen, lin, horizon=1.0, samples=200, seed=0):
    """Raise NotLinear unless ``gen`` matches ``lin`` on random samples."""
    rng = np.random.default_rng(seed)
    t = horizon * (1.0 - rng.uniform(0.0, 1.0, samples))
    y, z = rng.uniform(-5.0, 5.0, (2, samples))
    for which, slope, shift in (("f", lin.a, lin.m), ("g", lin.c, lin.n)):
        actual = np.asarray(gen.component(which)(t, y, z), dtype=float)
        expected = slope(t) * y + shift(t)
        err = np.abs(actual - expected)
        if np.any(err > 1e-9 * (1.0 + np.abs(expected))):
            k = int(np.argmax(err))
            raise NotLinear(f"{which} is not linear: off by {err[k]:.3g} at "
                            f"(t={t[k]:.4g}, y={y[k]:.4g}, z={z[k]:.4g})")


@dataclass
class LinearRepresentation:
    y_dp: float
    y_gamma: float

    @property
    def difference(self):
        return abs(self.y_dp - self.y_gamma)


def linear_representation(lin, terminal, params, config=None, horizon=1.0, generator=None):
    """Solve a linear G-BSDE twice: by dynamic programming and through the
    multiplicative weight Gamma.

    Gamma starts at 1 and is multiplied by 1 + a dt + c s^2 dt on a branch
    with volatility s. The weighted functional
    Gamma_T xi + sum Gamma_k (m + s^2 n) dt has the same adversarial value as
    the dynamic-programming root.
    """
    config = config or TreeConfig()
    gen = generator if generator is not None else linear_generator(lin)
    if generator is not None:
        check_linear(generator, lin, horizon)
    problem = ProblemSpec(params, gen, terminal, horizon, name="linear")
    y_dp = solve_tree(problem, config).root

    tree = build_tree(params, config, horizon)
    M, dt = len(tree.sigmas), tree.dt
    var = np.repeat(tree.sigmas * tree.sigmas, 2)
    gamma, acc = np.ones(1), np.zeros(1)
    for k in range(tree.n_steps):
        t = evaluation_time(k * dt, dt, gen.coeff)
        factor = 1.0 + float(lin.a(t)) * dt + float(lin.c(t)) * var * dt
        if np.any(factor <= 0.0):
            raise ValueError("1 + a dt + c s^2 dt must stay positive; refine the tree")
        drift = (float(lin.m(t)) + var * float(lin.n(t))) * dt
        acc = (acc[:, None] + gamma[:, None] * drift[None, :]).ravel()
        gamma = (gamma[:, None] * factor[None, :]).ravel()
    leaf = gamma * np.asarray(terminal(tree.b[-1]), dtype=float) + acc
    return LinearRepresentation(y_dp, adversarial_value(tree, leaf))


@dataclass
class QvBoundResult:
    holds: bool
    worst_margin: float
    paths: int


def check_qv_bound(eta, params, config=None, horizon=1.0, tol=1e-12):
    """Check sum eta d<B> <= sigma_high^2 sum eta dt on every tree path.

    ``eta`` is a nonnegative step function of time, read at the left end of
    each step.
    """
    config = config or TreeConfig()
    tree = build_tree(params, config, horizon)
    times = tree.dt * np.arange(tree.n_steps)
    weights = np.asarray(eta(times), dtype=float) * np.ones_like(times)
    if np.any(weights < 0.0):
        raise ValueError("eta must be nonnegative on the grid")
    qv = tree.along_paths(tree.qv)
    lhs = np.diff(qv, axis=1) @ weights
    rhs = params.variance_high * float(np.sum(weights * tree.dt))
    margin = rhs - lhs
    worst = float(margin.min())
    return QvBoundResult(worst >= -tol * (1.0 + abs(rhs)), worst, len(margin))


@dataclass
class NormReport:
    ladder: List[int]
    norms: Dict[str, Dict[str, List[float]]]
    bound_factor: float
    h0_integral: float

    def ratio(self, direction, name):
        values = self.norms[direction][name]
        return max(values) / max(values[0], 1e-12)

    @property
    def bounded(self):
        for direction, table in self.norms.items():
            for name, values in table.items():
                if not np.all(np.isfinite(values)):
                    return False
                if max(values) > self.bound_factor * max(values[0], 1e-12) + 1e-9:
                    return False
        return True


def solution_norms(sol):
    """Tree values of E[sup |Y|^2], E[sum |Z|^2 dt] and E[|K_T|^2]."""
    tree = sol.tree
    N = tree.n_steps
    sup_y = np.max(tree.along_paths(sol.y) ** 2, axis=1)
    z_sq = np.sum(tree.along_paths(sol.z, range(N)) ** 2, axis=1) * tree.dt
    k_sq = sol.k_levels()[-1] ** 2
    return {
        "sup_Y2": adversarial_value(tree, sup_y),
        "int_Z2": adversarial_value(tree, z_sq),
        "K_T2": adversarial_value(tree, k_sq),
    }


def norm_study(problem, n_ladder, config=None, bound_factor=2.0):
    """Tree norms of both approximant solutions across the n-ladder."""
    config = config or TreeConfig()
    ladder = [int(n) for n in n_ladder]
    norms = {}
    for kind in ("lower", "upper"):
        table = {"sup_Y2": [], "int_Z2": [], "K_T2": []}
        for n in ladder:
            mode = SolveMode(kind, n)
            values = solution_norms(solve_tree(problem, config, mode))
            for name, value in values.items():
                table[name].append(value)
        norms[kind] = table
    T = problem.horizon
    mids = T * (np.arange(1000) + 0.5) / 1000
    h0 = float(np.sum(problem.gen.h0(mids)) * T / 1000)
    return NormReport(ladder, norms, bound_factor, h0)
