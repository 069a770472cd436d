"""Recombining-grid backward dynamic programming for G-BSDEs.

The spatial grid is uniform and symmetric around the origin. By default
its step divides sigma_high * sqrt(dt) exactly, so the sigma_high children
of every node fall on grid nodes and only the other volatility levels need
interpolation. Values outside the grid come from linear extrapolation of
the two outermost nodes.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from src.approx.approximants import (
    ApproxGenerator,
    ApproximantMemo,
    QSearchConfig,
    SolveMode,
    bracket,
    effective_generator,
)
from src.core.errors import DomainTooSmall, InvalidLadder, NonFinite
from src.model.types import (
    ProblemSpec,
    TimeVaryingCoeff,
    evaluation_time,
    lambda_integral,
    zero_generator,
)
from src.solvers.one_step import (
    Coupling,
    backward_candidates,
    check_scheme_condition,
    select_worst_case,
)

# Grid positions this close to a node are snapped onto it.
SNAP_TOL = 1e-9
ORDERING_TOL = 1e-10


@dataclass(frozen=True)
class SolverConfig:
    n_time: int = 200
    n_space: int = 1201
    domain_halfwidth_sigmas: float = 6.0
    sigma_levels: int = 2
    interpolation: str = "linear"
    y_coupling: str = "explicit"
    fixed_point_tol: float = 1e-12
    fixed_point_max_iter: int = 50
    boundary: str = "linear_extrapolation"
    align_to_sigma_high: bool = True
    boundary_tolerance: float = 1e-6
    threads: int = 1
    memoize: bool = True
    search: QSearchConfig = QSearchConfig()

    def __post_init__(self):
        if self.n_time < 1 or self.n_space < 3:
            raise ValueError("need n_time >= 1 and n_space >= 3")
        if self.sigma_levels < 2:
            raise ValueError("sigma_levels must be >= 2 (the two endpoints)")
        if self.interpolation != "linear":
            raise ValueError(f"unsupported interpolation {self.interpolation!r}")
        if self.boundary != "linear_extrapolation":
            raise ValueError(f"unsupported boundary rule {self.boundary!r}")
        Coupling(self.y_coupling)

    @classmethod
    def matched_to_tree(cls, n_steps, refinement=2, **overrides):
        """Lattice whose nodes include every node of an n_steps scenario tree.

        The domain reaches exactly n_steps * sigma_high * sqrt(dt), the
        widest tree node, and the step is sigma_high * sqrt(dt) / refinement;
        a volatility ratio sigma_low / sigma_high = j / refinement then puts
        every tree node on the grid.
        """
        values = dict(
            n_time=n_steps,
            n_space=2 * n_steps * refinement + 1,
            domain_halfwidth_sigmas=math.sqrt(n_steps),
            align_to_sigma_high=True,
        )
        values.update(overrides)
        return cls(**values)

    def coupling(self):
        return Coupling(self.y_coupling, self.fixed_point_tol, self.fixed_point_max_iter)

    def time_step(self, horizon):
        return horizon / self.n_time

    def space_grid(self, params, horizon):
        """Return (x, dx) for the spatial grid."""
        halfwidth = self.domain_halfwidth_sigmas * params.sigma_high * math.sqrt(horizon)
        dx = 2.0 * halfwidth / (self.n_space - 1)
        if self.align_to_sigma_high:
            jump = params.sigma_high * math.sqrt(self.time_step(horizon))
            dx = jump / max(1, math.ceil(jump / dx - SNAP_TOL))
        half = math.ceil(halfwidth / dx - SNAP_TOL)
        return dx * np.arange(-half, half + 1, dtype=float), dx


@dataclass
class LatticeSolution:
    Y: np.ndarray
    Z: np.ndarray
    K_residual: np.ndarray
    x: np.ndarray
    times: np.ndarray
    sigmas: np.ndarray
    config: SolverConfig
    mode: SolveMode
    boundary_weight: float = 0.0
    # (time slice, node) pairs whose value reads extrapolated data with
    # probability at most config.boundary_tolerance.
    interior: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def origin(self):
        return len(self.x) // 2

    @property
    def Y0(self):
        return float(self.Y[0, self.origin])


class _Stencil:
    """Interpolation weights for x +/- s sqrt(dt) on a fixed grid."""

    def __init__(self, x, dx, shifts):
        self.n = len(x)
        self.lo = []
        self.w = []
        self.outside = []
        for shift in shifts:
            pos = (x + shift - x[0]) / dx
            snapped = np.rint(pos)
            pos = np.where(np.abs(pos - snapped) < SNAP_TOL, snapped, pos)
            lo = np.clip(np.floor(pos).astype(int), 0, self.n - 2)
            self.lo.append(lo)
            # Weights outside [0, 1] extrapolate linearly past the boundary.
            self.w.append(pos - lo)
            self.outside.append((pos < -SNAP_TOL) | (pos > self.n - 1 + SNAP_TOL))

    def apply(self, values, k, sl=slice(None)):
        lo, w = self.lo[k][sl], self.w[k][sl]
        return values[lo] * (1.0 - w) + values[lo + 1] * w


def solve(problem, mode=None, config=None, memo=None):
    """Solve ``problem`` in ``mode`` (raw generator or an approximant) on a lattice."""
    mode = mode or SolveMode.raw()
    config = config or SolverConfig()
    params, T = problem.params, problem.horizon
    if mode.kind != "raw" and memo is None and config.memoize:
        memo = ApproximantMemo()
    gen = effective_generator(problem.gen, mode, config.search, memo)
    check_scheme_condition(problem.gen, params, T, config.n_time)

    N = config.n_time
    dt = config.time_step(T)
    x, dx = config.space_grid(params, T)
    sigmas = params.sigma_levels(config.sigma_levels)
    jumps = sigmas * math.sqrt(dt)
    plus = _Stencil(x, dx, jumps)
    minus = _Stencil(x, dx, -jumps)
    coupling = config.coupling()

    J = len(x)
    Y = np.empty((N + 1, J))
    Z = np.empty((N + 1, J))
    K = np.zeros((N + 1, J))
    Y[N] = np.asarray(problem.terminal(x), dtype=float)
    if not np.all(np.isfinite(Y[N])):
        raise NonFinite("terminal function is not finite on the grid")
    Z[N] = np.gradient(Y[N], dx)

    chunks = _chunks(J, config.threads)
    with ThreadPoolExecutor(max_workers=max(1, config.threads)) as pool:
        for i in range(N - 1, -1, -1):
            t = evaluation_time(i * dt, dt, problem.gen.coeff)
            nxt = Y[i + 1]

            def step(sl, t=t, nxt=nxt):
                up = np.stack([plus.apply(nxt, k, sl) for k in range(len(sigmas))])
                down = np.stack([minus.apply(nxt, k, sl) for k in range(len(sigmas))])
                V, Zc = backward_candidates(gen, t, dt, sigmas, up, down, coupling)
                return select_worst_case(V, Zc)

            if len(chunks) == 1:
                results = [step(chunks[0])]
            else:
                results = list(pool.map(step, chunks))
            for sl, (y, z, k, _) in zip(chunks, results):
                Y[i, sl], Z[i, sl], K[i, sl] = y, z, k

    weights = _boundary_weights(plus, minus, N, len(sigmas))
    solution = LatticeSolution(Y, Z, K, x, dt * np.arange(N + 1), sigmas, config, mode,
                               boundary_weight=float(weights[0, J // 2]),
                               interior=weights <= config.boundary_tolerance)
    if solution.boundary_weight > config.boundary_tolerance:
        raise DomainTooSmall(
            f"boundary extrapolation carries weight {solution.boundary_weight:.3g} "
            f"at the origin (limit {config.boundary_tolerance:g})")
    return solution


def g_expect(payoff, params, config=None, horizon=1.0):
    """G-expectation of payoff(B_T): returns (value at (0, 0), full surface)."""
    problem = ProblemSpec(params, zero_generator(), payoff, horizon, name="g-expectation")
    solution = solve(problem, SolveMode.raw(), config)
    return solution.Y0, solution.Y


def _chunks(size, threads):
    threads = max(1, int(threads))
    bounds = np.linspace(0, size, threads + 1).astype(int)
    return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _boundary_weights(plus, minus, n_steps, levels):
    """Per (slice, node): largest probability, over volatility policies, of reading extrapolated data."""
    weights = np.zeros((n_steps + 1, plus.n))
    for i in range(n_steps - 1, -1, -1):
        mass = weights[i + 1]
        best = weights[i]
        for k in range(levels):
            up = np.where(plus.outside[k], 1.0, np.clip(plus.apply(mass, k), 0.0, 1.0))
            down = np.where(minus.outside[k], 1.0, np.clip(minus.apply(mass, k), 0.0, 1.0))
            np.maximum(best, 0.5 * (up + down), out=best)
    return weights


def _interior_max(diff, *solutions):
    """Largest entry of ``diff`` over the nodes interior to every solution."""
    mask = np.logical_and.reduce([s.interior for s in solutions])
    return float(np.max(diff, where=mask, initial=-np.inf))


# ---------------------------------------------------------------------------
# Ladder studies
# ---------------------------------------------------------------------------

def check_ladder(problem, n_ladder):
    ladder = [int(n) for n in n_ladder]
    if not ladder:
        raise InvalidLadder("n-ladder is empty")
    if any(b <= a for a, b in zip(ladder, ladder[1:])):
        raise InvalidLadder(f"n-ladder {ladder} is not strictly increasing")
    L = problem.gen.modulus.normalized_L
    if ladder[0] <= L:
        raise InvalidLadder(f"every n must exceed L={L:g}, got {ladder[0]}")
    return ladder


def propagated_slack(problem, n, config):
    """Bound on how far q-grid error can move an approximant solution.

    Each step can be off by dt (1 + sigma_high^2) eps_grid(t); the y-Lipschitz
    growth of the scheme amplifies the sum by at most
    exp((1 + sigma_high^2) * integral of u).
    """
    T = problem.horizon
    dt = config.time_step(T)
    var = problem.params.variance_high
    ag = ApproxGenerator(problem.gen, n, SolveMode.lower(n).direction, config.search)
    times = np.array([evaluation_time(i * dt, dt, problem.gen.coeff) for i in range(config.n_time)])
    eps = np.asarray(ag.grid_slack(times), dtype=float)
    total = float(np.sum(dt * (1.0 + var) * eps))
    u_only = TimeVaryingCoeff(problem.gen.coeff.u, _zero)
    u_integral = lambda_integral(u_only, T, max(config.n_time, 1000))
    return total * math.exp((1.0 + var) * u_integral)


@dataclass
class OrderingCheck:
    name: str
    n: int
    n_next: Optional[int]
    violation: float
    slack: float

    @property
    def passed(self):
        return self.violation <= ORDERING_TOL + self.slack


@dataclass
class SandwichReport:
    ladder: List[int]
    checks: List[OrderingCheck] = field(default_factory=list)
    sup_norm: Dict[int, float] = field(default_factory=dict)
    lower_Y0: Dict[int, float] = field(default_factory=dict)
    upper_Y0: Dict[int, float] = field(default_factory=dict)
    slack: Dict[int, float] = field(default_factory=dict)
    lower: Dict[int, LatticeSolution] = field(default_factory=dict, repr=False)
    upper: Dict[int, LatticeSolution] = field(default_factory=dict, repr=False)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    @property
    def uniform_bound(self):
        return max(self.sup_norm.values())


def sandwich_run(problem, n_ladder, config=None, memo=None):
    """Solve both approximants for every n and check their ordering nodewise.

    Orderings are measured on interior nodes only; near the edge linear
    extrapolation makes the step non-monotone. Both approximants contain
    the point q = z, so lower(n) <= upper(n) gets no slack; the cross-n
    checks compare different q-grids and get the propagated slack.
    """
    config = config or SolverConfig()
    ladder = check_ladder(problem, n_ladder)
    report = SandwichReport(ladder=ladder)
    memo = memo if memo is not None or not config.memoize else ApproximantMemo()
    for n in ladder:
        lower = report.lower[n] = solve(problem, SolveMode.lower(n), config, memo)
        upper = report.upper[n] = solve(problem, SolveMode.upper(n), config, memo)
        report.slack[n] = propagated_slack(problem, n, config)
        report.lower_Y0[n] = lower.Y0
        report.upper_Y0[n] = upper.Y0
        report.sup_norm[n] = float(max(np.abs(lower.Y).max(), np.abs(upper.Y).max()))
        inner = _interior_max(lower.Y - upper.Y, lower, upper)
        report.checks.append(OrderingCheck("lower <= upper", n, None, inner, 0.0))
    for n, m in zip(ladder, ladder[1:]):
        slack = report.slack[n] + report.slack[m]
        solutions = (report.lower[n], report.lower[m], report.upper[n], report.upper[m])
        lo = _interior_max(report.lower[n].Y - report.lower[m].Y, *solutions)
        up = _interior_max(report.upper[m].Y - report.upper[n].Y, *solutions)
        report.checks.append(OrderingCheck("lower increasing in n", n, m, lo, slack))
        report.checks.append(OrderingCheck("upper decreasing in n", n, m, up, slack))
    return report


@dataclass
class GapReport:
    ladder: List[int]
    gap: Dict[int, float]
    bound_scale: Dict[int, float]
    ratio: Dict[int, float]
    growth_factor: float
    # max / min of the ratios after the first rung
    spread: float
    # largest ratio[b] / ratio[a] with a before b, after the first rung
    rising_spread: float
    decreasing: bool

    @property
    def flagged(self):
        return self.rising_spread > self.growth_factor

    @property
    def passed(self):
        return not self.flagged and self.decreasing


def gap_study(problem, n_ladder, config=None, growth_factor=1.2, sandwich=None, memo=None):
    """Largest interior upper-minus-lower gap per n against phi(2L/(n-L))."""
    config = config or SolverConfig()
    ladder = check_ladder(problem, n_ladder)
    if sandwich is None or not set(ladder) <= set(sandwich.ladder):
        sandwich = sandwich_run(problem, ladder, config, memo)
    L = problem.gen.modulus.normalized_L
    phi = problem.gen.modulus.phi
    gap, scale, ratio = {}, {}, {}
    for n in ladder:
        upper, lower = sandwich.upper[n], sandwich.lower[n]
        gap[n] = _interior_max(upper.Y - lower.Y, upper, lower)
        scale[n] = float(phi(np.asarray(2.0 * L / (n - L))))
        ratio[n] = gap[n] / scale[n] if scale[n] > 0 else 0.0
    spread, rising = ratio_spreads([ratio[n] for n in ladder[1:]])
    decreasing = len(ladder) < 2 or gap[ladder[-1]] < gap[ladder[0]]
    return GapReport(ladder, gap, scale, ratio, growth_factor, spread, rising, decreasing)


def ratio_spreads(ratios):
    """(max/min, largest later/earlier quotient) of positive ratios; 1.0 when undefined."""
    r = np.asarray([x for x in ratios if x > 0.0], dtype=float)
    if r.size < 2:
        return 1.0, 1.0
    running_min = np.minimum.accumulate(r)
    return float(r.max() / r.min()), float(np.max(r[1:] / running_min[:-1]))


@dataclass
class ConvergenceReport:
    ladder: List[int]
    origin_gap: Dict[int, float]
    mismatch: Dict[int, float]
    checks: List[OrderingCheck] = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)


def convergence_study(problem, n_ladder, config=None, sandwich=None, tol=1e-6,
                      mismatch_slices=50, mismatch_nodes=201, memo=None):
    """Upper and lower approximant solutions approach a common limit.

    Checks at the origin that the gap shrinks, the lower values rise and the
    upper values fall, and that consecutive rungs stay within gap(n) + tol
    of each other. Also reports the generator-mismatch integral
    sum dt * max |upper_n - lower_n| along the upper solution, which should
    shrink along the ladder.
    """
    config = config or SolverConfig()
    ladder = check_ladder(problem, n_ladder)
    if sandwich is None or not set(ladder) <= set(sandwich.ladder):
        sandwich = sandwich_run(problem, ladder, config, memo)
    origin_gap = {n: sandwich.upper_Y0[n] - sandwich.lower_Y0[n] for n in ladder}
    mismatch = {n: _mismatch_integral(problem, n, sandwich.upper[n], config,
                                      mismatch_slices, mismatch_nodes) for n in ladder}
    report = ConvergenceReport(ladder, origin_gap, mismatch)
    for n, m in zip(ladder, ladder[1:]):
        slack = sandwich.slack[n] + sandwich.slack[m]
        report.checks.append(OrderingCheck(
            "origin gap shrinks", n, m, origin_gap[m] - origin_gap[n], 2 * slack))
        report.checks.append(OrderingCheck(
            "lower Cauchy", n, m,
            abs(sandwich.lower_Y0[m] - sandwich.lower_Y0[n]) - origin_gap[n], tol + slack))
        report.checks.append(OrderingCheck(
            "upper Cauchy", n, m,
            abs(sandwich.upper_Y0[n] - sandwich.upper_Y0[m]) - origin_gap[n], tol + slack))
        eps = _mean_grid_slack(problem, n, config) + _mean_grid_slack(problem, m, config)
        report.checks.append(OrderingCheck(
            "mismatch integral shrinks", n, m, mismatch[m] - mismatch[n], 2 * eps))
    return report


def _mismatch_integral(problem, n, solution, config, slices, nodes):
    T = problem.horizon
    N = config.n_time
    dt = config.time_step(T)
    var = problem.params.variance_high
    rows = np.unique(np.linspace(0, N - 1, min(slices, N)).astype(int))
    centre = solution.origin
    half = min(nodes // 2, centre)
    cols = slice(centre - half, centre + half + 1)
    ag = ApproxGenerator(problem.gen, n, SolveMode.upper(n).direction, config.search)
    total = 0.0
    for i in rows:
        t = evaluation_time(i * dt, dt, problem.gen.coeff)
        y, z = solution.Y[i, cols], solution.Z[i, cols]
        worst = 0.0
        for which, weight in (("f", 1.0), ("g", var)):
            lower, upper = bracket(ag, which, t, y, z)
            worst += weight * float(np.max(np.abs(upper - lower)))
        total += worst
    return total * T / len(rows)


def _mean_grid_slack(problem, n, config):
    ag = ApproxGenerator(problem.gen, n, SolveMode.lower(n).direction, config.search)
    T = problem.horizon
    dt = config.time_step(T)
    times = np.array([evaluation_time(i * dt, dt, problem.gen.coeff) for i in range(config.n_time)])
    var = problem.params.variance_high
    return float(np.sum(dt * (1.0 + var) * np.asarray(ag.grid_slack(times), dtype=float)))


def _zero(t):
    return np.zeros_like(np.asarray(t, dtype=float))
