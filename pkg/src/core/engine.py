from dataclasses import replace

import numpy as np

from src.approx.properties import PROPERTIES, verify_approximant_properties
from src.approx.approximants import SolveMode
from src.catalog.comparison_pair_problem import ordered_pairs
from src.catalog.linear_rep_problem import linear_specs
from src.catalog.registry import get_problem
from src.core.errors import ConfigError, GBsdeError
from src.core.report import RunReport
from src.model.types import ProblemSpec, zero_generator
from src.solvers.lattice import (
    SolverConfig,
    check_ladder,
    convergence_study,
    g_expect,
    gap_study,
    sandwich_run,
    solve,
)
from src.solvers.pde_oracle import PdeGrid, cross_check
from src.solvers.tree_oracle import (
    check_qv_bound,
    constant_policy_value,
    linear_representation,
    norm_study,
    solve_tree,
    sublinear_expect,
    verify_k_martingale,
)
from src.storage.report_storage_handler import ReportStorageHandler, make_record

SUBCOMMANDS = (
    "expect", "solve", "props", "sandwich", "gap", "compare",
    "linear-rep", "cross-check", "qv-bound", "norms",
)

# Subcommands whose --steps override sets the tree depth.
TREE_SUBCOMMANDS = ("linear-rep", "qv-bound", "norms")

# Trees used for exact K and linear checks stay at or below this depth.
EXACT_TREE_STEPS = 8

ORDERING_IDS = {
    "lower <= upper": "sandwich.lower_le_upper",
    "lower increasing in n": "sandwich.lower_increasing",
    "upper decreasing in n": "sandwich.upper_decreasing",
    "origin gap shrinks": "convergence.origin_gap",
    "lower Cauchy": "convergence.lower_cauchy",
    "upper Cauchy": "convergence.upper_cauchy",
    "mismatch integral shrinks": "convergence.mismatch",
}


def square(x):
    return np.asarray(x, dtype=float) ** 2


def negative_square(x):
    return -np.asarray(x, dtype=float) ** 2


def square_below_zero(x):
    x = np.asarray(x, dtype=float)
    return np.where(x < 0.0, x * x, 0.0)


def tree_refinement(params, limit=64):
    """Smallest r with r * sigma_low / sigma_high an integer, or None."""
    ratio = params.sigma_low / params.sigma_high
    for r in range(1, limit + 1):
        if abs(r * ratio - round(r * ratio)) < 1e-12:
            return r
    return None


class GBsdeLabEngine:
    """Runs one experiment subcommand and stores its report."""

    def __init__(self, config, quiet=False):
        self.config = config
        self.quiet = quiet
        self.entry = get_problem(config.problem)
        self.problem = self.entry.build()
        check_ladder(self.problem, config.n_ladder)
        self.storage = ReportStorageHandler(config.out)

    def _print(self, message):
        if not self.quiet:
            print(message)

    def environment(self, subcommand):
        params = self.problem.params
        solver = self.config.solver
        return {
            "subcommand": subcommand,
            "problem": self.problem.name,
            "normalized_L": self.problem.gen.modulus.normalized_L,
            "sigma_levels": [float(s) for s in params.sigma_levels(solver.sigma_levels)],
            "config": self.config.to_dict(),
        }

    def run(self, subcommand):
        """Execute ``subcommand`` stage by stage.

        A stage that raises a GBsdeError is reported and recorded as a
        failed row; the remaining stages still run.
        """
        stages = {
            "expect": self._expect,
            "solve": self._solve,
            "props": self._props,
            "sandwich": self._sandwich,
            "gap": self._gap,
            "compare": self._compare,
            "linear-rep": self._linear_rep,
            "cross-check": self._cross_check,
            "qv-bound": self._qv_bound,
            "norms": self._norms,
        }[subcommand]()

        report = RunReport(subcommand, self.problem.name, environment=self.environment(subcommand))
        self._print(f"[{subcommand}] {self.problem.name}")
        for label, stage in stages:
            try:
                for record in stage():
                    report.add(record)
                    status = "ok" if record.passed else "FAIL"
                    n = "" if record.n is None else f" n={record.n}"
                    self._print(f"  {label}:{n} {record.check_id} value={record.value:.6g} "
                                f"bound={record.bound:.6g} {status}")
            except GBsdeError as e:
                print(f"  Error: {e}")
                report.add(make_record(f"{subcommand}.error", 1.0, 0.0))

        path = self.storage.store_report(report)
        self._print(f"  Wrote {path / 'report.json'} and {path / 'checks.csv'}")
        print(report.summary())
        return report

    # -- subcommands ---------------------------------------------------------

    def _expect(self):
        params, T = self.problem.params, self.problem.horizon
        tol = self.config.tolerances
        tree = self.config.tree

        def tree_stage():
            cases = (
                ("expect.tree.convex", lambda b, q: b[:, -1] ** 2, params.variance_high * T),
                ("expect.tree.concave", lambda b, q: -b[:, -1] ** 2, -params.variance_low * T),
                ("expect.tree.linear", lambda b, q: b[:, -1], 0.0),
            )
            for check_id, functional, exact in cases:
                value = sublinear_expect(functional, tree, params, T)
                yield make_record(check_id, abs(value - exact), tol.closed_form_tree * (1.0 + abs(exact)))
            zero = ProblemSpec(params, zero_generator(), square, T, name="g-expectation")
            root = solve_tree(zero, tree).root
            direct = sublinear_expect(lambda b, q: b[:, -1] ** 2, tree, params, T)
            yield make_record("expect.tree.reduction", abs(root - direct), 0.0)

        def lattice_stage():
            cases = (
                ("expect.lattice.convex", square, params.variance_high * T),
                ("expect.lattice.concave", negative_square, -params.variance_low * T),
            )
            for check_id, payoff, exact in cases:
                value, _ = g_expect(payoff, params, self.config.solver, T)
                yield make_record(check_id, abs(value - exact), tol.closed_form_lattice * abs(exact))

        return [("tree", tree_stage), ("lattice", lattice_stage)]

    def _solve(self):
        problem, solver, tree = self.problem, self.config.solver, self.config.tree
        tol = self.config.tolerances

        def lattice_stage():
            sol = solve(problem, SolveMode.raw(), solver)
            self.storage.store_solution(sol)
            self._print(f"  Y0 = {sol.Y0:.12g} on {len(sol.x)} nodes x {solver.n_time} steps")
            yield make_record("solve.boundary_weight", sol.boundary_weight, solver.boundary_tolerance)
            yield make_record("solve.k_residual", float(sol.K_residual.max()), 0.0)

        def tree_stage():
            root = solve_tree(problem, tree).root
            self._print(f"  tree Y0 = {root:.12g} at {tree.n_steps} steps")
            if tree.sigma_set is None:
                refinement = tree_refinement(problem.params)
                if refinement is not None:
                    matched = SolverConfig.matched_to_tree(tree.n_steps, refinement,
                                                           threads=solver.threads)
                    y0 = solve(problem, SolveMode.raw(), matched).Y0
                    yield make_record("solve.tree.matched", abs(y0 - root), tol.tree_matched)
            generic = SolverConfig(n_time=tree.n_steps, n_space=1201, align_to_sigma_high=False,
                                   threads=solver.threads)
            y0 = solve(problem, SolveMode.raw(), generic).Y0
            yield make_record("solve.tree.interpolated", abs(y0 - root), tol.tree_interpolated)

        def compensator_stage():
            small = replace(tree, n_steps=min(tree.n_steps, EXACT_TREE_STEPS))
            sol = solve_tree(problem, small)
            yield make_record("solve.k_martingale", verify_k_martingale(sol).max_violation,
                              tol.k_martingale)
            mixed = ProblemSpec(problem.params, zero_generator(), square_below_zero,
                                problem.horizon, name="mixed convexity")
            check = verify_k_martingale(solve_tree(mixed, small))
            yield make_record("solve.k_martingale.mixed", check.max_violation, tol.k_martingale)
            root = sol.root
            worst = max(constant_policy_value(problem, s, small) - root
                        for s in small.resolve_sigmas(problem.params))
            yield make_record("solve.policy_dominance", worst, 1e-12 * (1.0 + abs(root)))

        return [("lattice", lattice_stage), ("tree", tree_stage), ("compensator", compensator_stage)]

    def _props(self):
        def stage():
            report = verify_approximant_properties(
                self.problem.gen, self.config.n_ladder, self.config.sample_budget,
                self.config.seed, self.problem.horizon, self.config.solver.search)
            self._print(f"  normalized L = {report.normalized_L:g}")
            yield make_record("props.precondition", 0.0 if not report.aborted else 1.0, 0.0)
            for prop in PROPERTIES:
                slug = {
                    "linear growth": "linear_growth",
                    "monotone in n": "monotone_in_n",
                    "lipschitz in (y,z)": "lipschitz",
                    "modulus in z": "modulus",
                    "gap bound": "gap_bound",
                    "convergence": "convergence",
                }[prop]
                for n in report.ladder:
                    worst = report.worst(prop, n)
                    if worst is not None:
                        yield make_record(f"props.{slug}", -worst.margin, 0.0, n=n)

        return [("approximants", stage)]

    def _sandwich(self):
        tol = self.config.tolerances

        def stage():
            sw = sandwich_run(self.problem, self.config.n_ladder, self.config.solver)
            for n in sw.ladder:
                self._print(f"  n={n}: lower Y0={sw.lower_Y0[n]:.10g} upper Y0={sw.upper_Y0[n]:.10g} "
                            f"slack={sw.slack[n]:.3g}")
            for c in sw.checks:
                yield make_record(ORDERING_IDS[c.name], c.violation, tol.ordering + c.slack, n=c.n)
            norms = list(sw.sup_norm.values())
            yield make_record("sandwich.uniform_bound", max(norms) / max(min(norms), 1e-12),
                              tol.norm_factor)
            conv = convergence_study(self.problem, sw.ladder, self.config.solver, sw)
            for c in conv.checks:
                yield make_record(ORDERING_IDS[c.name], c.violation, tol.ordering + c.slack, n=c.n)

        return [("sandwich", stage)]

    def _gap(self):
        tol = self.config.tolerances

        def stage():
            g = gap_study(self.problem, self.config.n_ladder, self.config.solver, tol.gap_growth)
            for n in g.ladder:
                self._print(f"  n={n}: gap={g.gap[n]:.6g} phi(2L/(n-L))={g.bound_scale[n]:.6g} "
                            f"ratio={g.ratio[n]:.6g}")
            for a, b in zip(g.ladder, g.ladder[1:]):
                yield make_record("gap.ratio", g.ratio[b], tol.gap_growth * g.ratio[a], n=b)
            self._print(f"  ratio spread after the first rung: max/min={g.spread:.4g} "
                        f"rising={g.rising_spread:.4g}")
            yield make_record("gap.ratio_spread", g.spread, tol.gap_growth, n=g.ladder[-1],
                              margin=tol.gap_growth - g.rising_spread, passed=not g.flagged)
            first, last = g.ladder[0], g.ladder[-1]
            yield make_record("gap.decreasing", g.gap[last], g.gap[first], n=last,
                              passed=g.decreasing)

        return [("gap", stage)]

    def _compare(self):
        tol = self.config.tolerances
        pairs = []
        if hasattr(self.entry, "build_pair"):
            pairs.append(("catalog", self.entry.build_pair()))
        if self.config.compare_pairs:
            base = pairs[0][1][0] if pairs else self.problem
            randomized = ordered_pairs(base, self.config.compare_pairs, self.config.seed)
            pairs.extend(("random", p) for p in randomized)

        def pairs_stage():
            if not pairs:
                raise ConfigError(f"{self.problem.name} has no catalog pair and compare_pairs is 0")
            return []

        def tree_stage():
            worst = {}
            for kind, (p1, p2) in pairs:
                a = solve_tree(p1, self.config.tree)
                b = solve_tree(p2, self.config.tree)
                gap = max(float(np.max(ya - yb)) for ya, yb in zip(a.y, b.y))
                worst[kind] = max(worst.get(kind, -np.inf), gap)
            for kind, value in worst.items():
                check_id = "compare.tree" if kind == "catalog" else "compare.tree.random"
                yield make_record(check_id, value, tol.comparison)

        def lattice_stage():
            worst = {}
            for kind, (p1, p2) in pairs:
                a = solve(p1, SolveMode.raw(), self.config.solver)
                b = solve(p2, SolveMode.raw(), self.config.solver)
                gap = float(np.max(a.Y - b.Y, where=a.interior & b.interior, initial=-np.inf))
                worst[kind] = max(worst.get(kind, -np.inf), gap)
            for kind, value in worst.items():
                check_id = "compare.lattice" if kind == "catalog" else "compare.lattice.random"
                yield make_record(check_id, value, tol.comparison)

        return [("pairs", pairs_stage), ("tree", tree_stage), ("lattice", lattice_stage)]

    def _linear_rep(self):
        params, T = self.problem.params, self.problem.horizon
        tol = self.config.tolerances
        tree = replace(self.config.tree, n_steps=min(self.config.tree.n_steps, EXACT_TREE_STEPS),
                       sigma_set=None)
        N = tree.n_steps
        dt = T / N
        closed_form = {
            "compounding": (1.0 + dt) ** N * params.variance_high * T,
            "variance": (1.0 + params.variance_high * dt) ** N,
            "trivial": params.variance_high * T,
        }

        def stage():
            for name, (lin, terminal) in linear_specs().items():
                rep = linear_representation(lin, terminal, params, tree, T)
                self._print(f"  {name}: y_dp={rep.y_dp:.15g} y_gamma={rep.y_gamma:.15g}")
                scale = 1.0 + abs(rep.y_dp)
                yield make_record(f"linear_rep.agreement.{name}", rep.difference,
                                  tol.linear_rep * scale)
                yield make_record(f"linear_rep.closed_form.{name}",
                                  abs(rep.y_dp - closed_form[name]), tol.linear_rep * scale)

        return [("linear", stage)]

    def _cross_check(self):
        solver, pde, tol = self.config.solver, self.config.pde, self.config.tolerances
        halfwidth = pde.halfwidth_sigmas or solver.domain_halfwidth_sigmas
        modes = [SolveMode.raw(), SolveMode.upper(self.config.n_ladder[-1])]

        def stage():
            grid = PdeGrid.for_problem(self.problem, pde.n_space, halfwidth, pde.cfl)
            self._print(f"  PDE grid {grid.n_space} x {grid.n_time}, cfl={grid.cfl_ratio:.3f}")
            for mode in modes:
                rep = cross_check(self.problem, solver, grid, mode,
                                  rel_tol=tol.pde_relative, abs_tol=tol.pde_absolute)
                label = " (indicative)" if rep.indicative else ""
                self._print(f"  {mode.label}: lattice={rep.lattice_Y0:.10g} pde={rep.pde_u0:.10g} "
                            f"worst slice={max(rep.slice_max):.3g}{label}")
                check_id = "cross_check.origin.indicative" if rep.indicative else "cross_check.origin"
                yield make_record(check_id, rep.origin_abs, rep.bound, n=mode.n)

        return [("pde", stage)]

    def _qv_bound(self):
        params, T = self.problem.params, self.problem.horizon
        tree = self.config.tree
        etas = {
            "constant": lambda t: np.ones_like(t),
            "linear": lambda t: np.asarray(t, dtype=float),
            "step": lambda t: np.where(np.asarray(t) < 0.5 * T, 1.0, 2.0),
        }

        def stage():
            for name, eta in etas.items():
                r = check_qv_bound(eta, params, tree, T)
                yield make_record(f"qv_bound.holds.{name}", -r.worst_margin, 0.0, passed=r.holds)
            saturated = replace(tree, sigma_set=(params.sigma_high,))
            r = check_qv_bound(etas["constant"], params, saturated, T)
            bound = 1e-12 * (1.0 + params.variance_high * T)
            yield make_record("qv_bound.equality", abs(r.worst_margin), bound)

        return [("paths", stage)]

    def _norms(self):
        tree = replace(self.config.tree, n_steps=min(self.config.tree.n_steps, EXACT_TREE_STEPS))

        def stage():
            report = norm_study(self.problem, self.config.n_ladder, tree,
                                self.config.tolerances.norm_factor)
            self._print(f"  integral of |f0| + |g0| = {report.h0_integral:.6g}")
            for direction, table in report.norms.items():
                for name, values in table.items():
                    shown = ", ".join(f"{v:.4g}" for v in values)
                    self._print(f"  {direction} {name}: {shown}")
                    yield make_record(f"norms.bounded.{direction}.{name}",
                                      report.ratio(direction, name), report.bound_factor)

        return [("tree", stage)]
