import json
from pathlib import Path

import numpy as np
import pandas as pd

from src.core.report import COLUMNS, CheckRecord, RunReport


# Anchor and description for every check the engine can emit, keyed by check id.
CHECK_METADATA = {
    "expect.tree.convex": {
        "anchor": "G-expectation of B_T^2 is sigma_high^2 T",
        "description": "tree oracle, exact up to rounding",
    },
    "expect.tree.concave": {
        "anchor": "G-expectation of -B_T^2 is -sigma_low^2 T",
        "description": "tree oracle, exact up to rounding",
    },
    "expect.tree.linear": {
        "anchor": "G-expectation of B_T is 0",
        "description": "every volatility policy gives a mean-zero walk",
    },
    "expect.tree.reduction": {
        "anchor": "zero-generator G-BSDE is the G-expectation",
        "description": "tree solve with f = g = 0 against the sublinear expectation, bitwise",
    },
    "expect.lattice.convex": {
        "anchor": "G-expectation of B_T^2 is sigma_high^2 T",
        "description": "lattice value, relative error",
    },
    "expect.lattice.concave": {
        "anchor": "G-expectation of -B_T^2 is -sigma_low^2 T",
        "description": "lattice value, relative error",
    },
    "solve.boundary_weight": {
        "anchor": "lattice domain large enough",
        "description": "largest probability that the origin reads extrapolated boundary data",
    },
    "solve.k_residual": {
        "anchor": "compensator K is non-increasing",
        "description": "largest per-node K residual on the lattice, must be <= 0",
    },
    "solve.tree.matched": {
        "anchor": "lattice agrees with the scenario tree",
        "description": "|lattice Y0 - tree Y0| on a grid containing every tree node",
    },
    "solve.tree.interpolated": {
        "anchor": "lattice agrees with the scenario tree",
        "description": "|lattice Y0 - tree Y0| on a generic interpolating grid",
    },
    "solve.k_martingale": {
        "anchor": "K is a decreasing G-martingale with K_0 = 0",
        "description": "max of the pathwise increase and |E_t[K_T] - K_t| on the tree",
    },
    "solve.k_martingale.mixed": {
        "anchor": "K is a decreasing G-martingale with K_0 = 0",
        "description": "same check for terminal x^2 1{x<0} where K is not zero",
    },
    "solve.policy_dominance": {
        "anchor": "adversarial value dominates every constant volatility",
        "description": "largest constant-sigma value minus the tree root",
    },
    "props.precondition": {
        "anchor": "modulus of continuity is admissible",
        "description": "phi(0) = 0, non-decreasing, sub-additive, linear growth",
    },
    "props.linear_growth": {
        "anchor": "approximants have linear growth",
        "description": "worst violation over samples, components and directions",
    },
    "props.monotone_in_n": {
        "anchor": "lower approximants increase and upper approximants decrease in n",
        "description": "worst violation against the next rung",
    },
    "props.lipschitz": {
        "anchor": "approximants are Lipschitz in (y, z)",
        "description": "constants u(t) and n v(t)",
    },
    "props.modulus": {
        "anchor": "approximants keep the modulus in z",
        "description": "|approx(z) - approx(z')| <= v phi(|z - z'|)",
    },
    "props.gap_bound": {
        "anchor": "approximant gap bound",
        "description": "distance to the generator at most v phi(2L/(n-L))",
    },
    "props.convergence": {
        "anchor": "approximants converge to the generator",
        "description": "along (y + 1/n, z + 1/n)",
    },
    "sandwich.lower_le_upper": {
        "anchor": "monotone sandwich of approximating solutions",
        "description": "lower(n) <= upper(n) at every interior node, no slack",
    },
    "sandwich.lower_increasing": {
        "anchor": "monotone sandwich of approximating solutions",
        "description": "lower(n) <= lower(n') for n < n'",
    },
    "sandwich.upper_decreasing": {
        "anchor": "monotone sandwich of approximating solutions",
        "description": "upper(n') <= upper(n) for n < n'",
    },
    "sandwich.uniform_bound": {
        "anchor": "approximating solutions are uniformly bounded",
        "description": "largest sup-norm over the ladder divided by the smallest",
    },
    "convergence.origin_gap": {
        "anchor": "approximating solutions share one limit",
        "description": "upper - lower at the origin shrinks along the ladder",
    },
    "convergence.lower_cauchy": {
        "anchor": "approximating solutions share one limit",
        "description": "consecutive lower values differ by at most the gap",
    },
    "convergence.upper_cauchy": {
        "anchor": "approximating solutions share one limit",
        "description": "consecutive upper values differ by at most the gap",
    },
    "convergence.mismatch": {
        "anchor": "approximating solutions share one limit",
        "description": "generator-mismatch integral shrinks along the ladder",
    },
    "gap.ratio": {
        "anchor": "gap between approximating solutions is controlled",
        "description": "gap(n) / phi(2L/(n-L)) grows by at most the configured factor per rung",
    },
    "gap.ratio_spread": {
        "anchor": "gap between approximating solutions is controlled",
        "description": "max/min of the ratios after the first rung; fails only when a later ratio rises above an earlier one by more than the factor",
    },
    "gap.decreasing": {
        "anchor": "gap between approximating solutions is controlled",
        "description": "gap at the last rung below the gap at the first",
    },
    "compare.tree": {
        "anchor": "comparison of ordered data",
        "description": "largest Y1 - Y2 over all tree nodes for the catalog pair",
    },
    "compare.lattice": {
        "anchor": "comparison of ordered data",
        "description": "largest Y1 - Y2 over interior lattice nodes for the catalog pair",
    },
    "compare.tree.random": {
        "anchor": "comparison of ordered data",
        "description": "largest Y1 - Y2 over tree nodes and random ordered pairs",
    },
    "compare.lattice.random": {
        "anchor": "comparison of ordered data",
        "description": "largest Y1 - Y2 over interior lattice nodes and random ordered pairs",
    },
    "linear_rep.agreement": {
        "anchor": "linear G-BSDE representation through Gamma",
        "description": "|y_dp - y_gamma| on the tree",
    },
    "linear_rep.closed_form": {
        "anchor": "linear G-BSDE representation through Gamma",
        "description": "tree value against discrete compounding",
    },
    "cross_check.origin": {
        "anchor": "nonlinear Feynman-Kac consistency",
        "description": "|lattice Y0 - PDE u(0,0)|",
    },
    "cross_check.origin.indicative": {
        "anchor": "nonlinear Feynman-Kac consistency (indicative)",
        "description": "same comparison for a raw non-Lipschitz generator",
    },
    "qv_bound.holds": {
        "anchor": "integral of eta d<B> at most sigma_high^2 times integral of eta dt",
        "description": "worst path violation for a nonnegative eta",
    },
    "qv_bound.equality": {
        "anchor": "integral of eta d<B> at most sigma_high^2 times integral of eta dt",
        "description": "|margin| when only sigma_high is allowed",
    },
    "norms.bounded": {
        "anchor": "a-priori estimates uniform in n",
        "description": "largest norm over the ladder divided by the first rung",
    },
    "error": {
        "anchor": "stage completed",
        "description": "a stage raised an error and produced no checks",
    },
}


def make_record(check_id, value, bound, n=None, margin=None, passed=None):
    """CheckRecord with the anchor looked up from CHECK_METADATA.

    Ids may carry qualifiers after a registered prefix ("qv_bound.holds.linear");
    ids ending in ".error" map to the error entry.
    """
    parts = check_id.split(".")
    while parts and ".".join(parts) not in CHECK_METADATA:
        parts.pop()
    key = ".".join(parts) if parts else "error"
    anchor = CHECK_METADATA[key]["anchor"]
    return CheckRecord(check_id, anchor, value, bound,
                       None if n is None else int(n), margin, passed)


class ReportStorageHandler:
    """Writes run reports as report.json and checks.csv under one output directory."""

    def __init__(self, out_dir="results"):
        self.out_dir = Path(out_dir)

    def store_report(self, report):
        self.out_dir.mkdir(parents=True, exist_ok=True)
        with open(self.out_dir / "report.json", "w") as f:
            json.dump(report.to_dict(), f, indent=2)
        table = pd.DataFrame([r.row() for r in report.records], columns=COLUMNS)
        table["n"] = table["n"].astype("Int64")
        table.to_csv(self.out_dir / "checks.csv", index=False, float_format="%.17g")
        return self.out_dir

    def store_solution(self, solution, name="solution.npz"):
        """Save the lattice surfaces Y, Z and K residual with their grids."""
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / name
        np.savez(path, Y=solution.Y, Z=solution.Z, K_residual=solution.K_residual,
                 x=solution.x, times=solution.times, sigmas=solution.sigmas)
        return path

    def load_report(self):
        with open(self.out_dir / "report.json", "r") as f:
            return RunReport.from_dict(json.load(f))

    def load_checks(self):
        return pd.read_csv(self.out_dir / "checks.csv")
