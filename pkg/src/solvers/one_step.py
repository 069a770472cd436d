"""One backward step of the volatility-adversarial scheme.

Given the values of Y one step ahead at x + s sqrt(dt) and x - s sqrt(dt)
for each volatility s, the candidate value under s is

    m = (up + down) / 2
    Z = (up - down) / (2 s sqrt(dt))
    V = m + dt f(t, y_hat, Z) + dt s^2 g(t, y_hat, Z)

with y_hat = m (explicit coupling) or the fixed point y_hat = V (implicit
coupling). The lattice and the scenario tree share this algebra; they
only differ in where ``up`` and ``down`` come from.
"""

from dataclasses import dataclass

import numpy as np

from src.core.errors import FixedPointDiverged, NonFinite, SchemeConditionError
from src.model.types import evaluation_time


@dataclass(frozen=True)
class Coupling:
    """How y enters the generator inside a step."""

    kind: str = "explicit"
    tol: float = 1e-12
    max_iter: int = 50

    def __post_init__(self):
        if self.kind not in ("explicit", "fixed_point"):
            raise ValueError(f"unknown y-coupling {self.kind!r}")


EXPLICIT = Coupling()


def backward_candidates(gen, t, dt, sigmas, up, down, coupling=EXPLICIT):
    """Candidate values V and gradients Z, one row per volatility.

    ``up`` and ``down`` have shape (len(sigmas), nodes).
    """
    sigmas = np.asarray(sigmas, dtype=float)
    up = np.asarray(up, dtype=float)
    down = np.asarray(down, dtype=float)
    V = np.empty_like(up)
    Z = np.empty_like(up)
    sqrt_dt = np.sqrt(dt)
    for k, sigma in enumerate(sigmas):
        m = 0.5 * (up[k] + down[k])
        z = (up[k] - down[k]) / (2.0 * sigma * sqrt_dt)
        var = sigma * sigma
        if coupling.kind == "explicit":
            value = m + dt * np.asarray(gen.f(t, m, z), dtype=float) \
                + dt * var * np.asarray(gen.g(t, m, z), dtype=float)
        else:
            value = _fixed_point(gen, t, dt, var, m, z, coupling)
        V[k] = value
        Z[k] = z
    if not np.all(np.isfinite(V)):
        raise NonFinite(f"backward step at t={t!r} produced a non-finite value")
    return V, Z


def _fixed_point(gen, t, dt, var, m, z, coupling):
    # Each node stops on its own criterion, so the result does not depend
    # on how the nodes are split between threads.
    y = m.copy()
    active = np.ones(y.shape, dtype=bool)
    for _ in range(coupling.max_iter):
        nxt = m + dt * np.asarray(gen.f(t, y, z), dtype=float) \
            + dt * var * np.asarray(gen.g(t, y, z), dtype=float)
        if not np.all(np.isfinite(nxt)):
            raise NonFinite(f"fixed-point iterate at t={t!r} is not finite")
        done = np.abs(nxt - y) <= coupling.tol * (1.0 + np.abs(nxt))
        y = np.where(active, nxt, y)
        active &= ~done
        if not active.any():
            return y
    raise FixedPointDiverged(
        f"y-coupling did not converge in {coupling.max_iter} iterations at t={t!r}")


def select_worst_case(V, Z):
    """Maximise over the volatility axis.

    Returns (Y, Z*, K_residual, index). Ties go to the lowest volatility
    index, which is what np.argmax does.
    """
    index = np.argmax(V, axis=0)
    cols = np.arange(V.shape[1])
    Y = V[index, cols]
    return Y, Z[index, cols], V.min(axis=0) - Y, index


def check_scheme_condition(gen, params, horizon, n_steps):
    """Require dt * u(t) * max(1, sigma_high^2) < 1 at every evaluation time.

    Under this bound the y-dependence cannot reverse the order of two
    value slices in one step.
    """
    dt = horizon / n_steps
    times = np.array([evaluation_time(i * dt, dt, gen.coeff) for i in range(n_steps)])
    u = np.broadcast_to(np.asarray(gen.coeff.u(times), dtype=float), times.shape)
    factor = dt * u * max(1.0, params.variance_high)
    if not np.all(np.isfinite(factor)) or factor.max(initial=0.0) >= 1.0:
        k = int(np.argmax(np.where(np.isfinite(factor), factor, np.inf)))
        raise SchemeConditionError(
            f"dt*u(t)*max(1,sigma_high^2) = {factor[k]:.4g} >= 1 at t={times[k]:.4g}")
