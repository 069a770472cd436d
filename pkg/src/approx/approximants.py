"""Inf-/sup-convolution Lipschitz approximants of a generator.

For phi = f or g and an index n > L:

    lower_n(t, y, z) = inf_q { phi(t, y, q) + n v(t) |z - q| } - phi(t, 0, 0)
    upper_n(t, y, z) = sup_q { phi(t, y, q) - n v(t) |z - q| } - phi(t, 0, 0)

The infimum over q is taken on a finite symmetric grid centred at z plus
the point 0. The grid radius is radius_factor times the reach of the
modulus: a search point at distance d moves phi by at most v phi_mod(d)
and pays n v d for the cone, so once n d > phi_mod(d) it cannot beat
q = z. The reach never exceeds 2L/(n-L), where the linear growth of
phi_mod alone rules a search point out.
"""

import threading
from collections import OrderedDict
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Optional

import numpy as np

from src.core.errors import InvalidLadder, NonFinite
from src.model.types import Generator

# Rows per vectorised q-search chunk are chosen so a chunk holds at most
# this many search values.
CHUNK_ELEMENTS = 1 << 17

# Log-spaced cells scanned when locating the reach of a modulus.
REACH_CELLS = 4096
REACH_FLOOR = 1e-12


class Direction(Enum):
    LOWER = "lower"
    UPPER = "upper"


@dataclass(frozen=True)
class QSearchConfig:
    """Finite q-grid standing in for the infimum over rational q.

    ``modulus_reach`` shrinks the window from 2L/(n-L) to the reach of the
    modulus and skips search points beyond it; the result is the same as a search
    over every point of the shrunken grid.
    """

    radius_factor: float = 2.0
    grid_points: int = 2001
    modulus_reach: bool = True

    def __post_init__(self):
        if self.radius_factor < 1.0:
            raise ValueError("radius_factor must be >= 1")
        if self.grid_points < 3 or self.grid_points % 2 == 0:
            raise ValueError("grid_points must be odd and >= 3 so q = z is on the grid")

    def unit_offsets(self):
        """Offsets in [-1, 1] with an exact 0 at the centre."""
        half = (self.grid_points - 1) // 2
        return np.arange(-half, half + 1, dtype=float) / half


@dataclass(frozen=True)
class ApproxGenerator:
    """Index-n approximant of ``base`` in one direction."""

    base: Generator
    n: int
    direction: Direction
    search: QSearchConfig = QSearchConfig()

    def __post_init__(self):
        L = self.base.modulus.normalized_L
        if not self.n > L:
            raise InvalidLadder(f"n={self.n} must exceed L={L:g}")

    @property
    def L(self):
        return self.base.modulus.normalized_L

    @property
    def outer_radius(self):
        return 2.0 * self.L / (self.n - self.L)

    @cached_property
    def reach(self):
        """Largest |q - z| at which a search point can still beat q = z.

        Scans (0, outer_radius] in log-spaced cells; a cell [a, b] is ruled
        out when n a > phi_mod(b), which is exact for any non-decreasing
        modulus.
        """
        outer = self.outer_radius
        if not self.search.modulus_reach:
            return outer
        d = outer * np.geomspace(REACH_FLOOR, 1.0, REACH_CELLS + 1)
        phi = np.asarray(self.base.modulus.phi(d), dtype=float)
        live = self.n * d[:-1] <= phi[1:]
        return float(d[1:][live][-1]) if live.any() else float(d[0])

    @property
    def window_radius(self):
        return self.search.radius_factor * self.reach

    @property
    def grid_step(self):
        return 2.0 * self.window_radius / (self.search.grid_points - 1)

    def offsets(self):
        return self.window_radius * self.search.unit_offsets()

    def live_offsets(self, offsets=None):
        """The search offsets that can still beat q = z."""
        offsets = self.offsets() if offsets is None else np.asarray(offsets, dtype=float)
        if not self.search.modulus_reach:
            return offsets
        return offsets[np.abs(offsets) <= self.reach]

    def grid_slack(self, t):
        """Most the q-grid can miss the true infimum (or supremum) by."""
        h = self.grid_step
        v = _coeff(self.base.coeff.v, t)
        return self.n * v * h + v * float(self.base.modulus.phi(np.asarray(h)))

    def evaluate(self, which, t, y, z, offsets=None, plan=None):
        """Approximant value (without phi_0 added back) at (t, y, z)."""
        return _search(self, which, t, y, z, offsets, plan)[self.direction]


def lower_approx(ag, which, t, y, z, offsets=None):
    """Lower (inf-convolution) approximant of ``which`` in {"f", "g"}."""
    if ag.direction is not Direction.LOWER:
        raise ValueError("lower_approx needs a Direction.LOWER approximant")
    return ag.evaluate(which, t, y, z, offsets)


def upper_approx(ag, which, t, y, z, offsets=None):
    """Upper (sup-convolution) approximant of ``which`` in {"f", "g"}."""
    if ag.direction is not Direction.UPPER:
        raise ValueError("upper_approx needs a Direction.UPPER approximant")
    return ag.evaluate(which, t, y, z, offsets)


def bracket(ag, which, t, y, z, offsets=None):
    """(lower_n, upper_n) at the same points from one pass over the q-grid."""
    both = _search(ag, which, t, y, z, offsets, None, both=True)
    return both[Direction.LOWER], both[Direction.UPPER]


def gap_bound(ag, t):
    """v(t) * phi(2L/(n-L)), the distance of either approximant to phi - phi_0."""
    arg = 2.0 * ag.L / (ag.n - ag.L)
    return _coeff(ag.base.coeff.v, t) * float(ag.base.modulus.phi(np.asarray(arg)))


def growth_envelope(gen, t, y, z):
    """R(t, y, z) = L (u(t)|y| + v(t)|z| + v(t)), the linear-growth envelope."""
    L = gen.modulus.normalized_L
    u = _coeff(gen.coeff.u, t)
    v = _coeff(gen.coeff.v, t)
    return L * (u * np.abs(y) + v * np.abs(z) + v)


@dataclass(frozen=True)
class SearchPlan:
    """Everything a q-search needs that depends only on (component, n, t)."""

    offsets: np.ndarray
    cone: np.ndarray
    slope: float
    phi0: float

    @classmethod
    def build(cls, ag, which, t):
        offsets = ag.live_offsets()
        slope = ag.n * _coeff(ag.base.coeff.v, float(t))
        cone = slope * np.abs(offsets)
        offsets.setflags(write=False)
        cone.setflags(write=False)
        return cls(offsets, cone, slope, float(ag.base.value_at_origin(which, float(t))))


def _search(ag, which, t, y, z, offsets=None, plan=None, both=False):
    phi = ag.base.component(which)
    t, y, z = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (t, y, z)))
    shape = t.shape
    t, y, z = t.ravel(), y.ravel(), z.ravel()
    if plan is None:
        live = ag.live_offsets(offsets)
        slope = _coeff(ag.base.coeff.v, t) * ag.n
        phi0 = np.broadcast_to(np.asarray(ag.base.value_at_origin(which, t), dtype=float), t.shape)
        cone = None
    else:
        live, slope, phi0, cone = plan.offsets, plan.slope, plan.phi0, plan.cone

    directions = list(Direction) if both else [ag.direction]
    out = {d: np.empty_like(t) for d in directions}
    step = max(1, CHUNK_ELEMENTS // max(1, live.size))
    for start in range(0, t.size, step):
        sl = slice(start, start + step)
        ts, ys, zs = t[sl, None], y[sl, None], z[sl, None]
        rows = zs.shape[0]
        values = np.broadcast_to(np.asarray(phi(ts, ys, zs + live), dtype=float), (rows, live.size))
        origin = np.broadcast_to(np.asarray(phi(ts, ys, np.zeros_like(zs)), dtype=float), (rows, 1))
        if not (np.all(np.isfinite(values)) and np.all(np.isfinite(origin))):
            raise NonFinite(f"{which} is not finite on the q-search grid")
        s = slope[sl, None] if np.ndim(slope) else slope
        c = cone if cone is not None else s * np.abs(live)
        to_origin = (s * np.abs(zs))[:, 0]
        if Direction.LOWER in out:
            out[Direction.LOWER][sl] = np.minimum((values + c).min(axis=1), origin[:, 0] + to_origin)
        if Direction.UPPER in out:
            out[Direction.UPPER][sl] = np.maximum((values - c).max(axis=1), origin[:, 0] - to_origin)
    for d in directions:
        out[d] = out[d] - phi0
        out[d] = out[d].reshape(shape) if shape else float(out[d][0])
    return out


def _coeff(fn, t):
    t = np.asarray(t, dtype=float)
    value = np.broadcast_to(np.asarray(fn(t), dtype=float), t.shape)
    return value.copy() if t.shape else float(value)


@dataclass(frozen=True)
class SolveMode:
    """Which generator a solver uses: the raw one or an index-n approximant."""

    kind: str = "raw"
    n: Optional[int] = None

    @classmethod
    def raw(cls):
        return cls("raw", None)

    @classmethod
    def lower(cls, n):
        return cls("lower", int(n))

    @classmethod
    def upper(cls, n):
        return cls("upper", int(n))

    @property
    def label(self):
        return self.kind if self.n is None else f"{self.kind}({self.n})"

    @property
    def direction(self):
        return {"lower": Direction.LOWER, "upper": Direction.UPPER}.get(self.kind)


class ApproximantMemo:
    """Thread-safe LRU cache of search plans per (component, n, time slice).

    A plan does not depend on the direction, so the lower and upper solves
    of one rung share it, as do the volatility levels of a step and the
    worker threads. Identical keys always map to identical plans, so
    concurrent writers simply overwrite each other.
    """

    def __init__(self, max_entries=4096):
        self.max_entries = max_entries
        self._entries = OrderedDict()
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    @staticmethod
    def key(which, ag, t):
        return (which, ag.base, ag.n, ag.search, round(float(t), 12))

    def plan(self, ag, which, t):
        key = self.key(which, ag, t)
        with self._lock:
            plan = self._entries.get(key)
            if plan is not None:
                self.hits += 1
                self._entries.move_to_end(key)
                return plan
            self.misses += 1
        plan = SearchPlan.build(ag, which, t)
        with self._lock:
            self._entries[key] = plan
            while len(self._entries) > self.max_entries:
                self._entries.popitem(last=False)
        return plan

    def __len__(self):
        return len(self._entries)


def effective_generator(gen, mode, search=None, memo=None):
    """Generator actually driving a solve in ``mode``.

    Raw mode returns ``gen`` itself; approximant modes return
    approximant + phi_0 for both components.
    """
    if mode.kind == "raw":
        return gen
    ag = ApproxGenerator(gen, mode.n, mode.direction, search or QSearchConfig())

    def component(which):
        def evaluate(t, y, z):
            if memo is None or np.ndim(t) != 0:
                value = ag.evaluate(which, t, y, z)
                return value + gen.value_at_origin(which, np.broadcast_to(np.asarray(t, dtype=float),
                                                                          np.shape(value)))
            plan = memo.plan(ag, which, t)
            return ag.evaluate(which, t, y, z, plan=plan) + plan.phi0
        return evaluate

    return Generator(f=component("f"), g=component("g"), coeff=gen.coeff,
                     modulus=gen.modulus, f0=gen.f0, g0=gen.g0)
