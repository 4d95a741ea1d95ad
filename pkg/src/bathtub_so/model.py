"""Shared value types for the bathtub departure-time model.

Arrays follow one index convention throughout the package:

* time nodes ``t_n = n * dt`` for ``n = 0..N``; time cell ``n`` is ``[t_n, t_{n+1}]``
* length edges ``x_e = e * dx`` for ``e = 0..L``; length cell ``l`` is ``[x_l, x_{l+1}]``
* a departure pattern ``f`` is a ``(K, L, N)`` array of traveller counts per
  (desired-arrival class, length cell, departure cell).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

# A departure pattern is a plain (K, L, N) float array of traveller counts.
DeparturePattern = np.ndarray


class BathtubError(ValueError):
    """Raised for contract violations; ``code`` is a stable machine-readable tag."""

    def __init__(self, code: str, message: str = ""):
        self.code = code
        super().__init__(f"{code}: {message}" if message else code)


@dataclass(frozen=True)
class Grid:
    t_end: float
    n_time: int
    x_max: float
    n_length: int
    arrival_times: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "arrival_times", tuple(float(a) for a in self.arrival_times))

    @property
    def dt(self) -> float:
        return self.t_end / self.n_time

    @property
    def dx(self) -> float:
        return self.x_max / self.n_length

    @property
    def n_classes(self) -> int:
        return len(self.arrival_times)

    @property
    def shape(self) -> tuple[int, int, int]:
        """Shape ``(K, L, N)`` of a departure pattern on this grid."""
        return (self.n_classes, self.n_length, self.n_time)

    @property
    def t_nodes(self) -> np.ndarray:
        return np.arange(self.n_time + 1) * self.dt

    @property
    def x_edges(self) -> np.ndarray:
        return np.arange(self.n_length + 1) * self.dx

    @property
    def x_mid(self) -> np.ndarray:
        """Representative trip length of each length cell (cell centre)."""
        return (np.arange(self.n_length) + 0.5) * self.dx

    @property
    def ta(self) -> np.ndarray:
        return np.asarray(self.arrival_times, dtype=float)


@dataclass(frozen=True)
class SpeedFunction:
    """Piecewise-linear nonincreasing speed ``V(H)`` clamped to ``[v_min, v_max]``.

    Outside the breakpoint range the first/last breakpoint speed is held
    constant. ``derivative`` returns the left derivative at interior
    breakpoints and the right derivative at the first one.
    """

    breakpoints: tuple[tuple[float, float], ...]
    v_min: float
    v_max: float

    def __post_init__(self):
        bps = tuple((float(h), float(v)) for h, v in self.breakpoints)
        object.__setattr__(self, "breakpoints", bps)

    @classmethod
    def constant(cls, speed: float) -> "SpeedFunction":
        return cls(((0.0, speed),), v_min=speed, v_max=speed)

    @property
    def _h(self) -> np.ndarray:
        return np.array([b[0] for b in self.breakpoints])

    @property
    def _v(self) -> np.ndarray:
        return np.array([b[1] for b in self.breakpoints])

    def __call__(self, H):
        h, v = self._h, self._v
        out = np.interp(H, h, v) if len(h) > 1 else np.full(np.shape(H), v[0])
        out = np.clip(out, self.v_min, self.v_max)
        return float(out) if np.ndim(out) == 0 else out

    def derivative(self, H):
        H = np.asarray(H, dtype=float)
        h, v = self._h, self._v
        if len(h) < 2:
            d = np.zeros_like(H)
        else:
            slopes = np.diff(v) / np.diff(h)
            # segment j covers (h_j, h_{j+1}]; left derivative at breakpoints, except at the
            # first one where only the right side exists (an empty network still feels its first entrant)
            j = np.searchsorted(h, H, side="left") - 1
            j = np.where(H == h[0], 0, j)
            inside = (j >= 0) & (j < len(slopes))
            d = np.where(inside, slopes[np.clip(j, 0, len(slopes) - 1)], 0.0)
        raw = np.interp(H, h, v) if len(h) > 1 else np.full(H.shape, v[0])
        d = np.where((raw < self.v_min) | (raw > self.v_max), 0.0, d)
        return float(d) if d.ndim == 0 else d


@dataclass(frozen=True)
class DemandProfile:
    """Travellers ``m[k, l]`` per desired-arrival class and length cell."""

    counts: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "counts", np.asarray(self.counts, dtype=float))

    @property
    def total(self) -> float:
        return float(self.counts.sum())


@dataclass(frozen=True)
class InitialState:
    """Initial density ``k`` of remaining trip length (travellers per metre).

    ``density[e]`` is the value at length edge ``e = 0..L-1``; the density is
    zero at ``x_max`` and linear in between, so ``h(x) = int_x^{x_max} k`` is
    exact piecewise-quadratic.
    """

    density: np.ndarray
    dx: float

    def __post_init__(self):
        object.__setattr__(self, "density", np.asarray(self.density, dtype=float))

    @classmethod
    def empty(cls, grid: Grid) -> "InitialState":
        return cls(np.zeros(grid.n_length), grid.dx)

    @property
    def edge_density(self) -> np.ndarray:
        return np.append(self.density, 0.0)

    @property
    def x_max(self) -> float:
        return len(self.density) * self.dx

    @property
    def cumulative(self) -> np.ndarray:
        """``h`` at every edge ``0..L`` (trapezoid tail-sum)."""
        k = self.edge_density
        seg = 0.5 * (k[:-1] + k[1:]) * self.dx
        return np.append(np.cumsum(seg[::-1])[::-1], 0.0)

    @property
    def total(self) -> float:
        return float(self.cumulative[0])

    def k_at(self, x):
        """Density at remaining length ``x`` (zero beyond ``x_max``)."""
        return np.interp(x, np.arange(len(self.density) + 1) * self.dx, self.edge_density,
                         left=self.density[0] if len(self.density) else 0.0, right=0.0)

    def h_at(self, x):
        """Travellers with remaining length greater than ``x``."""
        x = np.asarray(x, dtype=float)
        k = self.edge_density
        H = self.cumulative
        L = len(self.density)
        xc = np.clip(x, 0.0, self.x_max)
        e = np.minimum((xc // self.dx).astype(int), max(L - 1, 0))
        s = xc - e * self.dx
        slope = (k[e + 1] - k[e]) / self.dx
        # integral of k over [x_e, x_e + s]
        partial = k[e] * s + 0.5 * slope * s * s
        out = H[e] - partial
        out = np.where(x >= self.x_max, 0.0, out)
        return float(out) if out.ndim == 0 else out


class SchedulePenalty(Protocol):
    """Convex penalty on arrival offset ``d = TA - ta`` (negative means early)."""

    def __call__(self, d: np.ndarray) -> np.ndarray: ...

    def slope(self, d: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class EarlyLatePenalty:
    beta: float
    gamma: float

    def __call__(self, d):
        return self.beta * np.maximum(-d, 0.0) + self.gamma * np.maximum(d, 0.0)

    def slope(self, d):
        # late branch on equality
        return np.where(np.asarray(d) >= 0.0, self.gamma, -self.beta)


@dataclass(frozen=True)
class CostParams:
    alpha: float
    beta: float
    gamma: float
    terminal_penalty_rate: float = 0.0
    schedule: SchedulePenalty | None = field(default=None, compare=False)

    @property
    def penalty(self) -> SchedulePenalty:
        return self.schedule if self.schedule is not None else EarlyLatePenalty(self.beta, self.gamma)

    def scaled(self, factor: float) -> "CostParams":
        return CostParams(self.alpha * factor, self.beta * factor, self.gamma * factor,
                          self.terminal_penalty_rate * factor)

    @classmethod
    def lyon(cls, k: float = 5.0, terminal_penalty_rate: float = 0.0) -> "CostParams":
        """Scheduling preferences ``alpha=1, beta=0.4+0.2k/9, gamma=1.5+k/9``."""
        return cls(1.0, 0.4 + 0.2 * k / 9.0, 1.5 + k / 9.0, terminal_penalty_rate)


@dataclass(frozen=True)
class Violation:
    code: str
    message: str


def validate_scenario(grid: Grid, demand: DemandProfile, init: InitialState,
                      speed: SpeedFunction, params: CostParams) -> list[Violation]:
    """Return every invariant violation; an empty list means the scenario is valid."""
    out: list[Violation] = []

    def bad(code, msg):
        out.append(Violation(code, msg))

    if not grid.t_end > 0 or grid.n_time < 1:
        bad("nonpositive_dt", f"t_end={grid.t_end}, n_time={grid.n_time}")
    if not grid.x_max > 0 or grid.n_length < 1:
        bad("nonpositive_dx", f"x_max={grid.x_max}, n_length={grid.n_length}")
    ta = grid.ta
    if len(ta) == 0:
        bad("no_arrival_classes", "arrival_times is empty")
    if np.any(np.diff(ta) <= 0):
        bad("arrival_times_order", "arrival_times must be strictly increasing")
    if np.any((ta < 0) | (ta > grid.t_end)):
        bad("arrival_time_range", "every arrival time must lie in [0, t_end]")

    if not speed.v_min > 0:
        bad("speed_floor", f"v_min={speed.v_min} must be > 0")
    if speed.v_min > speed.v_max:
        bad("speed_bounds", "v_min exceeds v_max")
    hs = np.array([b[0] for b in speed.breakpoints])
    vs = np.array([b[1] for b in speed.breakpoints])
    if len(hs) == 0:
        bad("speed_empty", "no speed breakpoints")
    else:
        if np.any(vs <= 0):
            bad("speed_floor", "breakpoint speed must be > 0")
        if np.any(np.diff(hs) <= 0):
            bad("speed_breakpoint_order", "accumulation breakpoints must increase")
        if np.any(np.diff(vs) > 0):
            bad("speed_increasing", "speed must be nonincreasing in accumulation")

    m = demand.counts
    if m.shape != (grid.n_classes, grid.n_length):
        bad("dimension_mismatch", f"demand shape {m.shape} != {(grid.n_classes, grid.n_length)}")
    if np.any(m < 0):
        bad("negative_demand", "demand entries must be >= 0")
    if not np.all(np.isfinite(m)):
        bad("nonfinite_demand", "demand entries must be finite")

    if init.density.shape != (grid.n_length,):
        bad("dimension_mismatch", f"initial density shape {init.density.shape} != ({grid.n_length},)")
    if not np.isclose(init.dx, grid.dx):
        bad("dimension_mismatch", "initial density dx differs from grid dx")
    if np.any(init.density < 0):
        bad("negative_density", "initial density must be >= 0")

    if not params.alpha > params.beta:
        bad("alpha_le_beta", "travel cost rate alpha must exceed earliness rate beta")
    if not params.beta > 0:
        bad("nonpositive_beta", "beta must be > 0")
    if not params.gamma > 0:
        bad("nonpositive_gamma", "gamma must be > 0")
    if params.terminal_penalty_rate < 0:
        bad("negative_terminal_rate", "terminal_penalty_rate must be >= 0")

    return sorted(out, key=lambda v: (v.code, v.message))


def feasible_mass_check(f: np.ndarray, m: DemandProfile | np.ndarray, tol: float = 1e-9) -> bool:
    """True iff ``f >= 0`` and every row sum matches the demand to ``tol * max(1, m)``."""
    m = m.counts if isinstance(m, DemandProfile) else np.asarray(m, dtype=float)
    f = np.asarray(f, dtype=float)
    if f.ndim != 3 or f.shape[:2] != m.shape:
        raise BathtubError("dimension_mismatch", f"pattern {f.shape} vs demand {m.shape}")
    if np.any(f < 0):
        return False
    return bool(np.all(np.abs(f.sum(axis=2) - m) <= tol * np.maximum(1.0, m)))
