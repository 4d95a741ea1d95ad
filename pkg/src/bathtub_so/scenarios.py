"""Scenario container and built-in synthetic scenarios."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import SupplyConstraint
from .model import (CostParams, DemandProfile, Grid, InitialState, SpeedFunction, Violation,
                    validate_scenario)

HOUR = 3600.0


@dataclass(frozen=True)
class Scenario:
    grid: Grid
    demand: DemandProfile
    init: InitialState
    speed: SpeedFunction
    params: CostParams
    supply: SupplyConstraint | None = None
    label: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def validate(self) -> list[Violation]:
        return validate_scenario(self.grid, self.demand, self.init, self.speed, self.params)

    @property
    def args(self):
        """``(demand, init, speed, params, grid)`` in the order the optimizer takes them."""
        return self.demand, self.init, self.speed, self.params, self.grid


def sampled_speed(v_max: float, v_min: float, jam: float, n_segments: int = 24) -> SpeedFunction:
    """Piecewise-linear interpolant of ``v_min + (v_max - v_min) * (1 - H / jam)^2``.

    Many short segments keep the jumps of ``V'`` small, which the projected
    gradient iteration is sensitive to.
    """
    h = np.linspace(0.0, jam, n_segments + 1)
    v = v_min + (v_max - v_min) * (1.0 - h / jam) ** 2
    return SpeedFunction(tuple(zip(h, v)), v_min=v_min, v_max=v_max)


# desired-arrival classes 8:00 / 8:30 / 9:00 by trip-length band
PARIS_SHARES = {(0.0, 18e3): (0.12, 0.20, 0.08), (18e3, 42e3): (0.18, 0.30, 0.12)}


def band_demand(grid: Grid, shares: dict, total: float) -> np.ndarray:
    """Spread each band's share uniformly over the length cells it covers."""
    m = np.zeros((grid.n_classes, grid.n_length))
    edges = grid.x_edges
    for (lo, hi), per_class in shares.items():
        overlap = np.clip(np.minimum(edges[1:], hi) - np.maximum(edges[:-1], lo), 0.0, None) / (hi - lo)
        m += total * np.outer(per_class, overlap)
    return m


def paris_scaled(total: float = 1e4, dt: float = 120.0, dx: float = 3000.0,
                 params: CostParams | None = None) -> Scenario:
    """Three arrival classes, two uniform length bands; the clock starts at 6:00.

    The speed function is expressed in fractions of the total demand so the
    congestion level does not depend on ``total``.
    """
    t_end = 4.5 * HOUR
    grid = Grid(t_end=t_end, n_time=int(round(t_end / dt)), x_max=42e3,
                n_length=int(round(42e3 / dx)), arrival_times=(2 * HOUR, 2.5 * HOUR, 3 * HOUR))
    m = band_demand(grid, PARIS_SHARES, total)
    speed = sampled_speed(13.28, 1.0, jam=4.0 * total)
    return Scenario(grid, DemandProfile(m), InitialState.empty(grid), speed,
                    params or CostParams.lyon(), label=f"paris-scaled(total={total:g})")


def lyon_like(total: float = 5000.0, seed: int = 0, dt: float = 120.0, dx: float = 500.0) -> Scenario:
    """Seven arrival classes every half hour from 7:00, short log-normal trip lengths.

    Class shares follow the reported Lyon North split; trip lengths have a
    mean near 2.6 km. The clock starts at 6:00.
    """
    rng = np.random.default_rng(seed)
    shares = np.array([13.73, 13.84, 15.42, 18.30, 15.05, 11.82, 11.84]) / 100.0
    t_end = 5.0 * HOUR
    grid = Grid(t_end=t_end, n_time=int(round(t_end / dt)), x_max=8e3, n_length=int(round(8e3 / dx)),
                arrival_times=tuple(HOUR + 0.5 * HOUR * i for i in range(7)))
    lengths = rng.lognormal(np.log(2.3e3), 0.5, size=200_000)
    hist, _ = np.histogram(np.clip(lengths, 0, grid.x_max - 1e-9), bins=grid.x_edges)
    m = total * np.outer(shares, hist / hist.sum())
    speed = SpeedFunction(((0.0, 13.28), (0.05 * total, 8.0), (0.12 * total, 3.0), (0.2 * total, 1.0)),
                          v_min=0.5, v_max=13.28)
    return Scenario(grid, DemandProfile(m), InitialState.empty(grid), speed, CostParams.lyon(),
                    label=f"lyon-like(total={total:g}, seed={seed})")


def constant_speed(speed: float = 10.0, n_classes: int = 3, n_length: int = 5, n_time: int = 60,
                   dt: float = 100.0, dx: float = 1000.0, total: float = 3000.0) -> Scenario:
    """Load-independent speed: every trip's cost only depends on its own departure time.

    With the defaults ``dx / speed == dt`` and the arrival times are whole
    steps, so each row has a time cell whose centre departure arrives exactly
    on time and the optimum costs ``alpha * sum(m * x_mid / speed)``.
    """
    t_end = n_time * dt
    ta = tuple(np.linspace(0.55, 0.9, n_classes) * t_end // dt * dt)
    grid = Grid(t_end=t_end, n_time=n_time, x_max=n_length * dx, n_length=n_length, arrival_times=ta)
    m = np.full((n_classes, n_length), total / (n_classes * n_length))
    return Scenario(grid, DemandProfile(m), InitialState.empty(grid), SpeedFunction.constant(speed),
                    CostParams.lyon(), label=f"constant-speed(v={speed:g})")


BUILTIN = {"paris-scaled": paris_scaled, "lyon-like": lyon_like, "constant-speed": constant_speed}
