"""Projected-gradient search for the social-optimum departure pattern."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .gradient import objective, objective_and_gradient
from .model import BathtubError, CostParams, DemandProfile, Grid, InitialState, SpeedFunction, feasible_mass_check
from .projection import project

RULES = ("spectral", "divergent_series", "fixed", "halving")


@dataclass(frozen=True)
class StepSchedule:
    """Step rule for ``f <- P[f - theta * grad]``.

    * ``divergent_series``: ``theta0 / k`` at iteration ``k``, always accepted
    * ``fixed``: ``theta0`` throughout
    * ``halving``: ``theta0`` until a step raises the objective, then the step
      is retried at half length until it does not
    * ``spectral``: Barzilai-Borwein step ``<s, s> / <s, y>`` from the last two
      iterates, with a backtracking search along ``P[f - theta * grad] - f``
      that accepts once the objective is below the worst of the last
      ``memory`` values by a sufficient margin

    ``theta0=None`` picks a scale from the scenario (see ``default_theta0``).
    """

    theta0: float | None = None
    rule: str = "spectral"
    memory: int = 10
    theta_bounds: tuple[float, float] = (1e-8, 1e4)

    def __post_init__(self):
        if self.rule not in RULES:
            raise BathtubError("config_error", f"unknown step rule {self.rule!r}")
        if self.theta0 is not None and not self.theta0 > 0:
            raise BathtubError("config_error", "theta0 must be > 0")
        if self.memory < 1:
            raise BathtubError("config_error", "memory must be >= 1")

    def step(self, theta0: float, iteration: int) -> float:
        if self.rule == "divergent_series":
            return theta0 / iteration
        return theta0


@dataclass
class IterationRecord:
    iteration: int
    objective: float
    best: float
    residual: float
    step: float
    seconds: float
    evaluations: int = 0


@dataclass
class OptimizationHistory:
    records: list[IterationRecord] = field(default_factory=list)
    f_final: np.ndarray | None = None
    trajectories: list[np.ndarray] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    @property
    def best_objective(self) -> float:
        return self.records[-1].best if self.records else float("nan")


def initial_solution(demand: DemandProfile, speed: SpeedFunction, grid: Grid) -> np.ndarray:
    """Free-flow pattern: each row departs so that it would arrive on time at ``v_max``.

    Longer trips therefore start earlier. Departures are clamped to the horizon.
    """
    m = demand.counts
    t_dep = grid.ta[:, None] - grid.x_mid[None, :] / speed.v_max
    n = np.clip(np.floor(t_dep / grid.dt), 0, grid.n_time - 1).astype(int)
    f = np.zeros(grid.shape)
    k, l = np.indices(m.shape)
    f[k, l, n] = m
    return f


def random_feasible(demand: DemandProfile, grid: Grid, rng: np.random.Generator) -> np.ndarray:
    """Random feasible pattern with Dirichlet-distributed rows."""
    w = rng.dirichlet(np.ones(grid.n_time), size=demand.counts.shape)
    return w * demand.counts[..., None]


def stationarity_residual(f, grad, m, theta_ref: float) -> float:
    """``||f - P[f - theta_ref * grad]||``; zero exactly at first-order stationary points."""
    f = np.asarray(f, dtype=float)
    return float(np.linalg.norm(f - project(f - theta_ref * np.asarray(grad), m)))


def default_theta0(demand: DemandProfile, params: CostParams, grid: Grid) -> float:
    """Step that shifts a typical row by about its own mass for a one-cell cost gap.

    Neighbouring departure cells differ in schedule cost by about
    ``beta * dt``, so ``theta0 = mean row mass / (beta * dt)``.
    """
    live = demand.counts[demand.counts > 0]
    if live.size == 0:
        return 1.0
    return float(live.mean() / (params.beta * grid.dt))


def evaluate_baseline(f_candidate, demand: DemandProfile, init: InitialState, speed: SpeedFunction,
                      params: CostParams, grid: Grid) -> float:
    """Full nonlinear objective of a feasible candidate pattern."""
    if not feasible_mass_check(f_candidate, demand, 1e-9):
        raise BathtubError("infeasible_baseline", "candidate pattern violates the demand constraints")
    return objective(f_candidate, init, speed, params, grid)


def optimize(demand: DemandProfile, init: InitialState, speed: SpeedFunction, params: CostParams,
             grid: Grid, schedule: StepSchedule | None = None, max_iter: int = 100,
             stop_tol: float | None = None, f0=None, keep_trajectories: bool = False,
             clock: Callable[[], float] | None = time.perf_counter,
             callback: Callable[[int, np.ndarray], None] | None = None):
    """Projected gradient descent; returns the best iterate and the iteration history.

    One history record per iterate. ``max_iter`` bounds the number of moves;
    the ``halving`` and ``spectral`` rules may evaluate the objective more
    than once per move (``IterationRecord.evaluations`` counts them). Stops
    once the stationarity residual falls to ``stop_tol`` (default ``1e-4``
    times the first residual). ``clock=None`` records zero timings so that the
    history is reproducible byte for byte. ``callback(iteration, f)`` sees
    every iterate.
    """
    schedule = schedule or StepSchedule()
    m = demand.counts
    theta0 = schedule.theta0 if schedule.theta0 is not None else default_theta0(demand, params, grid)
    theta_ref = 1.0 / params.alpha
    lo, hi = schedule.theta_bounds
    f = project(initial_solution(demand, speed, grid) if f0 is None else np.asarray(f0, dtype=float), m)

    def evaluate(x):
        nonlocal n_eval
        n_eval += 1
        return objective_and_gradient(x, init, speed, params, grid)

    hist = OptimizationHistory()
    start = clock() if clock else 0.0
    n_eval = 0
    obj, grad, state, _ = evaluate(f)
    best, f_best = np.inf, f
    tol = stop_tol
    theta = theta0
    recent = []
    for it in range(1, max_iter + 1):
        res = stationarity_residual(f, grad, m, theta_ref)
        if obj < best:
            best, f_best = obj, f
        if tol is None:
            tol = 1e-4 * res
        if keep_trajectories:
            hist.trajectories.append(state.trajectory())
        if callback is not None:
            callback(it, f)
        if schedule.rule in ("divergent_series", "fixed"):
            theta = schedule.step(theta0, it)
        hist.records.append(IterationRecord(it, obj, best, res, theta,
                                            (clock() - start) if clock else 0.0, n_eval))
        if res <= tol or it == max_iter:
            break
        recent = (recent + [obj])[-schedule.memory:]

        if schedule.rule == "spectral":
            d = project(f - theta * grad, m) - f
            slope = float(np.sum(grad * d))
            ref = max(recent)
            lam = 1.0
            while True:
                f_new = f + lam * d
                obj_new, grad_new, state_new, _ = evaluate(f_new)
                if obj_new <= ref + 1e-4 * lam * slope or lam < 1e-8:
                    break
                lam *= 0.5
            s, y = f_new - f, grad_new - grad
            sy = float(np.sum(s * y))
            theta = float(np.clip(np.sum(s * s) / sy, lo, hi)) if sy > 0 else hi
        else:
            while True:
                f_new = project(f - theta * grad, m)
                obj_new, grad_new, state_new, _ = evaluate(f_new)
                if schedule.rule != "halving" or obj_new <= obj or theta < lo:
                    break
                theta *= 0.5
        f, obj, grad, state = f_new, obj_new, grad_new, state_new
    hist.f_final = f_best
    return f_best, hist


def optimize_multistart(demand: DemandProfile, init: InitialState, speed: SpeedFunction,
                        params: CostParams, grid: Grid, n_starts: int = 4, seed: int = 0,
                        perturbation: float | None = None, **kwargs):
    """Run from the free-flow start and ``n_starts - 1`` seeded perturbations of it; keep the best.

    Start ``s`` mixes the free-flow pattern with a random feasible one at
    weight ``perturbation`` or, by default, at weights graded from 0 to 1 so
    that the last start is fully random. Returns the best pattern and its
    history.
    """
    rng = np.random.default_rng(seed)
    base = initial_solution(demand, speed, grid)
    best = None
    for s in range(n_starts):
        w = perturbation if perturbation is not None else s / max(n_starts - 1, 1)
        f0 = base if s == 0 else (1 - w) * base + w * random_feasible(demand, grid, rng)
        f, hist = optimize(demand, init, speed, params, grid, f0=f0, **kwargs)
        if best is None or hist.best_objective < best[1].best_objective:
            best = (f, hist)
    return best
