"""Trip-based (particle) simulation of the same bathtub dynamics.

Every particle carries a departure time, a desired arrival time and a trip
length, and all active particles advance at the common speed
``V(H)``. Used to cross-check the cell solver and to report per-trip
indicators (mean cost, spread, mean absolute delay per class).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .model import CostParams, Grid, InitialState, SpeedFunction


@dataclass(frozen=True)
class TripRecord:
    depart: float
    desired: float
    length: float
    arrival: float
    cost: float
    class_id: int
    weight: float = 1.0

    @property
    def finished(self) -> bool:
        return bool(np.isfinite(self.arrival))


@dataclass(frozen=True)
class TripSet:
    """Columnar trip table; ``arrival`` and ``cost`` are NaN until known.

    ``class_id == -1`` marks travellers already in the network at ``t = 0``.
    """

    depart: np.ndarray
    desired: np.ndarray
    length: np.ndarray
    class_id: np.ndarray
    weight: np.ndarray
    arrival: np.ndarray = None
    cost: np.ndarray = None

    def __post_init__(self):
        n = len(self.depart)
        for name in ("arrival", "cost"):
            if getattr(self, name) is None:
                object.__setattr__(self, name, np.full(n, np.nan))

    def __len__(self):
        return len(self.depart)

    @classmethod
    def concat(cls, parts) -> "TripSet":
        parts = list(parts)
        return cls(**{name: np.concatenate([getattr(p, name) for p in parts])
                      for name in ("depart", "desired", "length", "class_id", "weight", "arrival", "cost")})

    def records(self) -> list[TripRecord]:
        return [TripRecord(float(d), float(a), float(x), float(ta), float(c), int(k), float(w))
                for d, a, x, ta, c, k, w in zip(self.depart, self.desired, self.length, self.arrival,
                                                 self.cost, self.class_id, self.weight)]


def largest_remainder(values, total: int) -> np.ndarray:
    """Nonnegative integers with the given ``total`` and each within one of ``values``."""
    values = np.asarray(values, dtype=float)
    base = np.floor(values).astype(np.int64)
    short = int(total - base.sum())
    if short > 0:
        # stable sort keeps ties in index order so the result is deterministic
        order = np.argsort(-(values - base).ravel(), kind="stable")
        flat = base.ravel()
        flat[order[:short]] += 1
        base = flat.reshape(values.shape)
    return base


def sample_trips(f, grid: Grid, seed: int = 0, n_particles: int | None = None) -> TripSet:
    """One particle per traveller (or ``n_particles`` weighted particles).

    Fractional counts are rounded by largest remainder, first per class and
    then per cell, so the particle total is ``round(sum f)`` (or
    ``n_particles``) and class totals are within one of their exact share.
    Departure time and trip length are uniform within each (length cell,
    time cell) box.
    """
    f = np.asarray(f, dtype=float)
    mass = f.sum()
    n_total = int(round(mass)) if n_particles is None else int(n_particles)
    weight = mass / n_total if n_total and n_particles is not None else 1.0
    scaled = f * (n_total / mass) if mass > 0 else f
    # round class totals first so every class keeps its share, then cells within a class
    per_class = largest_remainder(scaled.sum(axis=(1, 2)), n_total)
    counts = np.stack([largest_remainder(scaled[k], per_class[k]) for k in range(len(per_class))])
    k, l, n = np.nonzero(counts)
    reps = counts[k, l, n]
    k, l, n = (np.repeat(a, reps) for a in (k, l, n))
    rng = np.random.default_rng(seed)
    u = rng.random((2, len(k)))
    return TripSet(depart=(n + u[0]) * grid.dt, desired=grid.ta[k], length=(l + u[1]) * grid.dx,
                   class_id=k.astype(int), weight=np.full(len(k), weight))


def initial_particles(init: InitialState, seed: int = 0, weight: float = 1.0) -> TripSet:
    """Particles for the travellers present at ``t = 0``, drawn from the piecewise-linear density."""
    k = init.edge_density
    per_cell = 0.5 * (k[:-1] + k[1:]) * init.dx / weight
    counts = largest_remainder(per_cell, int(round(per_cell.sum())))
    l = np.repeat(np.arange(len(counts)), counts)
    rng = np.random.default_rng(seed)
    n = len(l)
    # a linear density on a cell mixes the triangles 2(1 - u) and 2u in proportion to its end values
    a, b = k[l], k[l + 1]
    r, pick = rng.random((2, n))
    u = np.where(pick * (a + b) < a, 1.0 - np.sqrt(r), np.sqrt(r))
    return TripSet(depart=np.zeros(n), desired=np.full(n, np.nan), length=(l + u) * init.dx,
                   class_id=np.full(n, -1), weight=np.full(n, weight))


@dataclass(frozen=True)
class ParticleRun:
    """Simulation output: priced trips, remaining distances and the ``(t, H, v)`` trajectory."""

    trips: TripSet
    remaining: np.ndarray
    t: np.ndarray
    H: np.ndarray
    v: np.ndarray
    t_end: float

    @property
    def trajectory(self) -> np.ndarray:
        return np.column_stack([self.t, self.H, self.v])


def simulate_particles(trips: TripSet, init_particles: TripSet | None, speed: SpeedFunction, dt: float,
                       t_end: float, params: CostParams | None = None) -> ParticleRun:
    """March all particles at the common speed on steps of ``dt`` up to ``t_end``.

    ``H_n`` counts (weighted) particles that departed before ``t_n`` and have
    not exited; the speed ``V(H_n)`` then holds over the step. A particle
    departing inside a step is credited the distance covered after its
    departure, and exits are interpolated within the step. Particles still
    travelling at ``t_end`` keep a NaN arrival; with ``params`` the finished
    trips are priced.
    """
    parts = [trips] if init_particles is None else [init_particles, trips]
    allp = TripSet.concat(parts)
    n_init = 0 if init_particles is None else len(init_particles)
    n_steps = int(round(t_end / dt))
    remaining = allp.length.astype(float).copy()
    arrival = np.full(len(allp), np.nan)
    entered = np.zeros(len(allp), dtype=bool)
    entered[:n_init] = True
    done = np.zeros(len(allp), dtype=bool)
    H = np.zeros(n_steps + 1)
    v = np.zeros(n_steps + 1)
    for n in range(n_steps + 1):
        t0 = n * dt
        active = entered & ~done
        H[n] = allp.weight[active].sum()
        v[n] = float(speed(H[n]))
        if n == n_steps:
            break
        t1 = t0 + dt
        new = ~entered & (allp.depart < t1)
        travel = np.where(new, t1 - allp.depart, dt)
        moving = active | new
        step = v[n] * travel
        exits = moving & (remaining <= step)
        start = np.where(new, allp.depart, t0)
        arrival[exits] = start[exits] + remaining[exits] / v[n]
        remaining[moving] -= step[moving]
        remaining[exits] = 0.0
        entered |= new
        done |= exits
    remaining[~entered] = allp.length[~entered]
    out = replace(allp, arrival=arrival)
    if params is not None:
        out = price_trips(out, params)
    return ParticleRun(trips=out, remaining=remaining, t=np.arange(n_steps + 1) * dt, H=H, v=v, t_end=t_end)


def price_trips(trips: TripSet, params: CostParams, arrival=None) -> TripSet:
    """Schedule cost of every trip with a known (or supplied) arrival time."""
    arrival = trips.arrival if arrival is None else np.asarray(arrival, dtype=float)
    cost = params.alpha * (arrival - trips.depart) + params.penalty(arrival - trips.desired)
    return replace(trips, cost=cost)


@dataclass(frozen=True)
class ClassReport:
    class_id: int | str
    count: float
    mean_cost: float
    cost_std: float
    mean_abs_delay_min: float


@dataclass(frozen=True)
class ParticleReport:
    rows: list[ClassReport]
    overall: ClassReport
    unfinished: ClassReport | None = None
    unfinished_trips: TripSet | None = field(default=None, repr=False)


def _summary(class_id, w, cost, delay) -> ClassReport:
    total = w.sum()
    if total == 0:
        return ClassReport(class_id, 0.0, float("nan"), float("nan"), float("nan"))
    mean = float(np.sum(w * cost) / total)
    std = float(np.sqrt(np.sum(w * (cost - mean) ** 2) / total))
    return ClassReport(class_id, float(total), mean, std, float(np.sum(w * np.abs(delay)) / total / 60.0))


def aggregate(run: ParticleRun | TripSet, params: CostParams | None = None) -> ParticleReport:
    """Weighted per-class count, mean cost, cost spread and mean absolute delay (minutes).

    Only travellers with a desired arrival (``class_id >= 0``) are reported.
    Trips unfinished at the horizon are kept out of the class rows; they are
    listed separately, valued at the arrival extrapolated with the last speed
    plus the terminal penalty of ``params``.
    """
    trips = run.trips if isinstance(run, ParticleRun) else run
    own = trips.class_id >= 0
    fin = own & np.isfinite(trips.arrival)
    rows = [_summary(int(k), trips.weight[fin & (trips.class_id == k)], trips.cost[fin & (trips.class_id == k)],
                     (trips.arrival - trips.desired)[fin & (trips.class_id == k)])
            for k in np.unique(trips.class_id[own])]
    overall = _summary("all", trips.weight[fin], trips.cost[fin], (trips.arrival - trips.desired)[fin])

    late = own & ~fin
    if not np.any(late):
        return ParticleReport(rows, overall)
    if not isinstance(run, ParticleRun) or params is None:
        return ParticleReport(rows, overall, _summary("unfinished", trips.weight[late],
                                                      np.full(late.sum(), np.nan), np.full(late.sum(), np.nan)))
    sub = replace(trips, **{name: getattr(trips, name)[late]
                            for name in ("depart", "desired", "length", "class_id", "weight", "arrival", "cost")})
    v_last = run.v[-1]
    ta_ext = np.maximum(run.t_end, sub.depart) + run.remaining[late] / v_last
    priced = price_trips(sub, params, arrival=ta_ext)
    cost = priced.cost + params.terminal_penalty_rate * np.maximum(ta_ext - run.t_end, 0.0)
    priced = replace(priced, cost=cost)
    return ParticleReport(rows, overall, _summary("unfinished", sub.weight, cost, ta_ext - sub.desired), priced)
