from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import chisquare

from bathtub_so.dynamics import solve_dynamics
from bathtub_so.model import CostParams, Grid, InitialState, SpeedFunction
from bathtub_so.optimize import initial_solution
from bathtub_so.particles import (TripSet, aggregate, initial_particles, largest_remainder, price_trips,
                                  sample_trips, simulate_particles)
from bathtub_so.scenarios import paris_scaled


def _trips(depart, length, desired=None, class_id=None):
    depart = np.asarray(depart, dtype=float)
    n = len(depart)
    return TripSet(depart=depart, desired=np.zeros(n) if desired is None else np.asarray(desired, dtype=float),
                   length=np.asarray(length, dtype=float),
                   class_id=np.zeros(n, dtype=int) if class_id is None else np.asarray(class_id),
                   weight=np.ones(n))


@given(st.lists(st.floats(0, 50), min_size=1, max_size=30), st.integers(0, 200))
def test_largest_remainder_total_and_closeness(values, total):
    values = np.array(values)
    if values.sum() > 0:
        values = values * total / values.sum()
    else:
        total = 0
    out = largest_remainder(values, total)
    assert out.sum() == total
    assert np.all(np.abs(out - values) < 1.0)
    assert np.all(out >= 0)


def test_one_particle_per_cell(small_grid):
    f = np.zeros(small_grid.shape)
    f[1, 3, 7] = 1.0
    trips = sample_trips(f, small_grid, seed=3)
    assert len(trips) == 1
    assert 700.0 <= trips.depart[0] < 800.0
    assert 3000.0 <= trips.length[0] < 4000.0
    assert trips.class_id[0] == 1 and trips.desired[0] == small_grid.ta[1]


def test_particle_total_and_class_totals(small_grid, rng):
    f = rng.uniform(0, 2.3, small_grid.shape)
    trips = sample_trips(f, small_grid, seed=0)
    assert len(trips) == round(f.sum())
    per_class = np.bincount(trips.class_id, minlength=3)
    assert np.all(np.abs(per_class - f.sum(axis=(1, 2))) < 1.0)
    weighted = sample_trips(f, small_grid, seed=0, n_particles=500)
    assert len(weighted) == 500
    assert weighted.weight.sum() == pytest.approx(f.sum())


def test_departures_uniform_within_cell(small_grid):
    f = np.zeros(small_grid.shape)
    f[0, 2, 5] = 20_000.0
    trips = sample_trips(f, small_grid, seed=11)
    for values, lo, width in ((trips.depart, 500.0, 100.0), (trips.length, 2000.0, 1000.0)):
        counts, _ = np.histogram((values - lo) / width, bins=20, range=(0.0, 1.0))
        assert chisquare(counts).pvalue > 1e-3


def test_constant_speed_arrivals():
    trips = _trips([0.0, 35.0, 120.0, 410.0], [1000.0, 250.0, 3000.0, 5.0])
    run = simulate_particles(trips, None, SpeedFunction.constant(10.0), 50.0, 1000.0)
    np.testing.assert_allclose(run.trips.arrival, trips.depart + trips.length / 10.0, rtol=1e-12)
    assert np.all(run.remaining == 0.0)


def test_no_particles_free_flow(pl_speed):
    run = simulate_particles(_trips([], []), None, pl_speed, 10.0, 100.0)
    assert np.all(run.H == 0) and np.all(run.v == pl_speed.v_max)
    assert run.trajectory.shape == (11, 3)


def test_conservation_of_particles(pl_speed, rng):
    trips = _trips(rng.uniform(0, 2000, 800), rng.uniform(100, 8000, 800))
    run = simulate_particles(trips, None, pl_speed, 20.0, 3000.0)
    arr = run.trips.arrival
    for t, H in zip(run.t, run.H):
        # H counts departed-before-t minus arrived-before-t
        assert H == np.sum(trips.depart < t) - np.sum(np.nan_to_num(arr, nan=np.inf) <= t)
    finished = np.isfinite(arr)
    assert np.all(arr[finished] >= trips.depart[finished])
    assert np.all(run.remaining[finished] == 0.0)
    assert np.all(run.remaining[~finished] > 0.0)


def test_fifo_for_equal_lengths(pl_speed, rng):
    depart = np.sort(rng.uniform(0, 1500, 300))
    run = simulate_particles(_trips(depart, np.full(300, 4000.0)), None, pl_speed, 10.0, 6000.0)
    assert np.all(np.isfinite(run.trips.arrival))
    assert np.all(np.diff(run.trips.arrival) >= 0)


def test_initial_population(ramp_init):
    parts = initial_particles(ramp_init, seed=0)
    assert len(parts) == round(ramp_init.total)
    assert np.all(parts.class_id == -1) and np.all(parts.depart == 0.0)
    assert np.all((parts.length >= 0) & (parts.length <= ramp_init.x_max))


def test_particles_converge_to_cell_solver():
    sc = paris_scaled()
    f = initial_solution(sc.demand, sc.speed, sc.grid)
    H = solve_dynamics(f, sc.init, sc.speed, sc.grid).H
    errs = []
    for n in (1_000, 10_000, 100_000):
        trips = sample_trips(f, sc.grid, seed=1, n_particles=n)
        run = simulate_particles(trips, None, sc.speed, sc.grid.dt, sc.grid.t_end)
        errs.append(np.abs(run.H - H).max() / H.max())
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 0.01


def test_aggregate_examples():
    p = CostParams(alpha=1.0, beta=0.5, gamma=2.0)
    trips = _trips([0.0, 0.0, 100.0], [1.0, 1.0, 1.0], desired=[600.0, 600.0, 1000.0], class_id=[0, 0, 1])
    priced = replace(price_trips(trips, p, arrival=[600.0, 660.0, 1000.0]), arrival=np.array([600.0, 660.0, 1000.0]))
    # on time: travel only; 60 s late: 660 + 2 * 60
    np.testing.assert_allclose(priced.cost, [600.0, 780.0, 900.0])
    rep = aggregate(priced)
    r0, r1 = rep.rows
    assert r0.count == 2 and r0.mean_cost == pytest.approx(690.0) and r0.cost_std == pytest.approx(90.0)
    assert r0.mean_abs_delay_min == pytest.approx(0.5)
    assert r1.mean_abs_delay_min == 0.0 and r1.mean_cost == 900.0
    assert rep.overall.mean_cost == pytest.approx(760.0)
    assert rep.unfinished is None


def test_unfinished_trips_are_valued_separately():
    p = CostParams(alpha=1.0, beta=0.5, gamma=2.0, terminal_penalty_rate=3.0)
    trips = _trips([0.0, 0.0], [500.0, 3000.0], desired=[100.0, 100.0])
    run = simulate_particles(trips, None, SpeedFunction.constant(10.0), 10.0, 200.0, p)
    rep = aggregate(run, p)
    assert rep.rows[0].count == 1 and rep.rows[0].mean_cost == pytest.approx(50.0 + 0.5 * 50.0)
    assert rep.unfinished.count == 1
    # 1000 m left at t_end, extrapolated arrival 300 s: 300 + 2 * 200 late + 3 * 100 past the horizon
    assert rep.unfinished.mean_cost == pytest.approx(300.0 + 400.0 + 300.0)
    assert np.isnan(rep.unfinished_trips.arrival[0])


def test_initial_population_follows_linear_density():
    init = InitialState(np.array([0.0, 2.0]), 1000.0)
    parts = initial_particles(init, seed=5)
    # cell 0 rises 0 -> 2 per metre: mean position 2/3 of the way; cell 1 falls 2 -> 0: 1/3
    for cell, mean in ((0, 2 / 3), (1, 1 / 3)):
        u = parts.length[(parts.length >= cell * 1000.0) & (parts.length < (cell + 1) * 1000.0)] / 1000.0 - cell
        assert len(u) == 1000
        assert u.mean() == pytest.approx(mean, abs=0.03)


def test_aggregate_matches_recomputation_from_records(pl_speed, rng):
    n = 400
    second = np.arange(n) >= 150
    trips = _trips(rng.uniform(0, 1500, n), rng.uniform(500, 6000, n), desired=np.where(second, 2000.0, 1500.0),
                   class_id=second.astype(int))
    p = CostParams.lyon()
    rep = aggregate(simulate_particles(trips, None, pl_speed, 10.0, 8000.0, p), p)
    recs = simulate_particles(trips, None, pl_speed, 10.0, 8000.0, p).trips.records()
    assert all(r.finished for r in recs)
    for row in rep.rows:
        mine = [r for r in recs if r.class_id == row.class_id]
        assert row.count == len(mine)
        assert row.mean_cost == pytest.approx(sum(r.cost for r in mine) / len(mine), rel=1e-12)
        assert row.mean_abs_delay_min == pytest.approx(sum(abs(r.arrival - r.desired) for r in mine) / len(mine) / 60)
