import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from bathtub_so.dynamics import (SupplyConstraint, arrival_time, cell_fractions, exit_density, invert_z,
                                 network_outflow_demand, solve_dynamics, solve_dynamics_with_supply)
from bathtub_so.model import BathtubError, Grid, InitialState, SpeedFunction
from oracles import overlap_fraction


def _random_pattern(grid, rng, scale=3.0):
    return rng.uniform(0, scale, grid.shape)


def test_empty_network_runs_at_free_flow(small_grid, pl_speed):
    st_ = solve_dynamics(np.zeros(small_grid.shape), InitialState.empty(small_grid), pl_speed, small_grid)
    assert np.all(st_.H == 0)
    assert np.all(st_.v == 15.0)
    np.testing.assert_allclose(st_.z, small_grid.t_nodes * 15.0)


def test_constant_speed_gives_linear_distance(small_grid, ramp_init, rng):
    st_ = solve_dynamics(_random_pattern(small_grid, rng), ramp_init, SpeedFunction.constant(7.0), small_grid)
    np.testing.assert_allclose(st_.z, small_grid.t_nodes * 7.0, rtol=1e-14)


def test_single_pulse_hand_march():
    # lengths uniform in [300, 400] m, departures uniform in [0, 10] s, speed 10 m/s:
    # at t = 40 s the covered distances 10 * (40 - s) are uniform in [300, 400], so half remain
    grid = Grid(t_end=100.0, n_time=10, x_max=1000.0, n_length=10, arrival_times=(50.0,))
    f = np.zeros(grid.shape)
    f[0, 3, 0] = 80.0
    st_ = solve_dynamics(f, InitialState.empty(grid), SpeedFunction.constant(10.0), grid)
    np.testing.assert_allclose(st_.H, [0, 80, 80, 80, 40, 0, 0, 0, 0, 0, 0], atol=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_state_invariants(seed):
    rng = np.random.default_rng(seed)
    grid = Grid(t_end=3000.0, n_time=30, x_max=8000.0, n_length=8, arrival_times=(1500.0,))
    speed = SpeedFunction(((0.0, 15.0), (100.0, 9.0), (400.0, 2.0)), v_min=1.5, v_max=15.0)
    init = InitialState(rng.uniform(0, 0.02, grid.n_length), grid.dx)
    st_ = solve_dynamics(rng.uniform(0, 10, grid.shape), init, speed, grid)
    inc = np.diff(st_.z)
    assert st_.z[0] == 0.0
    assert np.all(inc >= 1.5 * grid.dt - 1e-9) and np.all(inc <= 15.0 * grid.dt + 1e-9)
    assert np.all(st_.H >= -1e-12)


def test_causality_of_accumulation(small_grid, pl_speed, ramp_init, rng):
    f = _random_pattern(small_grid, rng)
    base = solve_dynamics(f, ramp_init, pl_speed, small_grid)
    for m in (3, 17, 30):
        g = f.copy()
        g[:, :, m] += 5.0
        pert = solve_dynamics(g, ramp_init, pl_speed, small_grid)
        assert np.array_equal(pert.H[:m + 1], base.H[:m + 1])
        assert not np.array_equal(pert.H[m + 1:], base.H[m + 1:])


@given(st.floats(0.0, 12_000.0), st.floats(50.0, 3000.0))
def test_cell_fractions_match_quadrature(shift, width):
    grid = Grid(t_end=100.0, n_time=1, x_max=10_000.0, n_length=10, arrival_times=(50.0,))
    z_m, z_m1 = 0.0, width
    z_n = width + shift
    got = cell_fractions(np.array([z_n - z_m]), np.array([z_n - z_m1]), grid)[0]
    ref = [overlap_fraction(z_n, z_m, z_m1, a, grid.dx) for a in grid.x_edges[:-1]]
    np.testing.assert_allclose(got, ref, atol=1e-6)
    assert np.all((got >= 0) & (got <= 1))


def test_invert_z_examples(small_grid, pl_speed, ramp_init, rng):
    const = solve_dynamics(np.zeros(small_grid.shape), InitialState.empty(small_grid),
                           SpeedFunction.constant(5.0), small_grid)
    assert invert_z(const, 0.0) == 0.0
    assert invert_z(const, 1234.0) == pytest.approx(1234.0 / 5.0)
    st_ = solve_dynamics(_random_pattern(small_grid, rng), ramp_init, pl_speed, small_grid)
    for n in (0, 7, 25, 40):
        assert invert_z(st_, st_.z[n]) == pytest.approx(small_grid.t_nodes[n])
    # past the horizon the last speed is used
    beyond = st_.z[-1] + 3.0 * st_.v[-1]
    assert invert_z(st_, beyond) == pytest.approx(small_grid.t_end + 3.0)
    with pytest.raises(BathtubError) as err:
        invert_z(st_, -1.0)
    assert err.value.code == "domain_error"


def test_arrival_time_examples(small_grid):
    const = solve_dynamics(np.zeros(small_grid.shape), InitialState.empty(small_grid),
                           SpeedFunction.constant(8.0), small_grid)
    assert arrival_time(const, 0.0, 1234.0) == pytest.approx(1234.0)
    assert arrival_time(const, 4000.0, 300.0) == pytest.approx(300.0 + 500.0)
    ta, late = arrival_time(const, 9000.0, 3900.0, return_flag=True)
    assert late and ta == pytest.approx(3900.0 + 9000.0 / 8.0)


@given(st.integers(0, 2**32 - 1))
def test_arrival_time_fifo(seed):
    rng = np.random.default_rng(seed)
    grid = Grid(t_end=3000.0, n_time=30, x_max=8000.0, n_length=8, arrival_times=(1500.0,))
    speed = SpeedFunction(((0.0, 15.0), (100.0, 9.0), (400.0, 2.0)), v_min=1.5, v_max=15.0)
    st_ = solve_dynamics(rng.uniform(0, 10, grid.shape), InitialState.empty(grid), speed, grid)
    t = np.linspace(0, grid.t_end, 301)
    for x in (10.0, 2500.0, 7999.0):
        assert np.all(np.diff(arrival_time(st_, x, t)) >= -1e-9)
    x = np.linspace(0, grid.x_max, 101)
    for t0 in (0.0, 1234.5, 3000.0):
        assert np.all(np.diff(arrival_time(st_, x, t0)) > 0)


def test_outflow_demand_examples():
    grid = Grid(t_end=200.0, n_time=20, x_max=1000.0, n_length=10, arrival_times=(100.0,))
    c = 4.0
    zero = np.zeros(grid.shape)
    st0 = solve_dynamics(zero, InitialState.empty(grid), SpeedFunction.constant(c), grid)
    assert network_outflow_demand(st0, zero, InitialState.empty(grid), 5) == 0.0

    # uniform density k0 up to the last edge: outflow k0 * c while z stays below it
    k0 = 0.03
    init = InitialState(np.full(grid.n_length, k0), grid.dx)
    st1 = solve_dynamics(zero, init, SpeedFunction.constant(c), grid)
    for n in np.flatnonzero(st1.z <= grid.x_max - grid.dx):
        assert network_outflow_demand(st1, zero, init, n) == pytest.approx(k0 * c)

    # one departure cell with lengths in [300, 400]: exits only while 300 < c (t - s) < 400 for s in [0, 10]
    f = np.zeros(grid.shape)
    f[0, 3, 0] = 50.0
    st2 = solve_dynamics(f, InitialState.empty(grid), SpeedFunction.constant(c), grid)
    d = np.array([network_outflow_demand(st2, f, InitialState.empty(grid), n) for n in range(grid.n_time + 1)])
    t = grid.t_nodes
    assert np.all(d[(t <= 300 / c) | (t >= 10 + 400 / c)] == 0)
    assert np.all(d[(t > 10 + 300 / c) & (t < 400 / c)] > 0)
    # total outflow integrates to the injected mass
    assert np.trapezoid(d, t) == pytest.approx(50.0, rel=0.05)


def _balance_error(n_time, n_length):
    grid = Grid(t_end=3000.0, n_time=n_time, x_max=6000.0, n_length=n_length, arrival_times=(1500.0,))
    speed = SpeedFunction(((0.0, 12.0), (300.0, 6.0), (800.0, 2.0)), v_min=2.0, v_max=12.0)
    tm = grid.t_nodes[:-1] + 0.5 * grid.dt
    rate = 0.6 * np.exp(-((tm - 1000.0) / 400.0) ** 2)
    shape = np.exp(-grid.x_mid / 2000.0)
    f = (rate * grid.dt)[None, None, :] * (shape / shape.sum())[None, :, None]
    init = InitialState.empty(grid)
    st_ = solve_dynamics(f, init, speed, grid)
    delta = np.array([network_outflow_demand(st_, f, init, n) for n in range(n_time + 1)])
    outflow = 0.5 * grid.dt * (delta[:-1] + delta[1:])
    resid = np.diff(st_.H) - f.sum(axis=(0, 1)) + outflow
    return np.abs(resid).max() / st_.H.max()


def test_mass_balance_improves_under_refinement():
    errs = [_balance_error(30 * r, 6 * r) for r in (1, 2, 4)]
    assert errs[0] > errs[1] > errs[2]
    # roughly first order or better
    assert errs[2] < 0.5 * errs[0]


def test_exponential_lengths_reduce_to_classic_bathtub():
    mean_len, t_end, n_time = 2000.0, 4 * 3600.0, 500
    grid = Grid(t_end=t_end, n_time=n_time, x_max=10 * mean_len, n_length=100, arrival_times=(t_end,))
    e = grid.x_edges
    p = np.exp(-e[:-1] / mean_len) - np.exp(-e[1:] / mean_len)
    p /= p.sum()
    tm = grid.t_nodes[:-1] + 0.5 * grid.dt
    lam = 12.0 * np.exp(-((tm - 5400.0) / 2400.0) ** 2)
    f = (lam * grid.dt)[None, None, :] * p[None, :, None]
    H0 = 1500.0
    init = InitialState(H0 / mean_len * np.exp(-e[:-1] / mean_len), grid.dx)
    speed = SpeedFunction(((0.0, 15.0), (4000.0, 8.0), (8000.0, 3.0), (12000.0, 1.0)), v_min=1.0, v_max=15.0)
    st_ = solve_dynamics(f, init, speed, grid)

    def rhs(t, H):
        n = min(int(t // grid.dt), n_time - 1)
        return [lam[n] - speed(H[0]) * H[0] / mean_len]

    ode = solve_ivp(rhs, (0, t_end), [H0], t_eval=grid.t_nodes, rtol=1e-10, atol=1e-8, max_step=grid.dt)
    assert np.abs(st_.H - ode.y[0]).max() / ode.y[0].max() <= 0.02


# supply constraint

def _supply_case():
    grid = Grid(t_end=400.0, n_time=40, x_max=2000.0, n_length=10, arrival_times=(200.0,))
    init = InitialState(np.full(grid.n_length, 0.2), grid.dx)
    f = np.zeros(grid.shape)
    f[0, :, :20] = 3.0
    return grid, init, f, SpeedFunction.constant(10.0)


def test_supply_never_binding_is_bitwise_identical():
    grid, init, f, speed = _supply_case()
    free = solve_dynamics(f, init, speed, grid)
    sup = SupplyConstraint(np.full(grid.n_time + 1, 1e9), 1.0)
    capped = solve_dynamics_with_supply(f, init, speed, sup, grid)
    for name in ("z", "H", "v"):
        assert np.array_equal(getattr(free, name), getattr(capped, name))


def test_binding_supply_caps_outflow():
    grid, init, f, speed = _supply_case()
    free = solve_dynamics(f, init, speed, grid)
    demand = np.array([network_outflow_demand(free, f, init, n) for n in range(grid.n_time + 1)])
    sigma = np.maximum(0.5 * demand, 0.05)
    capped = solve_dynamics_with_supply(f, init, speed, SupplyConstraint(sigma, 0.05), grid)
    dens = np.array([exit_density(capped, f, init, n) for n in range(grid.n_time + 1)])
    np.testing.assert_allclose(dens, capped.exit_density, rtol=1e-12)
    assert np.all(dens * capped.v <= sigma * (1 + 1e-12))
    assert np.all(capped.v <= speed(capped.H) + 1e-12)
    assert np.any(capped.v < speed(capped.H))


def test_supply_validation():
    grid, init, f, speed = _supply_case()
    with pytest.raises(BathtubError) as err:
        solve_dynamics_with_supply(f, init, speed, SupplyConstraint(np.zeros(grid.n_time + 1), 0.1), grid)
    assert err.value.code == "invalid_supply"
    with pytest.raises(BathtubError) as err:
        solve_dynamics_with_supply(f, init, speed, SupplyConstraint(np.ones(5), 0.1), grid)
    assert err.value.code == "dimension_mismatch"
