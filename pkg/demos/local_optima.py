# # One row, three departure slots, two local optima
#
# Congestion makes the total cost nonconvex in the departure pattern. The
# smallest example: 400 travellers with a 6 km trip and a 25 min deadline can
# leave in one of three 10 min slots.

# %%

import numpy as np

from bathtub_so.gradient import objective
from bathtub_so.model import CostParams, DemandProfile, Grid, InitialState, SpeedFunction
from bathtub_so.optimize import optimize, optimize_multistart

grid = Grid(t_end=1800.0, n_time=3, x_max=6000.0, n_length=1, arrival_times=(1500.0,))
speed = SpeedFunction(((0.0, 15.0), (100.0, 5.0), (400.0, 1.0)), v_min=1.0, v_max=15.0)
problem = (DemandProfile(np.array([[400.0]])), InitialState.empty(grid), speed, CostParams.lyon(), grid)

# %% [markdown]
# An exhaustive search over splits in steps of four travellers gives the
# global optimum.

# %%

splits = [np.array([a, b, 400.0 - a - b]) for a in range(0, 401, 4) for b in range(0, 401 - a, 4)]
costs = [objective(s.reshape(grid.shape), *problem[1:]) for s in splits]
best = splits[int(np.argmin(costs))]
print(f"exhaustive search: {best} costs {min(costs):.0f}")

# %% [markdown]
# Started from the free-flow pattern (everyone in the last slot), projected
# gradient stays put: that vertex is a genuine local optimum. Random restarts
# find the better basin.

# %%

f, hist = optimize(*problem, max_iter=100, clock=None)
print(f"single start:      {f.ravel()} costs {hist.best_objective:.0f}")
f, hist = optimize_multistart(*problem, n_starts=8, seed=0, max_iter=100, clock=None)
print(f"eight starts:      {np.round(f.ravel(), 1)} costs {hist.best_objective:.0f}")
