"""Per-traveller schedule cost and the total social objective."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import BathtubState, _bracket, arrival_time
from .model import BathtubError, CostParams, Grid


@dataclass(frozen=True)
class CostField:
    """Cell-sampled cost ``J[k, l, n]`` and arrival times ``TA[l, n]``.

    ``J`` is evaluated at the centre of each box: trip length ``x_mid[l]`` and
    departure time ``t_n + dt / 2``, where ``z`` is the mean of ``z_n`` and
    ``z_{n+1}``.
    ``mu``/``theta`` locate each arrival on the ``z`` polyline (segment index and
    position within it) and are reused by the gradient.
    """

    J: np.ndarray
    TA: np.ndarray
    mu: np.ndarray
    theta: np.ndarray
    extrapolated: np.ndarray


def _unit_cost(TA, t, ta, params: CostParams, t_end: float):
    J = params.alpha * (TA - t) + params.penalty(TA - ta)
    if params.terminal_penalty_rate:
        J = J + params.terminal_penalty_rate * np.maximum(TA - t_end, 0.0)
    return J


def trip_cost(ta: float, x: float, t: float, state: BathtubState, params: CostParams) -> float:
    """Cost of one traveller with desired arrival ``ta``, trip length ``x``, departing at ``t``."""
    TA = arrival_time(state, x, t)
    return float(_unit_cost(TA, t, ta, params, state.grid.t_end))


def cost_field(state: BathtubState, params: CostParams, grid: Grid | None = None) -> CostField:
    grid = state.grid if grid is None else grid
    t = grid.t_nodes[:-1] + 0.5 * grid.dt
    X = grid.x_mid[:, None] + 0.5 * (state.z[None, :-1] + state.z[None, 1:])
    mu, theta = _bracket(state, X)
    TA = (mu + theta) * grid.dt
    ta = grid.ta[:, None, None]
    J = _unit_cost(TA[None], t[None, None, :], ta, params, grid.t_end)
    return CostField(J=J, TA=TA, mu=mu, theta=theta, extrapolated=TA > grid.t_end)


def total_cost(f, field: CostField) -> float:
    f = np.asarray(f, dtype=float)
    if f.shape != field.J.shape:
        raise BathtubError("dimension_mismatch", f"pattern {f.shape} vs cost field {field.J.shape}")
    return float(np.sum(f * field.J))


def class_costs(f, field: CostField) -> np.ndarray:
    """Mean cost per traveller of each desired-arrival class (NaN for empty classes)."""
    f = np.asarray(f, dtype=float)
    mass = f.sum(axis=(1, 2))
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.sum(f * field.J, axis=(1, 2)) / mass


def row_timing(f, field: CostField, grid: Grid, min_mass: float = 1e-6):
    """Mass-weighted mean departure and arrival time of every (class, length) row.

    Rows lighter than ``min_mass`` get NaN.
    """
    f = np.asarray(f, dtype=float)
    mass = f.sum(axis=2)
    t_dep = grid.t_nodes[:-1] + 0.5 * grid.dt
    with np.errstate(invalid="ignore", divide="ignore"):
        dep = np.einsum("kln,n->kl", f, t_dep) / mass
        arr = np.einsum("kln,ln->kl", f, field.TA) / mass
    dep[mass < min_mass] = np.nan
    arr[mass < min_mass] = np.nan
    return dep, arr


def ordering_violations(f, field: CostField, grid: Grid):
    """Pairs of rows that break first-in-first-out and last-in-first-out order.

    For rows ``a`` and ``b`` with ``a`` leaving strictly earlier (by mean
    departure time), FIFO is broken when ``a`` also arrives strictly later and
    LIFO is broken when ``a`` arrives strictly earlier. Returns the two lists
    of ``((k_a, l_a), (k_b, l_b))`` pairs.
    """
    dep, arr = row_timing(f, field, grid)
    keys = [tuple(int(i) for i in kl) for kl in np.argwhere(np.isfinite(dep))]
    d = np.array([dep[k] for k in keys])
    a = np.array([arr[k] for k in keys])
    first = d[:, None] < d[None, :]
    fifo = np.argwhere(first & (a[:, None] > a[None, :]))
    lifo = np.argwhere(first & (a[:, None] < a[None, :]))
    return ([(keys[i], keys[j]) for i, j in fifo], [(keys[i], keys[j]) for i, j in lifo])
