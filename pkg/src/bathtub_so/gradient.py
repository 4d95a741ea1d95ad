"""Gradient of the total cost with respect to the departure pattern.

The linearized model is assembled as four operators acting on nodal
variations:

* ``Z``: ``dz = Z dH`` (``dz_j = dt * sum_{i<j} V'(H_i) dH_i``), strictly causal
* ``Hop``: ``dH = Hop dz + F df``, the response of accumulation to shifting the
  characteristic distance (cell crossing term plus initial density term)
* ``F``: cell fractions above the characteristic line, ``dH`` per ``df``
* ``Lop``: ``dJ = Lop dz``, four nonzeros per row from the shifts of the
  departure-time distance and the arrival time

``propagate_variation`` runs the tangent recursion
``dH = (I - Hop Z)^{-1} F df`` one time node at a time and
``gradient`` runs the transpose of the same recursion backwards in time,
so neither ever forms or inverts a dense operator.

``dz`` carries ``N + 2`` entries: node ``N + 1`` is the virtual Euler step
used to extrapolate arrivals past the horizon.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cost import CostField, cost_field, total_cost
from .dynamics import BathtubState, _window_start, cell_fractions, crossing_intervals, solve_dynamics
from .model import CostParams, Grid, InitialState, SpeedFunction


@dataclass(frozen=True)
class GradientWorkspace:
    z_rate: np.ndarray        # (N+1,) dt * V'(H_i)
    L_coef: np.ndarray        # (K, L, N) common factor of each Lop row
    mu: np.ndarray            # (L, N) segment index of the arrival
    theta: np.ndarray         # (L, N) position of the arrival within the segment
    H_coef: np.ndarray        # (N+1, N+1) lower triangular
    F_frac: np.ndarray        # (N+1, L, N) cell fractions, zero for m >= n
    lam_minus: np.ndarray     # (N+1, N) cell holding z_n - z_{m+1}
    lam_plus: np.ndarray      # (N+1, N) cell holding z_n - z_m
    extrapolated: np.ndarray  # (L, N) arrivals past t_end

    @property
    def n_time(self) -> int:
        return self.F_frac.shape[2]

    @property
    def Z(self) -> np.ndarray:
        """Dense ``(N+2, N+1)`` matrix of the ``Z`` operator."""
        n = len(self.z_rate)
        rows = np.arange(n + 1)[:, None]
        cols = np.arange(n)[None, :]
        return np.where(cols < rows, self.z_rate[None, :], 0.0)

    def L_rows(self):
        """Column indices and weights of the four nonzeros in each ``Lop`` row."""
        K, L, N = self.L_coef.shape
        n = np.broadcast_to(np.arange(N), (L, N))
        half = np.full_like(self.theta, 0.5)
        cols = np.stack([n, n + 1, self.mu, self.mu + 1])
        w = np.stack([half, half, -(1.0 - self.theta), -self.theta])
        return cols, w


def build_operators(f, state: BathtubState, init: InitialState, field: CostField,
                    params: CostParams, grid: Grid | None = None) -> GradientWorkspace:
    grid = state.grid if grid is None else grid
    f = np.asarray(f, dtype=float)
    N, L, dt, dx = grid.n_time, grid.n_length, grid.dt, grid.dx
    z, H = state.z, state.H
    z_ext = state.z_ext
    F = f.sum(axis=0)

    z_rate = dt * np.asarray(state.speed.derivative(H), dtype=float)

    # Lop: dJ = dTA * (alpha + schedule slope [+ terminal rate]);
    # dTA = (dz(t_n + dt/2) - dz(TA)) / v(TA), dz(t_n + dt/2) = (dz_n + dz_{n+1}) / 2
    mu, theta = field.mu, field.theta
    seg_speed = (z_ext[mu + 1] - z_ext[mu]) / dt
    slope = params.alpha + params.penalty.slope(field.TA[None] - grid.ta[:, None, None])
    if params.terminal_penalty_rate:
        slope = slope + params.terminal_penalty_rate * (field.TA > grid.t_end)[None]
    L_coef = slope / seg_speed[None]

    H_coef = np.zeros((N + 1, N + 1))
    F_frac = np.zeros((N + 1, L, N))
    lam_minus = np.zeros((N + 1, N), dtype=int)
    lam_plus = np.zeros((N + 1, N), dtype=int)
    for n in range(N + 1):
        H_coef[n, n] -= float(init.k_at(z[n]))
        if n == 0:
            continue
        d0_all = z[n] - z[:n]
        d1_all = z[n] - z[1:n + 1]
        lam_minus[n, :n] = np.floor(d1_all / dx).astype(int)
        lam_plus[n, :n] = np.floor(d0_all / dx).astype(int)
        m0 = _window_start(z, n, grid.x_max)
        if m0 >= n:
            continue
        d0, d1 = d0_all[m0:], d1_all[m0:]
        F_frac[n, :, m0:n] = cell_fractions(d0, d1, grid).T
        # integrate F * (dz_n - dz(s)) over the part of the line inside each cell,
        # with dz(s) = (1 - tau) dz_m + tau dz_{m+1}
        lo, hi = crossing_intervals(d0, d1, grid)
        rho = F[:, m0:n].T / dx
        c_n = rho * (hi - lo)
        c_next = rho * 0.5 * (hi ** 2 - lo ** 2)
        c_m = c_n - c_next
        m_idx = np.arange(m0, n)
        H_coef[n, n] -= c_n.sum()
        np.add.at(H_coef[n], m_idx, c_m.sum(axis=1))
        np.add.at(H_coef[n], m_idx + 1, c_next.sum(axis=1))

    return GradientWorkspace(z_rate=z_rate, L_coef=L_coef, mu=mu, theta=theta, H_coef=H_coef,
                             F_frac=F_frac, lam_minus=lam_minus, lam_plus=lam_plus,
                             extrapolated=field.extrapolated)


def propagate_variation(ws: GradientWorkspace, delta_f):
    """Tangent map ``df -> (dH, dz, dJ)``.

    Returns ``dH`` on the ``N + 1`` nodes, ``dz`` on ``N + 2`` nodes (the last
    one virtual) and ``dJ`` with the shape of ``df``.
    """
    delta_f = np.asarray(delta_f, dtype=float)
    N = ws.n_time
    Fdf = np.einsum("nlm,lm->n", ws.F_frac, delta_f.sum(axis=0))
    dz = np.zeros(N + 2)
    dH = np.zeros(N + 1)
    for n in range(N + 1):
        if n > 0:
            dz[n] = dz[n - 1] + ws.z_rate[n - 1] * dH[n - 1]
        dH[n] = ws.H_coef[n, :n + 1] @ dz[:n + 1] + Fdf[n]
    dz[N + 1] = dz[N] + ws.z_rate[N] * dH[N]
    cols, w = ws.L_rows()
    dJ = ws.L_coef * np.sum(w * dz[cols], axis=0)[None]
    return dH, dz, dJ


def apply_transpose(ws: GradientWorkspace, w_seed) -> np.ndarray:
    """Transpose of ``df -> dJ``: returns ``F' (I - Z' Hop')^{-1} Z' Lop' w``."""
    w_seed = np.asarray(w_seed, dtype=float)
    N = ws.n_time
    cols, wts = ws.L_rows()
    r = np.sum(ws.L_coef * w_seed, axis=0)  # (L, N)
    w_z = np.zeros(N + 2)
    for c, wt in zip(cols, wts):
        np.add.at(w_z, c.ravel(), (wt * r).ravel())

    a = np.zeros(N + 1)   # adjoint of dH
    b = np.zeros(N + 1)   # Hop' a, filled as a is known
    suffix = w_z[N + 1]   # sum over j > i of (w_z + b)_j
    for i in range(N, -1, -1):
        a[i] = ws.z_rate[i] * suffix
        b[:i + 1] += ws.H_coef[i, :i + 1] * a[i]
        suffix += w_z[i] + b[i]
    g = np.einsum("nlm,n->lm", ws.F_frac, a)
    return np.broadcast_to(g, w_seed.shape).copy()


def gradient(f, state: BathtubState, init: InitialState, field: CostField,
             params: CostParams, grid: Grid | None = None, ws: GradientWorkspace | None = None) -> np.ndarray:
    """``J`` plus the marginal (externality) term, same shape as ``f``."""
    if ws is None:
        ws = build_operators(f, state, init, field, params, grid)
    return field.J + apply_transpose(ws, f)


def objective(f, init: InitialState, speed: SpeedFunction, params: CostParams, grid: Grid) -> float:
    """Full nonlinear objective: solve the dynamics, then sum cost over travellers."""
    state = solve_dynamics(f, init, speed, grid)
    return total_cost(f, cost_field(state, params, grid))


def objective_and_gradient(f, init: InitialState, speed: SpeedFunction, params: CostParams, grid: Grid):
    state = solve_dynamics(f, init, speed, grid)
    field = cost_field(state, params, grid)
    g = gradient(f, state, init, field, params, grid)
    return total_cost(f, field), g, state, field
