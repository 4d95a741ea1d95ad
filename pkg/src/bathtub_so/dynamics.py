"""Forward solver for the generalized bathtub dynamics.

The accumulation at node ``t_n`` is

    H_n = h(z_n) + sum_{m<n} sum_l F[l, m] * phi_l(n, m)

where ``F = f.sum(axis=0)`` and ``phi_l(n, m)`` is the fraction of the
(length cell ``l``, time cell ``m``) box lying above the straight line that
joins ``(z_n - z_{m+1}, t_{m+1})`` and ``(z_n - z_m, t_m)``: the travellers of
that box who still have distance to cover at ``t_n``. The fraction is
integrated exactly (``z`` is piecewise linear in time), so ``H`` is a C1
function of the nodal ``z`` values away from speed-function breakpoints.

Speed and distance follow an explicit left-endpoint march,
``z_{n+1} = z_n + dt * V(H_n)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import BathtubError, Grid, InitialState, SpeedFunction

DENSITY_EPS = 1e-9  # travellers per metre; below this the supply branch is inactive


@dataclass(frozen=True)
class SupplyConstraint:
    sigma: np.ndarray
    sigma_min: float

    def __post_init__(self):
        object.__setattr__(self, "sigma", np.asarray(self.sigma, dtype=float))

    def validate(self, grid: Grid) -> None:
        if not self.sigma_min > 0:
            raise BathtubError("invalid_supply", "sigma_min must be > 0")
        if self.sigma.shape != (grid.n_time + 1,):
            raise BathtubError("dimension_mismatch", f"sigma shape {self.sigma.shape}")
        if np.any(self.sigma < self.sigma_min):
            raise BathtubError("invalid_supply", "sigma falls below sigma_min")


@dataclass(frozen=True)
class BathtubState:
    """Solved trajectories on the ``N + 1`` time nodes."""

    z: np.ndarray
    H: np.ndarray
    v: np.ndarray
    grid: Grid
    f_ref: np.ndarray = field(repr=False)
    speed: SpeedFunction = field(repr=False, default=None)
    exit_density: np.ndarray = field(repr=False, default=None)

    @property
    def t(self) -> np.ndarray:
        return self.grid.t_nodes

    @property
    def z_next(self) -> float:
        """Virtual node ``z_{N+1} = z_N + dt * v_N`` used to extrapolate past ``t_end``."""
        return float(self.z[-1] + self.grid.dt * self.v[-1])

    @property
    def z_ext(self) -> np.ndarray:
        return np.append(self.z, self.z_next)

    def trajectory(self) -> np.ndarray:
        """``(N + 1, 4)`` array with columns ``t, z, H, v``."""
        return np.column_stack([self.t, self.z, self.H, self.v])


def _tail_integral(y, a, dx):
    """``int_y^inf g`` for ``g(u) = clip((a + dx - u) / dx, 0, 1)``."""
    b = a + dx
    return np.where(y >= b, 0.0,
                    np.where(y >= a, (b - y) ** 2 / (2.0 * dx), (a - y) + 0.5 * dx))


def cell_fractions(d0, d1, grid: Grid) -> np.ndarray:
    """Fraction of each length cell lying above the line from ``d1`` to ``d0``.

    ``d0 = z_n - z_m`` and ``d1 = z_n - z_{m+1}`` are arrays over time cells;
    the result has shape ``(len(d0), L)``.
    """
    d0 = np.asarray(d0, dtype=float)[:, None]
    d1 = np.asarray(d1, dtype=float)[:, None]
    a = grid.x_edges[:-1][None, :]
    frac = (_tail_integral(d1, a, grid.dx) - _tail_integral(d0, a, grid.dx)) / (d0 - d1)
    return np.clip(frac, 0.0, 1.0)


def crossing_intervals(d0, d1, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Parameter interval ``[tau_a, tau_b]`` on which the line lies in each cell.

    The line is ``x(tau) = d0 - tau * (d0 - d1)``, ``tau`` in ``[0, 1]``
    running from ``t_m`` to ``t_{m+1}``. Empty intervals have ``tau_a == tau_b``.
    """
    d0 = np.asarray(d0, dtype=float)[:, None]
    d1 = np.asarray(d1, dtype=float)[:, None]
    w = d0 - d1
    a = grid.x_edges[:-1][None, :]
    lo = np.clip((d0 - a - grid.dx) / w, 0.0, 1.0)
    hi = np.clip((d0 - a) / w, 0.0, 1.0)
    return lo, np.maximum(hi, lo)


def _window_start(z: np.ndarray, n: int, x_max: float) -> int:
    # first time cell m whose far end z_{m+1} is within x_max of z_n
    return int(np.searchsorted(z[1:n + 1], z[n] - x_max, side="right"))


def _march(f, init: InitialState, speed: SpeedFunction, grid: Grid, supply: SupplyConstraint | None):
    f = np.asarray(f, dtype=float)
    if f.shape != grid.shape:
        raise BathtubError("dimension_mismatch", f"pattern {f.shape} vs grid {grid.shape}")
    N, dt = grid.n_time, grid.dt
    F = f.sum(axis=0)
    z = np.zeros(N + 1)
    H = np.zeros(N + 1)
    v = np.zeros(N + 1)
    den = np.zeros(N + 1)
    for n in range(N + 1):
        zn = z[n]
        Hn = float(init.h_at(zn))
        dn = float(init.k_at(zn))
        if n > 0:
            m0 = _window_start(z, n, grid.x_max)
            if m0 < n:
                d0 = zn - z[m0:n]
                d1 = zn - z[m0 + 1:n + 1]
                Fw = F[:, m0:n].T
                Hn += float(np.sum(Fw * cell_fractions(d0, d1, grid)))
                if supply is not None:
                    lo, hi = crossing_intervals(d0, d1, grid)
                    dn += float(np.sum(Fw * (hi - lo))) / grid.dx
        H[n] = Hn
        den[n] = dn
        vn = speed(Hn)
        if supply is not None and dn >= DENSITY_EPS:
            vn = min(vn, supply.sigma[n] / dn)
        if not np.isfinite(Hn) or not np.isfinite(vn):
            raise BathtubError("numerical_blowup", f"non-finite state at node {n}")
        v[n] = vn
        if n < N:
            z[n + 1] = zn + dt * vn
    return BathtubState(z=z, H=H, v=v, grid=grid, f_ref=f, speed=speed,
                        exit_density=den if supply is not None else None)


def solve_dynamics(f, init: InitialState, speed: SpeedFunction, grid: Grid) -> BathtubState:
    """March ``z``, ``H`` and ``v`` forward over the horizon for departure pattern ``f``."""
    return _march(f, init, speed, grid, None)


def solve_dynamics_with_supply(f, init: InitialState, speed: SpeedFunction,
                               supply: SupplyConstraint, grid: Grid) -> BathtubState:
    """Same march with speed capped by ``sigma_n / exit_density_n`` (downstream supply)."""
    supply.validate(grid)
    return _march(f, init, speed, grid, supply)


def exit_density(state: BathtubState, f, init: InitialState, n: int) -> float:
    """Travellers per metre at zero remaining length, ``k(z_n) + int F(z_n - z(s), s) ds``."""
    grid = state.grid
    F = np.asarray(f, dtype=float).sum(axis=0)
    z = state.z
    out = float(init.k_at(z[n]))
    if n > 0:
        m0 = _window_start(z, n, grid.x_max)
        if m0 < n:
            lo, hi = crossing_intervals(z[n] - z[m0:n], z[n] - z[m0 + 1:n + 1], grid)
            out += float(np.sum(F[:, m0:n].T * (hi - lo))) / grid.dx
    return out


def network_outflow_demand(state: BathtubState, f, init: InitialState, n: int) -> float:
    """Outflow demand ``Delta_n = exit_density_n * V(H_n)`` in travellers per second."""
    if not 0 <= n <= state.grid.n_time:
        raise BathtubError("domain_error", f"time index {n} outside grid")
    return exit_density(state, f, init, n) * float(state.speed(state.H[n]))


def _bracket(state: BathtubState, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Segment index ``mu`` with ``z_mu < X <= z_{mu+1}`` and the position ``theta`` in it."""
    z = state.z_ext
    N = state.grid.n_time
    mu = np.clip(np.searchsorted(z[:N + 1], X, side="left") - 1, 0, N)
    theta = (X - z[mu]) / (z[mu + 1] - z[mu])
    return mu, theta


def invert_z(state: BathtubState, distance):
    """Time at which the virtual traveller has covered ``distance``.

    Piecewise-linear inverse of the nodal ``z``; beyond ``z_N`` the last speed
    ``v_N`` is used to extrapolate.
    """
    X = np.asarray(distance, dtype=float)
    if np.any(X < 0):
        raise BathtubError("domain_error", "distance must be >= 0")
    mu, theta = _bracket(state, X)
    out = (mu + theta) * state.grid.dt
    return float(out) if out.ndim == 0 else out


def z_at(state: BathtubState, t):
    """Characteristic distance at arbitrary time ``t`` (linear between nodes)."""
    return np.interp(t, state.t, state.z)


def arrival_time(state: BathtubState, x, t, return_flag: bool = False):
    """Arrival time ``TA = z^{-1}(x + z(t))`` of a trip of length ``x`` leaving at ``t``.

    With ``return_flag`` the second return value marks arrivals extrapolated
    past ``t_end``.
    """
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(x < 0):
        raise BathtubError("domain_error", "trip length must be >= 0")
    if np.any((t < 0) | (t > state.grid.t_end + 1e-9 * state.grid.t_end)):
        raise BathtubError("domain_error", "departure time outside the horizon")
    ta = invert_z(state, x + z_at(state, t))
    ta = np.maximum(ta, t)
    if return_flag:
        return ta, np.asarray(ta) > state.grid.t_end
    return ta
