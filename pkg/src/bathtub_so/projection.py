"""Euclidean projection onto nonnegative patterns with prescribed row sums.

Each (class, length) row is projected independently:
``f = max(g + sigma, 0)`` with the row multiplier ``sigma`` solving
``sum_n max(g_n + sigma, 0) = m``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import BathtubError, DemandProfile

_FEASIBLE_RTOL = 1e-12


@dataclass(frozen=True)
class RowMultiplier:
    sigma: float


def solve_multiplier(g_row, m_val: float) -> RowMultiplier:
    """Exact multiplier by a scan over the sorted breakpoints ``-g_n``."""
    if not m_val > 0:
        raise BathtubError("empty_row", f"row mass {m_val} must be > 0")
    return RowMultiplier(float(_sigma_sorted(np.asarray(g_row, dtype=float)[None, :], np.array([m_val]))[0]))


def solve_multiplier_newton(g_row, m_val: float, sigma0: float | None = None,
                            max_iter: int = 100) -> RowMultiplier:
    """Newton iteration on the piecewise-linear increasing map ``sigma -> sum max(g + sigma, 0)``.

    Started on the right of the root the iterates decrease monotonically and
    stop once the active set no longer changes. ``sigma0`` is a warm start and
    is discarded if it lies left of the root.
    """
    if not m_val > 0:
        raise BathtubError("empty_row", f"row mass {m_val} must be > 0")
    g = np.asarray(g_row, dtype=float)

    def residual(s):
        return np.maximum(g + s, 0.0).sum() - m_val

    s = sigma0 if sigma0 is not None and residual(sigma0) >= 0 else m_val - g.max()
    for _ in range(max_iter):
        active = g + s > 0
        s_new = (m_val - g[active].sum()) / active.sum()
        if s_new >= s:
            break
        s = s_new
    return RowMultiplier(float(s))


def _sigma_sorted(G: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Row-wise multipliers for a 2-D batch ``G`` (rows with ``m > 0`` only)."""
    u = -np.sort(-G, axis=1)
    css = np.cumsum(u, axis=1)
    j = np.arange(1, G.shape[1] + 1)
    # candidate multiplier if the j largest entries are active
    cand = (m[:, None] - css) / j
    ok = u + cand > 0
    rho = G.shape[1] - np.argmax(ok[:, ::-1], axis=1)
    return cand[np.arange(len(G)), rho - 1]


def project(g, m: DemandProfile | np.ndarray) -> np.ndarray:
    """Project a ``(K, L, N)`` array onto ``{f >= 0, f.sum(axis=2) == m}``."""
    m = m.counts if isinstance(m, DemandProfile) else np.asarray(m, dtype=float)
    g = np.asarray(g, dtype=float)
    if g.ndim != 3 or g.shape[:2] != m.shape:
        raise BathtubError("dimension_mismatch", f"tensor {g.shape} vs demand {m.shape}")
    K, L, N = g.shape
    G = g.reshape(K * L, N)
    mv = m.reshape(-1)
    out = np.zeros_like(G)
    live = mv > 0
    if np.any(live):
        sig = _sigma_sorted(G[live], mv[live])
        out[live] = np.maximum(G[live] + sig[:, None], 0.0)
        # points already in the set are returned untouched
        feasible = np.all(G[live] >= 0, axis=1) & (
            np.abs(G[live].sum(axis=1) - mv[live]) <= _FEASIBLE_RTOL * np.maximum(1.0, mv[live]))
        out[np.flatnonzero(live)[feasible]] = G[live][feasible]
    return out.reshape(K, L, N)


def project_row(g_row, m_val: float) -> np.ndarray:
    g_row = np.asarray(g_row, dtype=float)
    return project(g_row[None, None, :], np.array([[m_val]]))[0, 0]
