"""Brute-force reference computations shared by the tests."""

import itertools

import numpy as np
from scipy.integrate import quad


def overlap_fraction(z_n, z_m, z_m1, a, dx):
    """Share of the box ``[a, a + dx] x [t_m, t_{m+1}]`` with remaining length above ``z_n - z(s)``.

    ``z`` is linear over the time cell; the inner length integral is done in
    closed form and the time integral by adaptive quadrature.
    """
    def frac(tau):
        thr = z_n - (z_m + tau * (z_m1 - z_m))
        return min(max((a + dx - thr) / dx, 0.0), 1.0)
    kinks = sorted({min(max((z_n - c - z_m) / (z_m1 - z_m), 0.0), 1.0) for c in (a, a + dx)})
    val, _ = quad(frac, 0.0, 1.0, points=kinks, epsabs=1e-13, epsrel=1e-13)
    return val


def project_row_active_sets(g, m):
    """Euclidean projection of ``g`` onto ``{f >= 0, sum f = m}`` by enumerating supports.

    For a support ``S`` the KKT point is ``f_S = g_S + (m - sum g_S) / |S|``;
    the projection is the closest KKT-feasible candidate.
    """
    g = np.asarray(g, dtype=float)
    best, best_d = None, np.inf
    for r in range(1, len(g) + 1):
        for S in itertools.combinations(range(len(g)), r):
            S = list(S)
            f = np.zeros_like(g)
            f[S] = g[S] + (m - g[S].sum()) / len(S)
            if np.any(f[S] < 0):
                continue
            d = np.sum((f - g) ** 2)
            if d < best_d - 1e-15:
                best, best_d = f, d
    return best


def simplex_grid(n, total, steps):
    """Every split of ``total`` into ``n`` nonnegative parts on a lattice of ``steps`` divisions."""
    for c in itertools.product(range(steps + 1), repeat=n - 1):
        if sum(c) <= steps:
            yield np.array([*c, steps - sum(c)], dtype=float) * total / steps
