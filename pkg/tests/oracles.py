"""Independent reference computations for the geometry tests."""

import math

import numpy as np

from relcommit import geometry as G
from relcommit.geometry import C


# a different planar placement from the library's (bisector along +x)


def oracle_points(layout):
    h = layout.theta / 2.0
    r0 = layout.d_alice_a0 + layout.d_a0_b0
    r1 = layout.d_alice_a1 + layout.d_a1_b1
    return {
        "bob": np.array([-layout.d_alice_bob, 0.0]),
        "b0": r0 * np.array([math.cos(h), math.sin(h)]),
        "b1": r1 * np.array([math.cos(h), -math.sin(h)]),
    }


def oracle_d_max(layout, obs, n=2_000_001):
    """Point of B0B1 where signals sent simultaneously meet both arrival times."""
    pts = oracle_points(layout)
    b0, b1 = pts["b0"], pts["b1"]
    s = np.linspace(0.0, 1.0, n)
    x = b0[None, :] + s[:, None] * (b1 - b0)[None, :]
    mismatch = np.abs(
        (obs.t_b0 - np.linalg.norm(x - b0, axis=1) / C) - (obs.t_b1 - np.linalg.norm(x - b1, axis=1) / C)
    )
    i = int(np.argmin(mismatch))
    return float(np.linalg.norm(x[i] - pts["bob"]))


def oracle_solve(layout, obs, n=2000):
    """Brute-force (psi, d) scan of the light-cone problem with one zoom pass."""
    pts = oracle_points(layout)
    bob, b0, b1 = pts["bob"], pts["b0"], pts["b1"]
    u0 = (b0 - bob) / np.linalg.norm(b0 - bob)
    u1 = (b1 - bob) / np.linalg.norm(b1 - bob)
    wedge = math.acos(np.clip(u0 @ u1, -1, 1))
    turn = np.sign(u0[0] * u1[1] - u0[1] * u1[0]) or 1.0
    budget0 = C * (obs.t_b0 - obs.t0)
    budget1 = C * (obs.t_b1 - obs.t0)
    cap = min(budget0, budget1, oracle_d_max(layout, obs))

    def best(psi_lo, psi_hi, d_lo, d_hi):
        psi = np.linspace(psi_lo, psi_hi, n)[:, None]
        d = np.linspace(d_lo, d_hi, n)[None, :]
        dirx = np.cos(psi) * u0[0] - turn * np.sin(psi) * u0[1]
        diry = turn * np.sin(psi) * u0[0] + np.cos(psi) * u0[1]
        px = bob[0] + d * dirx
        py = bob[1] + d * diry
        ok = (d + np.hypot(px - b0[0], py - b0[1]) <= budget0) & (
            d + np.hypot(px - b1[0], py - b1[1]) <= budget1
        ) & (d <= cap)
        dd = np.where(ok, d, -1.0)
        i, j = np.unravel_index(np.argmax(dd), dd.shape)
        return psi[i, 0], d[0, j], (psi_hi - psi_lo) / (n - 1), (d_hi - d_lo) / (n - 1)

    psi, d, dp, dd = best(0.0, wedge, 0.0, cap)
    psi, d, _, _ = best(max(psi - 2 * dp, 0.0), min(psi + 2 * dp, wedge), max(d - 2 * dd, 0.0), d + 2 * dd)
    return d


def feasible_timing(layout, slack0, slack1, t0=0.0):
    g = G.derived_distances(layout)
    return G.TimingObservations(t0, t0 + (g.d_bob_b0 + slack0) / C, t0 + (g.d_bob_b1 + slack1) / C)
