"""Inner loops shared by the detector model and the geometry solver.

Each kernel exists twice: a numba-compiled loop and a plain numpy/Python
version with identical semantics. Set ``RELCOMMIT_NO_NUMBA=1`` before import
to force the fallback; it is also used when numba is not installed.

All times passed to the detector kernels are integer picoseconds so that the
window comparisons (60 ns against a 20 ns pulse grid) are exact.
"""

import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is an optional extra
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("RELCOMMIT_NO_NUMBA", "").lower() not in (
    "1",
    "true",
    "yes",
)

# "long ago" sentinel for the last-click trackers
_NEVER = np.int64(-(2**62))


# ---------------------------------------------------------------------------
# detector dead time
# ---------------------------------------------------------------------------


def _dead_time_py(times_ps, fire0, fire1, dead_ps):
    n = times_ps.shape[0]
    click0 = np.zeros(n, dtype=np.bool_)
    click1 = np.zeros(n, dtype=np.bool_)
    last0 = _NEVER
    last1 = _NEVER
    for i in np.flatnonzero(fire0 | fire1):
        t = times_ps[i]
        if fire0[i] and t - last0 >= dead_ps:
            click0[i] = True
            last0 = t
        if fire1[i] and t - last1 >= dead_ps:
            click1[i] = True
            last1 = t
    return click0, click1


def _dead_time_loop(times_ps, fire0, fire1, dead_ps):
    n = times_ps.shape[0]
    click0 = np.zeros(n, dtype=np.bool_)
    click1 = np.zeros(n, dtype=np.bool_)
    last0 = -(2**62)
    last1 = -(2**62)
    for i in range(n):
        t = times_ps[i]
        if fire0[i] and t - last0 >= dead_ps:
            click0[i] = True
            last0 = t
        if fire1[i] and t - last1 >= dead_ps:
            click1[i] = True
            last1 = t
    return click0, click1


# ---------------------------------------------------------------------------
# FPGA post-selection
# ---------------------------------------------------------------------------


def _postselect_py(times_ps, click0, click1, coin, quiet_ps, strict_quiet, window_ps, discard_doubles):
    n = times_ps.shape[0]
    retained = np.zeros(n, dtype=np.bool_)
    outcome = np.zeros(n, dtype=np.int8)
    last_raw = _NEVER
    last_kept = _NEVER
    for i in np.flatnonzero(click0 | click1):
        t = times_ps[i]
        gap = t - last_raw
        keep = gap > quiet_ps if strict_quiet else gap >= quiet_ps
        if keep and t - last_kept < window_ps:
            keep = False
        if click0[i] and click1[i]:
            if discard_doubles:
                keep = False
            outcome[i] = coin[i]
        else:
            outcome[i] = 0 if click0[i] else 1
        if keep:
            retained[i] = True
            last_kept = t
        last_raw = t
    return retained, outcome


def _postselect_loop(times_ps, click0, click1, coin, quiet_ps, strict_quiet, window_ps, discard_doubles):
    n = times_ps.shape[0]
    retained = np.zeros(n, dtype=np.bool_)
    outcome = np.zeros(n, dtype=np.int8)
    last_raw = -(2**62)
    last_kept = -(2**62)
    for i in range(n):
        c0 = click0[i]
        c1 = click1[i]
        if not (c0 or c1):
            continue
        t = times_ps[i]
        gap = t - last_raw
        if strict_quiet:
            keep = gap > quiet_ps
        else:
            keep = gap >= quiet_ps
        if keep and t - last_kept < window_ps:
            keep = False
        if c0 and c1:
            if discard_doubles:
                keep = False
            outcome[i] = coin[i]
        elif c0:
            outcome[i] = 0
        else:
            outcome[i] = 1
        if keep:
            retained[i] = True
            last_kept = t
        last_raw = t
    return retained, outcome


# ---------------------------------------------------------------------------
# light-cone constraints of the commit-point problem
# ---------------------------------------------------------------------------


def _reach_np(psi, d_bob_b0, d_bob_b1, wedge, budget0, budget1, cap):
    # d + |P - B_i| <= budget_i is linear in d once squared:
    # d_i* = (budget^2 - D^2) / (2 (budget - D cos(angle)))
    psi = np.asarray(psi, dtype=np.float64)
    den0 = 2.0 * (budget0 - d_bob_b0 * np.cos(psi))
    den1 = 2.0 * (budget1 - d_bob_b1 * np.cos(wedge - psi))
    num0 = budget0 * budget0 - d_bob_b0 * d_bob_b0
    num1 = budget1 * budget1 - d_bob_b1 * d_bob_b1
    with np.errstate(divide="ignore", invalid="ignore"):
        r0 = np.where(den0 > 0.0, num0 / den0, budget0)
        r1 = np.where(den1 > 0.0, num1 / den1, budget1)
    return np.minimum(np.minimum(r0, r1), cap)


def _reach_loop(psi, d_bob_b0, d_bob_b1, wedge, budget0, budget1, cap):
    n = psi.shape[0]
    out = np.empty(n, dtype=np.float64)
    num0 = budget0 * budget0 - d_bob_b0 * d_bob_b0
    num1 = budget1 * budget1 - d_bob_b1 * d_bob_b1
    for i in range(n):
        den0 = 2.0 * (budget0 - d_bob_b0 * np.cos(psi[i]))
        den1 = 2.0 * (budget1 - d_bob_b1 * np.cos(wedge - psi[i]))
        r0 = num0 / den0 if den0 > 0.0 else budget0
        r1 = num1 / den1 if den1 > 0.0 else budget1
        r = r0 if r0 < r1 else r1
        out[i] = r if r < cap else cap
    return out


if HAVE_NUMBA:
    JIT_KERNELS = {
        "dead_time": numba.njit(cache=True)(_dead_time_loop),
        "postselect": numba.njit(cache=True)(_postselect_loop),
        "reach": numba.njit(cache=True)(_reach_loop),
    }
else:  # pragma: no cover
    JIT_KERNELS = {}

PY_KERNELS = {
    "dead_time": _dead_time_py,
    "postselect": _postselect_py,
    "reach": _reach_np,
}

_ACTIVE = JIT_KERNELS if USE_NUMBA else PY_KERNELS
_dead_time_impl = _ACTIVE["dead_time"]
_postselect_impl = _ACTIVE["postselect"]
_reach_impl = _ACTIVE["reach"]


def apply_dead_time(times_ps, fire0, fire1, dead_ps):
    """Suppress firings that land inside a detector's dead interval.

    Detectors are independent and non-paralysable: a suppressed firing does
    not restart the dead interval. A detector is live again exactly
    ``dead_ps`` after its last click.
    """
    return _dead_time_impl(
        np.ascontiguousarray(times_ps, dtype=np.int64),
        np.ascontiguousarray(fire0, dtype=np.bool_),
        np.ascontiguousarray(fire1, dtype=np.bool_),
        np.int64(dead_ps),
    )


def postselect(times_ps, click0, click1, coin, quiet_ps, strict_quiet, window_ps, discard_doubles):
    """Decide which raw clicks Alice keeps and what bit each one records.

    A click is kept when the gap since the previous raw click (either
    detector, kept or not) is at least ``quiet_ps`` (strictly greater when
    ``strict_quiet``) and it is not within ``window_ps`` of the previous kept
    click. Double clicks take the bit from ``coin`` or are dropped.
    """
    return _postselect_impl(
        np.ascontiguousarray(times_ps, dtype=np.int64),
        np.ascontiguousarray(click0, dtype=np.bool_),
        np.ascontiguousarray(click1, dtype=np.bool_),
        np.ascontiguousarray(coin, dtype=np.int8),
        np.int64(quiet_ps),
        bool(strict_quiet),
        np.int64(window_ps),
        bool(discard_doubles),
    )


def reachable_distance(psi, d_bob_b0, d_bob_b1, wedge, budget0, budget1, cap):
    """Largest commit distance from Bob allowed at each angle ``psi``.

    Requires ``budget_i >= d_bob_b_i``; the caller handles infeasibility.
    """
    psi = np.ascontiguousarray(np.atleast_1d(psi), dtype=np.float64)
    return _reach_impl(
        psi,
        float(d_bob_b0),
        float(d_bob_b1),
        float(wedge),
        float(budget0),
        float(budget1),
        float(cap),
    )
