"""Planar layout of the six parties and the light-cone bound on the commit time.

Everything is in SI units (metres, seconds). The layout is described only by
distances and the A0-Alice-A1 opening angle; the plane coordinates used to
evaluate distances between arbitrary parties stay internal.

Placement convention: Alice sits at the origin, the bisector of the
A0-Alice-A1 angle points along +y, Bob sits ``d_alice_bob`` behind Alice on
that bisector, and each B_i lies on the ray Alice->A_i, ``d_ai_bi`` beyond A_i.
This is the arrangement under which the closed forms for d_BobB_i and
theta_i below hold.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ._search import grid_then_golden
from .kernels import reachable_distance

C = 299_792_458.0  # m/s, exact


class GeometryError(ValueError):
    """Layout or timing data that makes the geometric quantities undefined."""


class TimingInconsistent(GeometryError):
    """Arrival-time difference larger than the B0-B1 light time."""


class PartyId(str, enum.Enum):
    ALICE = "Alice"
    A0 = "A0"
    A1 = "A1"
    BOB = "Bob"
    B0 = "B0"
    B1 = "B1"


# links with a configurable speed factor; any other pair defaults to 1.0
LINKS = ("bob-alice", "alice-a0", "alice-a1", "a0-b0", "a1-b1", "b0-bob", "b1-bob")
FIBER = 1.0 / 1.5


def default_speed_factors():
    factors = {name: 1.0 for name in LINKS}
    factors["b0-bob"] = FIBER
    factors["b1-bob"] = FIBER
    return factors


@dataclass(frozen=True)
class ProtocolLayout:
    """Distances in metres, ``theta`` in radians. Defaults are the field test."""

    d_alice_bob: float = 0.0
    d_alice_a0: float = 9300.0
    d_alice_a1: float = 12300.0
    d_a0_b0: float = 0.0
    d_a1_b1: float = 0.0
    theta: float = math.radians(165.0)
    speed_factors: dict = field(default_factory=default_speed_factors)

    def __post_init__(self):
        for name in ("d_alice_bob", "d_alice_a0", "d_alice_a1", "d_a0_b0", "d_a1_b1"):
            v = getattr(self, name)
            if not (v >= 0.0 and math.isfinite(v)):
                raise GeometryError(f"{name} must be a finite non-negative length, got {v!r}")
        if not (0.0 < self.theta <= math.pi):
            raise GeometryError(f"theta must lie in (0, pi], got {self.theta!r}")
        for link, f in self.speed_factors.items():
            if link not in LINKS:
                raise GeometryError(f"unknown link {link!r}")
            if not (0.0 < f <= 1.0):
                raise GeometryError(f"speed factor for {link} must lie in (0, 1], got {f!r}")

    def speed_factor(self, a: PartyId, b: PartyId) -> float:
        key = f"{a.value.lower()}-{b.value.lower()}"
        rev = f"{b.value.lower()}-{a.value.lower()}"
        return self.speed_factors.get(key, self.speed_factors.get(rev, 1.0))


@dataclass(frozen=True)
class TimingObservations:
    """Absolute instants in seconds: Bob's first emission and the last reveal arrivals."""

    t0: float
    t_b0: float
    t_b1: float

    def __post_init__(self):
        # equality is admitted so that zero time budgets can be expressed
        if not (self.t_b0 >= self.t0 and self.t_b1 >= self.t0):
            raise GeometryError("arrival instants must not precede t0")


class DerivedGeometry(NamedTuple):
    d_bob_b0: float
    d_bob_b1: float
    theta0: float
    theta1: float
    d_b0_b1: float


class CommitPointMax(NamedTuple):
    q: float
    d_bob_pcommit_max: float
    d_pmax_b0: float
    d_pmax_b1: float


@dataclass(frozen=True)
class CommitPointSolution:
    d_bob_pcommit: float
    psi: float
    t_commit_upper: float
    at_max_point: bool


class Exclusion(NamedTuple):
    a0_excluded: bool
    a1_excluded: bool


def _coordinates(layout: ProtocolLayout) -> dict:
    half = layout.theta / 2.0
    u0 = np.array([-math.sin(half), math.cos(half)])
    u1 = np.array([math.sin(half), math.cos(half)])
    return {
        PartyId.ALICE: np.zeros(2),
        PartyId.BOB: np.array([0.0, -layout.d_alice_bob]),
        PartyId.A0: layout.d_alice_a0 * u0,
        PartyId.A1: layout.d_alice_a1 * u1,
        PartyId.B0: (layout.d_alice_a0 + layout.d_a0_b0) * u0,
        PartyId.B1: (layout.d_alice_a1 + layout.d_a1_b1) * u1,
    }


def distance(layout: ProtocolLayout, a: PartyId, b: PartyId) -> float:
    xy = _coordinates(layout)
    return float(math.hypot(*(xy[a] - xy[b])))


def propagation_delay(layout: ProtocolLayout, a: PartyId, b: PartyId) -> float:
    """Light time over the a-b link, slowed by that link's speed factor."""
    return distance(layout, a, b) / (C * layout.speed_factor(a, b))


def agent_separation(layout: ProtocolLayout) -> float:
    """d_A0A1 by the law of cosines at Alice."""
    a, b = layout.d_alice_a0, layout.d_alice_a1
    return math.sqrt(max(a * a + b * b - 2.0 * a * b * math.cos(layout.theta), 0.0))


def derived_distances(layout: ProtocolLayout) -> DerivedGeometry:
    """Bob-to-agent distances, the angles they make with the bisector, and d_B0B1."""
    dab = layout.d_alice_bob
    cos_half = math.cos(layout.theta / 2.0)
    out = []
    for reach in (layout.d_alice_a0 + layout.d_a0_b0, layout.d_alice_a1 + layout.d_a1_b1):
        d = math.sqrt(max(dab * dab + reach * reach + 2.0 * dab * reach * cos_half, 0.0))
        if d == 0.0:
            raise GeometryError("Bob coincides with one of his agents; angles are undefined")
        ang = math.acos(min(1.0, max(-1.0, (dab + reach * cos_half) / d)))
        out.append((d, ang))
    (d0, th0), (d1, th1) = out
    d01 = math.sqrt(max(d0 * d0 + d1 * d1 - 2.0 * d0 * d1 * math.cos(th0 + th1), 0.0))
    return DerivedGeometry(d0, d1, th0, th1, d01)


def t_max_simple(obs: TimingObservations, d_a0_a1: float) -> float:
    """Latest commit time (relative to t0) when agent offsets are negligible."""
    if not d_a0_a1 > 0.0:
        raise GeometryError("d_a0_a1 must be positive")
    return 0.5 * (obs.t_b0 + obs.t_b1 - d_a0_a1 / C) - obs.t0


def commit_point_max(layout: ProtocolLayout, obs: TimingObservations) -> CommitPointMax:
    """Split point q on B0B1 and the distance from Bob to that farthest commit point."""
    g = derived_distances(layout)
    if g.d_b0_b1 == 0.0:
        raise GeometryError("B0 and B1 coincide")
    q = 0.5 * (1.0 - C * (obs.t_b1 - obs.t_b0) / g.d_b0_b1)
    if not (0.0 <= q <= 1.0):
        raise TimingInconsistent(
            f"arrival gap {obs.t_b1 - obs.t_b0:.6e} s exceeds the B0-B1 light time "
            f"{g.d_b0_b1 / C:.6e} s (q = {q:.6f})"
        )
    wedge = g.theta0 + g.theta1
    s = min(1.0, (g.d_bob_b0 / g.d_b0_b1) * math.sin(wedge))
    beta = math.asin(s)
    # asin only covers an acute angle at B1; take the obtuse branch when the triangle needs it
    if g.d_bob_b0**2 > g.d_bob_b1**2 + g.d_b0_b1**2:
        beta = math.pi - beta
    xi = (1.0 - q) * g.d_bob_b0 * math.sin(wedge)
    shift = (1.0 - q) * g.d_b0_b1 * math.cos(beta)
    d_max = math.sqrt(xi * xi + (g.d_bob_b1 - shift) ** 2)
    return CommitPointMax(q, d_max, q * g.d_b0_b1, (1.0 - q) * g.d_b0_b1)


def solve_commit_point(
    layout: ProtocolLayout,
    obs: TimingObservations,
    n_grid: int = 10_000,
    psi_tol: float = 1e-9,
) -> CommitPointSolution:
    """Farthest point Alice could reach and still meet both reveal deadlines.

    When that point is the capped maximum, the commit-time bound is
    ``(t_b0 + t_b1 - d_B0B1/c)/2 - t0``; otherwise it is the travel time to
    the point. An empty feasible set yields the commit-at-Bob-at-t0 solution.
    """
    g = derived_distances(layout)
    budget0 = C * (obs.t_b0 - obs.t0)
    budget1 = C * (obs.t_b1 - obs.t0)
    if budget0 < g.d_bob_b0 or budget1 < g.d_bob_b1:
        return CommitPointSolution(0.0, 0.0, 0.0, False)

    top = commit_point_max(layout, obs)
    cap = min(budget0, budget1, top.d_bob_pcommit_max)
    wedge = g.theta0 + g.theta1
    args = (g.d_bob_b0, g.d_bob_b1, wedge, budget0, budget1, cap)

    psi, neg_d = grid_then_golden(
        lambda x: -reachable_distance(x, *args),
        lambda x: -float(reachable_distance(x, *args)[0]),
        0.0,
        wedge,
        n_grid,
        psi_tol,
    )
    d_sol = max(-neg_d, 0.0)

    at_max = math.isclose(d_sol, top.d_bob_pcommit_max, rel_tol=1e-9, abs_tol=1e-6)
    if at_max:
        d = top.d_bob_pcommit_max
        if d > 0.0:
            cos_psi = (g.d_bob_b0**2 + d * d - top.d_pmax_b0**2) / (2.0 * g.d_bob_b0 * d)
            psi = math.acos(min(1.0, max(-1.0, cos_psi)))
        else:
            psi = 0.0
        return CommitPointSolution(d, psi, t_max_simple(obs, g.d_b0_b1), True)
    return CommitPointSolution(d_sol, psi, d_sol / C, False)


def location_exclusion(layout: ProtocolLayout, obs: TimingObservations) -> Exclusion:
    """Whether a detour through A0 (resp. A1) could have met B1's (resp. B0's) arrival."""
    via_a0 = distance(layout, PartyId.BOB, PartyId.A0) + distance(layout, PartyId.A0, PartyId.B1)
    via_a1 = distance(layout, PartyId.BOB, PartyId.A1) + distance(layout, PartyId.A1, PartyId.B0)
    return Exclusion(
        bool(via_a0 > C * (obs.t_b1 - obs.t0)),
        bool(via_a1 > C * (obs.t_b0 - obs.t0)),
    )


def location_exclusion_approx(layout: ProtocolLayout, obs: TimingObservations) -> Exclusion:
    """Same test with the small offsets dropped: d_AliceA_i + d_A0A1 against the other agent's budget."""
    d01 = agent_separation(layout)
    return Exclusion(
        bool(layout.d_alice_a0 + d01 > C * (obs.t_b1 - obs.t0)),
        bool(layout.d_alice_a1 + d01 > C * (obs.t_b0 - obs.t0)),
    )


def point_from_bob(layout: ProtocolLayout, r: float, psi: float) -> np.ndarray:
    """Plane position at distance ``r`` from Bob, ``psi`` radians from Bob->B0 turning toward B1."""
    xy = _coordinates(layout)
    bob = xy[PartyId.BOB]
    u0 = xy[PartyId.B0] - bob
    u0 = u0 / math.hypot(*u0)
    u1 = xy[PartyId.B1] - bob
    turn = 1.0 if u0[0] * u1[1] - u0[1] * u1[0] >= 0.0 else -1.0
    c, s = math.cos(psi), turn * math.sin(psi)
    return bob + r * np.array([c * u0[0] - s * u0[1], s * u0[0] + c * u0[1]])


def distance_from_point(layout: ProtocolLayout, point, party: PartyId) -> float:
    return float(math.hypot(*(np.asarray(point) - _coordinates(layout)[party])))
