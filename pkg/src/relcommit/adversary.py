"""Explicit cheating strategies for both parties and their empirical success rates.

Bob's attacks try to learn Alice's basis from the detection report; Alice's
try to keep both openings available. Committed bits in Bob-side experiments
are balanced (exactly half of the trials per bit, in random order), so a
report that carries no basis information yields exactly 1/2.

Trials are split into chunks of at most ``CHUNK`` and chunk ``j`` draws from
the ``j``-th child of ``SeedSequence(seed)``; results do not depend on how the
chunks are scheduled.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import binomtest

from . import geometry, photonic, security
from .geometry import C, PartyId, ProtocolLayout, TimingObservations
from .photonic import Basis, DetectorModel, DoubleClicks, PostselectRule, Separation

CHUNK = 1000
TRIAL_GAP = 1e-6  # s between attack trials, far beyond any dead time
SOUNDNESS_TOL = 1e-12  # s


class Attacker(str, enum.Enum):
    ALICE = "Alice"
    BOB = "Bob"


class Strategy(str, enum.Enum):
    DOUBLE_CLICK = "strong_pulse_double_click"
    TWO_PULSE = "dead_time_two_pulse"
    THREE_PULSE = "dead_time_three_pulse"
    MULTI_PHOTON = "multi_photon_split"
    DELAYED_COMMIT = "delayed_commit"


ATTACKER_OF = {
    Strategy.DOUBLE_CLICK: Attacker.BOB,
    Strategy.TWO_PULSE: Attacker.BOB,
    Strategy.THREE_PULSE: Attacker.BOB,
    Strategy.MULTI_PHOTON: Attacker.ALICE,
    Strategy.DELAYED_COMMIT: Attacker.ALICE,
}


@dataclass(frozen=True)
class AttackSpec:
    strategy: Strategy
    countermeasure: str = ""
    intensity: float = 1e3
    offset: float = 1e-9  # how far past t_dead the third pulse lands
    spacing: Optional[float] = None  # two-pulse separation, default t_dead/2
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.intensity > 0.0:
            raise ValueError("intensity must be positive")
        if self.offset < 0.0 or (self.spacing is not None and self.spacing < 0.0):
            raise ValueError("timing offsets must be non-negative")

    @property
    def attacker(self) -> Attacker:
        return ATTACKER_OF[self.strategy]


@dataclass(frozen=True)
class AttackOutcome:
    trials: int
    success_count: int
    estimated_probability: float
    ci_low: float
    ci_high: float
    guarantee_respected: bool
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.success_count <= self.trials:
            raise ValueError("success_count must lie in [0, trials]")


def wilson_interval(successes: int, trials: int, confidence: float = 0.95):
    if trials == 0:
        return math.nan, math.nan
    ci = binomtest(successes, trials).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


def _outcome(successes, trials, respected, **details) -> AttackOutcome:
    lo, hi = wilson_interval(successes, trials)
    p = successes / trials if trials else math.nan
    return AttackOutcome(trials, successes, p, lo, hi, bool(respected), details)


def _seed_sequence(seed) -> np.random.SeedSequence:
    return seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)


def _chunks(trials: int, seed):
    n_chunks = -(-trials // CHUNK)
    children = _seed_sequence(seed).spawn(n_chunks)
    for j, child in enumerate(children):
        yield j * CHUNK, min(CHUNK, trials - j * CHUNK), child


def balanced_bits(trials: int, rng) -> np.ndarray:
    bits = np.arange(trials, dtype=np.int8) % 2
    return np.random.default_rng(rng).permutation(bits)


# ---------------------------------------------------------------------------
# dishonest Bob
# ---------------------------------------------------------------------------


def _bob_experiment(
    pattern: Sequence[tuple],
    guess: Callable[[np.ndarray], np.ndarray],
    rule: PostselectRule,
    trials: int,
    seed,
    intensity: float,
    det: DetectorModel,
):
    """Send ``pattern`` (offset, basis, bit) once per trial; Bob guesses from the report.

    ``guess`` maps a (trials, len(pattern)) detected mask to guessed bases.
    Returns the number of correct guesses.
    """
    m = len(pattern)
    offsets = np.array([p[0] for p in pattern])
    basis = np.array([p[1] for p in pattern], dtype=np.int8)
    bit = np.array([p[2] for p in pattern], dtype=np.int8)
    ss = _seed_sequence(seed)
    s_bits, s_run = ss.spawn(2)
    committed = balanced_bits(trials, s_bits)
    hits = 0
    for start, n, child in _chunks(trials, s_run):
        rng = np.random.default_rng(child)
        emit = (np.arange(n)[:, None] * TRIAL_GAP + offsets[None, :]).ravel()
        photons = rng.poisson(intensity, n * m)
        train = photonic.PulseTrain.from_arrays(np.tile(basis, n), np.tile(bit, n), photons, emit)
        alice = np.repeat(committed[start : start + n], m)
        dets = photonic.detect(train, alice, det, rule, rng, gate=20e-9, baseline_error=0.0)
        mask = np.zeros(n * m, dtype=bool)
        mask[dets.detected_indices] = True
        guessed = guess(mask.reshape(n, m))
        hits += int(np.sum(guessed == committed[start : start + n]))
    return hits


def _bob_outcome(hits, trials, **details):
    sigma = 0.5 / math.sqrt(trials) if trials else 0.0
    respected = trials == 0 or hits / trials <= 0.5 + 3.0 * sigma
    return _outcome(hits, trials, respected, **details)


def bob_double_click_attack(countermeasure, trials: int, seed, intensity: float = 1e3, det: DetectorModel = None) -> AttackOutcome:
    """One strong H pulse per trial. A click in the rectilinear basis is single,
    in the diagonal basis double; Bob guesses rect when the pulse is reported."""
    cm = DoubleClicks(countermeasure)
    det = det or DetectorModel(baseline_error=0.0)
    rule = PostselectRule(cm, Separation.QUIET_PERIOD)
    hits = _bob_experiment(
        [(0.0, Basis.RECT, 0)],
        lambda seen: np.where(seen[:, 0], Basis.RECT, Basis.DIAG),
        rule, trials, seed, intensity, det,
    )
    return _bob_outcome(hits, trials, countermeasure=cm.value, intensity=intensity)


def bob_dead_time_attack(
    variant: str,
    countermeasure,
    trials: int,
    seed,
    intensity: float = 1e3,
    det: DetectorModel = None,
    offset: float = 1e-9,
    spacing: Optional[float] = None,
) -> AttackOutcome:
    """Strong-pulse patterns that make a detection depend on which detectors are dead.

    ``two_pulse``: H then V ``spacing`` later (default t_dead/2); with the
    rectilinear basis both click, with the diagonal one the second lands in
    the dead time. ``three_pulse``: H at 0, V at t_dead/2, V at t_dead +
    ``offset``; only the diagonal basis leaves the third one detectable.
    """
    sep = Separation(countermeasure)
    det = det or DetectorModel(baseline_error=0.0)
    rule = PostselectRule(DoubleClicks.RANDOM_ASSIGN, sep)
    td = det.dead_time
    if variant == "two_pulse":
        gap = td / 2.0 if spacing is None else spacing
        pattern = [(0.0, Basis.RECT, 0), (gap, Basis.RECT, 1)]
        guess = lambda seen: np.where(seen[:, 1], Basis.RECT, Basis.DIAG)  # noqa: E731
    elif variant == "three_pulse":
        pattern = [(0.0, Basis.RECT, 0), (td / 2.0, Basis.RECT, 1), (td + offset, Basis.RECT, 1)]
        guess = lambda seen: np.where(seen[:, 2], Basis.DIAG, Basis.RECT)  # noqa: E731
    else:
        raise ValueError(f"unknown dead-time variant {variant!r}")
    hits = _bob_experiment(pattern, guess, rule, trials, seed, intensity, det)
    return _bob_outcome(hits, trials, variant=variant, countermeasure=sep.value, intensity=intensity)


# ---------------------------------------------------------------------------
# dishonest Alice: multi-photon splitting
# ---------------------------------------------------------------------------


def alice_multi_photon_attack(
    trials: int,
    seed,
    src: photonic.SourceParams = photonic.SourceParams(),
    params: security.SecurityParams = security.SecurityParams(),
    subtract_multiphoton: bool = True,
) -> AttackOutcome:
    """Alice counts photons non-destructively and reports only multi-photon pulses.

    On each of them she measures one photon rectilinearly and one diagonally,
    so both agents hold a valid-looking opening for either bit. Success means
    both openings are accepted with the intended bit.
    """
    bound = security.epsilon_b_bound(params).eps_b
    acc0 = np.zeros(trials, dtype=bool)
    acc1 = np.zeros(trials, dtype=bool)
    n_multi = np.zeros(trials, dtype=np.int64)
    reasons = {}
    children = _seed_sequence(seed).spawn(trials)
    for t, child in enumerate(children):
        s_src, s_meas = child.spawn(2)
        pulses = photonic.generate_pulse_train(src, s_src)
        rng = np.random.default_rng(s_meas)
        detected = np.flatnonzero(pulses.photon_number >= 2).astype(np.int64)
        n_multi[t] = detected.size
        coin = rng.integers(0, 2, (2, len(pulses)), dtype=np.int8)
        rect = np.where(pulses.basis == Basis.RECT, pulses.bit, coin[0])
        diag = np.where(pulses.basis == Basis.DIAG, pulses.bit, coin[1])
        for want, res, acc in ((0, rect, acc0), (1, diag, acc1)):
            decl = security.Declaration(detected, res[detected])
            v = security.verify(params, pulses, detected, decl, decl, subtract_multiphoton=subtract_multiphoton)
            acc[t] = v.accepted and v.deduced_bit == want
            reasons[v.reason.value] = reasons.get(v.reason.value, 0) + 1
    p0 = float(acc0.mean()) if trials else math.nan
    p1 = float(acc1.mean()) if trials else math.nan
    both = int(np.sum(acc0 & acc1))
    excess = p0 + p1 - 1.0
    per_trial = acc0.astype(float) + acc1.astype(float)
    sigma = float(per_trial.std(ddof=0) / math.sqrt(trials)) if trials else 0.0
    respected = trials == 0 or excess <= bound + 3.0 * sigma
    return _outcome(
        both, trials, respected,
        p0=p0, p1=p1, excess=excess, eps_b=bound,
        mean_multiphoton=float(n_multi.mean()) if trials else 0.0,
        reasons=dict(sorted(reasons.items())),
        subtract_multiphoton=subtract_multiphoton,
    )


# ---------------------------------------------------------------------------
# dishonest Alice: delayed commitment with a light-speed quantum memory
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CourierStrategy:
    """Commit at distance ``r`` from Bob, angle ``psi`` (from Bob->B0 toward B1), at ``t_commit`` after t0."""

    r: float
    psi: float
    t_commit: float

    def __post_init__(self):
        if self.r < 0.0 or self.t_commit < 0.0:
            raise ValueError("r and t_commit must be non-negative")


@dataclass(frozen=True)
class CourierResult:
    strategy: CourierStrategy
    reachable: bool  # the memory can be at the point by t_commit
    arrivals: tuple
    accepted: bool
    t_commit_upper: float
    exclusions: tuple
    sound: bool


def courier_arrivals(layout: ProtocolLayout, s: CourierStrategy, t0: float = 0.0):
    """Absolute arrival instants at B0 and B1 when results go point -> A_i -> B_i at c."""
    p = geometry.point_from_bob(layout, s.r, s.psi)
    out = []
    for a, b in ((PartyId.A0, PartyId.B0), (PartyId.A1, PartyId.B1)):
        path = geometry.distance_from_point(layout, p, a) + geometry.distance(layout, a, b)
        out.append(t0 + s.t_commit + path / C)
    return tuple(out)


def evaluate_courier(layout: ProtocolLayout, deadlines: TimingObservations, s: CourierStrategy) -> CourierResult:
    """Bob accepts when both reveals meet their deadlines and the arrivals are geometrically consistent."""
    reachable = s.r <= C * s.t_commit * (1.0 + 1e-12)
    t_b0, t_b1 = courier_arrivals(layout, s, deadlines.t0)
    on_time = reachable and t_b0 <= deadlines.t_b0 and t_b1 <= deadlines.t_b1
    upper = math.nan
    excl = (False, False)
    accepted = False
    if on_time:
        obs = TimingObservations(deadlines.t0, t_b0, t_b1)
        try:
            upper = geometry.solve_commit_point(layout, obs).t_commit_upper
            accepted = True
        except geometry.TimingInconsistent:
            accepted = False
        excl = tuple(geometry.location_exclusion(layout, obs))
    sound = (not accepted) or s.t_commit <= upper + SOUNDNESS_TOL
    return CourierResult(s, reachable, (t_b0, t_b1), accepted, upper, excl, sound)


def random_courier_strategies(layout: ProtocolLayout, deadlines: TimingObservations, n: int, seed):
    """Strategies that are reachable and meet both deadlines, drawn by rejection sampling."""
    rng = np.random.default_rng(seed)
    g = geometry.derived_distances(layout)
    r_max = C * max(deadlines.t_b0, deadlines.t_b1) - C * deadlines.t0
    r_max = min(r_max, 2.0 * max(g.d_bob_b0, g.d_bob_b1))
    out = []
    while len(out) < n:
        r = r_max * math.sqrt(rng.random())
        psi = rng.uniform(-math.pi, math.pi)
        probe = CourierStrategy(r, psi, 0.0)
        a0, a1 = courier_arrivals(layout, probe, deadlines.t0)
        latest = min(deadlines.t_b0 - a0, deadlines.t_b1 - a1)
        earliest = r / C
        if latest < earliest:
            continue
        out.append(CourierStrategy(r, psi, rng.uniform(earliest, latest)))
    return out


def alice_delayed_commit_attack(
    strategies: Sequence[CourierStrategy],
    layout: ProtocolLayout = None,
    deadlines: TimingObservations = None,
) -> AttackOutcome:
    """Success counts accepted strategies; the guarantee holds if none beat the commit-time bound."""
    layout = layout or ProtocolLayout()
    deadlines = deadlines or TimingObservations(1.53e-6, 92.85e-6, 102.74e-6)
    results = [evaluate_courier(layout, deadlines, s) for s in strategies]
    accepted = [r for r in results if r.accepted]
    slack = [r.t_commit_upper - r.strategy.t_commit for r in accepted]
    return _outcome(
        len(accepted), len(results), all(r.sound for r in results),
        violations=sum(not r.sound for r in results),
        min_slack=min(slack) if slack else math.nan,
        results=results,
    )


def run_attack(spec: AttackSpec, trials: int, seed, **kwargs) -> AttackOutcome:
    """Dispatch on ``spec.strategy`` with the countermeasure and pulse parameters it carries."""
    s = spec.strategy
    if s is Strategy.DOUBLE_CLICK:
        return bob_double_click_attack(spec.countermeasure or DoubleClicks.RANDOM_ASSIGN, trials, seed, spec.intensity)
    if s in (Strategy.TWO_PULSE, Strategy.THREE_PULSE):
        variant = "two_pulse" if s is Strategy.TWO_PULSE else "three_pulse"
        return bob_dead_time_attack(
            variant, spec.countermeasure or Separation.QUIET_PERIOD, trials, seed,
            spec.intensity, offset=spec.offset, spacing=spec.spacing,
        )
    if s is Strategy.MULTI_PHOTON:
        subtract = spec.countermeasure not in ("none", "no_estimation")
        return alice_multi_photon_attack(trials, seed, subtract_multiphoton=subtract, **kwargs)
    layout = kwargs.get("layout") or ProtocolLayout()
    deadlines = kwargs.get("deadlines") or TimingObservations(1.53e-6, 92.85e-6, 102.74e-6)
    strategies = random_courier_strategies(layout, deadlines, trials, seed)
    return alice_delayed_commit_attack(strategies, layout, deadlines)
