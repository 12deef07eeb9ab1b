import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from relcommit import adversary as A
from relcommit import geometry as G
from relcommit.geometry import C, PartyId
from relcommit.photonic import SourceParams
from relcommit.security import SecurityParams

FIELD = G.ProtocolLayout()
EXP1 = G.TimingObservations(1.53e-6, 92.85e-6, 102.74e-6)


# --- bookkeeping ---


def wilson_oracle(k, n, z=1.959963984540054):
    p = k / n
    centre = (p + z * z / (2 * n)) / (1 + z * z / n)
    half = z / (1 + z * z / n) * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    return centre - half, centre + half


@pytest.mark.parametrize("k, n", [(0, 10), (5, 10), (500, 1000), (9999, 10000), (7, 7)])
def test_wilson_interval_matches_closed_form(k, n):
    lo, hi = A.wilson_interval(k, n)
    olo, ohi = wilson_oracle(k, n)
    assert lo == pytest.approx(max(olo, 0.0), abs=1e-9)
    assert hi == pytest.approx(min(ohi, 1.0), abs=1e-9)


def test_empty_experiment():
    assert all(math.isnan(v) for v in A.wilson_interval(0, 0))
    out = A.bob_double_click_attack("random_assign", 0, 1)
    assert out.trials == 0 and out.guarantee_respected


def test_outcome_invariant():
    with pytest.raises(ValueError):
        A.AttackOutcome(3, 4, 1.0, 0.0, 1.0, True)


def test_balanced_bits():
    b = A.balanced_bits(1001, 3)
    assert abs(int(b.sum()) - 500) <= 1


def test_attacker_roles():
    assert A.AttackSpec(A.Strategy.TWO_PULSE).attacker is A.Attacker.BOB
    assert A.AttackSpec(A.Strategy.DELAYED_COMMIT).attacker is A.Attacker.ALICE
    with pytest.raises(ValueError):
        A.AttackSpec(A.Strategy.TWO_PULSE, intensity=0.0)


# --- dishonest Bob ---


def test_double_click_leak_and_fix():
    leak = A.bob_double_click_attack("discard_doubles", 2000, 1)
    fixed = A.bob_double_click_attack("random_assign", 2000, 1)
    assert leak.estimated_probability > 0.99 and not leak.guarantee_respected
    assert abs(fixed.estimated_probability - 0.5) < 0.04 and fixed.guarantee_respected


@pytest.mark.parametrize(
    "variant, countermeasure, leaks",
    [
        ("two_pulse", "none", True),
        ("two_pulse", "naive_separation", False),
        ("two_pulse", "quiet_period_2tdead", False),
        ("three_pulse", "none", True),
        ("three_pulse", "naive_separation", True),
        ("three_pulse", "quiet_period_2tdead", False),
    ],
)
def test_dead_time_attacks(variant, countermeasure, leaks):
    out = A.bob_dead_time_attack(variant, countermeasure, 2000, 2)
    if leaks:
        assert out.estimated_probability > 0.99 and not out.guarantee_respected
    else:
        assert abs(out.estimated_probability - 0.5) < 0.04 and out.guarantee_respected


def test_widely_separated_pulses_carry_no_information():
    out = A.bob_dead_time_attack("two_pulse", "none", 2000, 3, spacing=300e-9)
    assert abs(out.estimated_probability - 0.5) < 0.04


def test_vanishing_intensity_carries_no_information():
    out = A.bob_double_click_attack("discard_doubles", 2000, 4, intensity=1e-9)
    assert out.estimated_probability == pytest.approx(0.5, abs=0.04)


def test_attacks_are_reproducible():
    a = A.bob_dead_time_attack("three_pulse", "quiet_period_2tdead", 1500, 9)
    b = A.bob_dead_time_attack("three_pulse", "quiet_period_2tdead", 1500, 9)
    assert a == b


# --- dishonest Alice: multi-photon splitting ---


def test_multi_photon_split_rejected_with_estimation():
    out = A.alice_multi_photon_attack(20, 5)
    assert out.success_count == 0 and out.guarantee_respected
    assert out.details["reasons"] == {"insufficient_singles": 40}
    assert 60 < out.details["mean_multiphoton"] < 110


def test_multi_photon_split_wins_without_estimation():
    src = SourceParams(mu=5.0, n_pulses=500)
    out = A.alice_multi_photon_attack(10, 6, src=src, subtract_multiphoton=False)
    assert out.details["p0"] == 1.0 and out.details["p1"] == 1.0
    assert not out.guarantee_respected


def test_vacuum_source_gives_nothing_to_split():
    out = A.alice_multi_photon_attack(5, 7, src=SourceParams(mu=1e-9, n_pulses=500), params=SecurityParams(mu=1e-9))
    assert out.success_count == 0


# --- dishonest Alice: delayed commitment ---


def test_commit_at_bob_at_start_is_accepted():
    s = A.CourierStrategy(0.0, 0.0, 0.0)
    r = A.evaluate_courier(FIELD, EXP1, s)
    assert r.reachable and r.accepted and r.sound
    # the observed arrivals pin the commitment to Bob at t0
    assert r.t_commit_upper == pytest.approx(0.0, abs=1e-12)


def test_commit_at_the_latest_point_is_tight():
    sol = G.solve_commit_point(FIELD, EXP1)
    s = A.CourierStrategy(sol.d_bob_pcommit * (1 - 1e-12), sol.psi, sol.t_commit_upper * (1 - 1e-12))
    r = A.evaluate_courier(FIELD, EXP1, s)
    assert r.accepted and r.sound
    assert r.t_commit_upper - s.t_commit < 1e-9
    for got, deadline in zip(r.arrivals, (EXP1.t_b0, EXP1.t_b1)):
        assert got == pytest.approx(deadline, abs=1e-9)


def test_commit_at_agent_is_rejected():
    r_a0 = G.distance(FIELD, PartyId.BOB, PartyId.A0)
    s = A.CourierStrategy(r_a0, 0.0, r_a0 / C)
    r = A.evaluate_courier(FIELD, EXP1, s)
    assert r.reachable and not r.accepted
    assert r.arrivals[1] > EXP1.t_b1
    assert G.location_exclusion(FIELD, EXP1).a0_excluded


def test_unreachable_point_is_rejected():
    r = A.evaluate_courier(FIELD, EXP1, A.CourierStrategy(3000.0, 0.0, 1e-6))
    assert not r.reachable and not r.accepted


@given(st.integers(0, 2**32 - 1))
def test_random_couriers_never_beat_the_bound(seed):
    out = A.alice_delayed_commit_attack(A.random_courier_strategies(FIELD, EXP1, 25, seed))
    assert out.guarantee_respected and out.details["violations"] == 0
    assert out.success_count == 25


def test_run_attack_dispatch():
    out = A.run_attack(A.AttackSpec(A.Strategy.DOUBLE_CLICK, "random_assign"), 500, 8)
    assert out.details["countermeasure"] == "random_assign"
    out = A.run_attack(A.AttackSpec(A.Strategy.DELAYED_COMMIT), 50, 8)
    assert out.trials == 50 and out.guarantee_respected
    out = A.run_attack(A.AttackSpec(A.Strategy.MULTI_PHOTON, "none"), 2, 8)
    assert out.details["subtract_multiphoton"] is False
    assert np.isfinite(out.details["eps_b"])
