"""End-to-end acceptance checks, one test per criterion.

Runtimes are measured after a warm-up call so that JIT compilation is not
counted. A PASS/FAIL line per criterion is printed in the terminal summary.
"""

import subprocess
import sys
import time

import numpy as np
import pytest
from scipy.stats import chi2_contingency

from oracles import feasible_timing, oracle_solve
from relcommit import adversary as A
from relcommit import config, geometry as G, security as S
from relcommit.photonic import DetectorModel, SourceParams
from relcommit.protocol import EngineConfig, run_honest_protocol

FIELD = G.ProtocolLayout()
T_COMMIT_US = [60.54, 60.68, 60.70, 60.70, 60.94, 60.65, 60.84, 60.91]
DETECTIONS = [(189, 193), (196, 197), (203, 184), (195, 205), (192, 192), (186, 199), (186, 218), (196, 227)]
SINGLES = [(112, 116), (119, 120), (126, 107), (118, 128), (115, 115), (109, 122), (109, 141), (119, 150)]


def timed(fn, warmup=True):
    if warmup:
        fn()
    t = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t


@pytest.mark.criterion(1, "binding bound at field parameters")
def test_binding_bound(record_property):
    params = S.SecurityParams(n_tol=107, e_tol=0.015, eps_rect=0.0021, eps_diag=0.0021)
    b, dt = timed(lambda: S.epsilon_b_bound(params))
    record_property("runtime_s", dt)
    assert 0.0560 <= b.eps_b <= 0.0572
    assert abs(b.delta_star - 0.2953) <= 5e-4
    assert dt < 1.0


@pytest.mark.criterion(2, "multi-photon probability and deviation")
def test_multiphoton_estimates(record_property):
    def compute():
        return S.p_multi_bound(0.183, 0.1), S.solve_delta_multi(0.0177, 2838, 0.0021)

    (p, dm), dt = timed(compute)
    record_property("runtime_s", dt)
    assert round(p, 4) == 0.0177
    assert abs(dm - 0.00937) <= 1e-4
    assert dt < 1.0


@pytest.mark.criterion(3, "single-photon counts for all 16 field cells")
def test_single_photon_table(record_property):
    def compute():
        dm = S.solve_delta_multi(0.0177, 2838, 0.0021)
        return [tuple(S.estimate_n_single(d, 2838, 0.0177, dm) for d in row) for row in DETECTIONS]

    got, dt = timed(compute)
    record_property("runtime_s", dt)
    assert got == SINGLES
    assert dt < 1.0


@pytest.mark.criterion(4, "commit-time bound and exclusions for the 8 field runs")
def test_field_geometry(record_property):
    def compute():
        d = G.agent_separation(FIELD)
        rows = []
        for exp in range(1, 9):
            obs = config.field_timing(exp)
            rows.append(
                (G.t_max_simple(obs, d) * 1e6, G.location_exclusion(FIELD, obs), G.location_exclusion_approx(FIELD, obs))
            )
        return d, rows

    (d, rows), dt = timed(compute)
    record_property("runtime_s", dt)
    assert d == pytest.approx(21420.0, abs=10.0)
    for (t, exact, approx), ref in zip(rows, T_COMMIT_US):
        assert abs(t - ref) <= 0.05
        assert tuple(exact) == (True, True) and tuple(approx) == (True, True)
    assert dt < 1.0


# a miniature protocol: 256 pulses per train, thresholds scaled so runs can pass
MINI_SOURCE = SourceParams(n_pulses=256)
MINI_PARAMS = S.SecurityParams(n_tol=4, e_tol=0.25, eps_rect=0.1, eps_diag=0.1)
MINI_RUNS = 10_000


def honest_suite(n_runs):
    det = DetectorModel()
    engine = EngineConfig(t0=1.53e-6)
    table = np.zeros((2, 8), dtype=np.int64)
    accepted = wrong = matched_errors = matched_detections = 0
    sound = ordered = True
    for i in range(n_runs):
        bit = i % 2
        tr, v = run_honest_protocol(FIELD, MINI_SOURCE, det, MINI_PARAMS, bit, [31, i], engine)
        pulses = tr.pulses
        seen = np.zeros(len(pulses), dtype=np.int64)
        seen[tr.detected_indices] = 1
        # what Bob can see per pulse: his prepared state and whether it was reported
        table[bit] += np.bincount((pulses.basis * 2 + pulses.bit) * 2 + seen, minlength=8)
        est = v.estimation
        matched_errors += (est.n_e_rect, est.n_e_diag)[bit]
        matched_detections += (est.n_detect_rect, est.n_detect_diag)[bit]
        if v.accepted:
            accepted += 1
            wrong += v.deduced_bit != bit
        obs = tr.observations
        sound &= tr.commit_time - obs.t0 <= v.t_commit_upper
        ordered &= tr.commit_time < tr.t_unveil < min(obs.t_b0, obs.t_b1)
    return {
        "accepted": accepted,
        "wrong": wrong,
        "error_rate": matched_errors / matched_detections,
        "p_conceal": chi2_contingency(table)[1],
        "sound": sound,
        "ordered": ordered,
    }


@pytest.mark.criterion(5, "honest-run property suite, 10^4 miniature runs")
def test_honest_runs(record_property):
    honest_suite(2)
    res, dt = timed(lambda: honest_suite(MINI_RUNS), warmup=False)
    record_property("runtime_s", dt)
    print(res)
    assert res["accepted"] > 0 and res["wrong"] == 0
    assert 0.002 <= res["error_rate"] <= 0.025
    assert res["p_conceal"] > 0.01
    assert res["sound"] and res["ordered"]
    assert dt < 120.0


def attack_suite():
    n = 10_000
    return {
        "double_click_off": A.bob_double_click_attack("discard_doubles", n, 1),
        "double_click_on": A.bob_double_click_attack("random_assign", n, 2),
        "three_pulse_off": A.bob_dead_time_attack("three_pulse", "naive_separation", n, 3),
        "three_pulse_on": A.bob_dead_time_attack("three_pulse", "quiet_period_2tdead", n, 4),
        "multi_photon": A.alice_multi_photon_attack(200, 5),
        "delayed_commit": A.alice_delayed_commit_attack(
            A.random_courier_strategies(FIELD, config.field_timing(1), 1000, 6)
        ),
    }


@pytest.mark.criterion(6, "attack suite")
def test_attacks(record_property):
    A.bob_double_click_attack("random_assign", 10, 0)
    res, dt = timed(attack_suite, warmup=False)
    record_property("runtime_s", dt)
    for key in ("double_click_off", "three_pulse_off"):
        assert res[key].estimated_probability >= 0.99, key
    for key in ("double_click_on", "three_pulse_on"):
        assert 0.49 <= res[key].estimated_probability <= 0.51, key
    mp = res["multi_photon"]
    assert mp.success_count == 0 and mp.details["p0"] == 0.0 and mp.details["p1"] == 0.0
    dc = res["delayed_commit"]
    assert dc.trials == 1000 and dc.details["violations"] == 0 and dc.guarantee_respected
    assert dt < 300.0


def subset_factor(n, k):
    # every subset of an n-set as a bit mask; each contributes its non-empty subsets
    masks = np.arange(1 << n, dtype=np.int64)
    sizes = np.zeros_like(masks)
    for j in range(n):
        sizes += (masks >> j) & 1
    sizes = sizes[(sizes >= 1) & (sizes <= k)]
    return 1 + int(np.sum((np.int64(1) << sizes) - 1))


def oracle_suite():
    for n in range(1, 21):
        for k in range(0, n + 1):
            assert S.combinatorial_factor(n, k) == subset_factor(n, k), (n, k)
    rng = np.random.default_rng(7)
    checked = 0
    while checked < 20:
        layout = G.ProtocolLayout(
            d_alice_bob=rng.uniform(0, 2000),
            d_alice_a0=rng.uniform(3000, 15000),
            d_alice_a1=rng.uniform(3000, 15000),
            d_a0_b0=rng.uniform(0, 400),
            d_a1_b1=rng.uniform(0, 400),
            theta=rng.uniform(np.radians(90), np.pi),
        )
        obs = feasible_timing(layout, rng.uniform(0, 3000), rng.uniform(0, 3000))
        try:
            sol = G.solve_commit_point(layout, obs)
        except G.TimingInconsistent:
            continue
        assert abs(sol.d_bob_pcommit - oracle_solve(layout, obs, n=1000)) <= 1.0
        checked += 1


@pytest.mark.criterion(7, "oracle equivalence")
def test_oracle_equivalence(record_property):
    _, dt = timed(oracle_suite, warmup=False)
    record_property("runtime_s", dt)
    assert dt < 120.0


@pytest.mark.criterion(8, "determinism of run reports")
def test_run_determinism(record_property, tmp_path):
    out = tmp_path / "run.json"
    cmd = [sys.executable, "-m", "relcommit.cli", "run", "--seed", "42", "--out", str(out)]

    def once():
        subprocess.run(cmd, check=True, capture_output=True)
        return out.read_bytes()

    first = once()
    t = time.perf_counter()
    second = once()
    record_property("runtime_s", time.perf_counter() - t)
    assert first == second
