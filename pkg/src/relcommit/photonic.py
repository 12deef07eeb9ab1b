"""Weak-coherent BB84 source and Alice's two-detector polarisation measurement.

Pulses are handled as column arrays (:class:`PulseTrain`) because runs carry
thousands of them; indexing a train yields a :class:`PulseRecord`.

Detector 0 registers H in the rectilinear basis and + in the diagonal one,
detector 1 registers V and -. A click on detector k records the bit k.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .kernels import apply_dead_time, postselect

PS = 1e12  # picoseconds per second


class Basis(enum.IntEnum):
    RECT = 0
    DIAG = 1


class ClickType(enum.IntEnum):
    SINGLE = 0
    DOUBLE = 1
    DARK = 2


class DoubleClicks(str, enum.Enum):
    RANDOM_ASSIGN = "random_assign"
    DISCARD = "discard_doubles"


class Separation(str, enum.Enum):
    QUIET_PERIOD = "quiet_period_2tdead"
    NAIVE = "naive_separation"
    NONE = "none"


@dataclass(frozen=True)
class SourceParams:
    mu: float = 0.183
    intensity_fluctuation: float = 0.1
    rep_rate: float = 50e6
    n_pulses: int = 2838
    n_parallel: int = 2

    def __post_init__(self):
        if not self.mu > 0.0:
            raise ValueError("mu must be positive")
        if not 0.0 <= self.intensity_fluctuation < 1.0:
            raise ValueError("intensity_fluctuation must lie in [0, 1)")
        if not self.rep_rate > 0.0:
            raise ValueError("rep_rate must be positive")
        if self.n_pulses < 0 or self.n_parallel < 1:
            raise ValueError("need n_pulses >= 0 and n_parallel >= 1")

    @property
    def total_pulses(self) -> int:
        return self.n_pulses * self.n_parallel


@dataclass(frozen=True)
class DetectorModel:
    efficiency: float = 0.5
    dark_rate: float = 100.0
    dead_time: float = 30e-9
    extra_optics_efficiency: float = 0.9
    double_event_window: float = 60e-9
    # per-photon probability of landing on the wrong detector in the matched basis
    baseline_error: float = 0.01

    def __post_init__(self):
        for name in ("efficiency", "extra_optics_efficiency", "baseline_error"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not self.dead_time > 0.0:
            raise ValueError("dead_time must be positive")
        if self.dark_rate < 0.0 or self.double_event_window < 0.0:
            raise ValueError("dark_rate and double_event_window must be non-negative")

    @property
    def total_efficiency(self) -> float:
        return self.efficiency * self.extra_optics_efficiency


@dataclass(frozen=True)
class PostselectRule:
    double_clicks: DoubleClicks = DoubleClicks.RANDOM_ASSIGN
    separation: Separation = Separation.QUIET_PERIOD


@dataclass(frozen=True)
class PulseRecord:
    index: int
    basis: Basis
    bit: int
    photon_number: int
    emit_time: float
    train: int = 0


@dataclass(frozen=True, eq=False)
class PulseTrain:
    index: np.ndarray
    train: np.ndarray
    basis: np.ndarray
    bit: np.ndarray
    photon_number: np.ndarray
    emit_time: np.ndarray

    def __len__(self):
        return int(self.index.shape[0])

    def __getitem__(self, i) -> PulseRecord:
        return PulseRecord(
            int(self.index[i]),
            Basis(int(self.basis[i])),
            int(self.bit[i]),
            int(self.photon_number[i]),
            float(self.emit_time[i]),
            int(self.train[i]),
        )

    def select(self, mask) -> "PulseTrain":
        return PulseTrain(
            self.index[mask],
            self.train[mask],
            self.basis[mask],
            self.bit[mask],
            self.photon_number[mask],
            self.emit_time[mask],
        )

    @classmethod
    def from_arrays(cls, basis, bit, photon_number, emit_time, train=None, index=None):
        basis = np.asarray(basis, dtype=np.int8)
        n = basis.shape[0]
        return cls(
            np.arange(n, dtype=np.int64) if index is None else np.asarray(index, dtype=np.int64),
            np.zeros(n, dtype=np.int32) if train is None else np.asarray(train, dtype=np.int32),
            basis,
            np.asarray(bit, dtype=np.int8),
            np.asarray(photon_number, dtype=np.int64),
            np.asarray(emit_time, dtype=np.float64),
        )

    def equals(self, other: "PulseTrain") -> bool:
        return all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("index", "train", "basis", "bit", "photon_number", "emit_time")
        )


class DetectionEvent(NamedTuple):
    pulse_index: int
    click_time: float
    outcome_bit: int
    raw_click_type: ClickType
    retained: bool


@dataclass(frozen=True, eq=False)
class Detections:
    """Every raw click with its post-selection verdict, in time order per train."""

    pulse_index: np.ndarray
    click_time: np.ndarray
    outcome_bit: np.ndarray
    click_type: np.ndarray
    retained: np.ndarray

    def __len__(self):
        return int(self.pulse_index.shape[0])

    def __getitem__(self, i) -> DetectionEvent:
        return DetectionEvent(
            int(self.pulse_index[i]),
            float(self.click_time[i]),
            int(self.outcome_bit[i]),
            ClickType(int(self.click_type[i])),
            bool(self.retained[i]),
        )

    @property
    def detected_indices(self) -> np.ndarray:
        return self.pulse_index[self.retained]

    @property
    def detected_bits(self) -> np.ndarray:
        return self.outcome_bit[self.retained]

    @classmethod
    def concat(cls, parts) -> "Detections":
        parts = list(parts)
        if not parts:
            return cls.empty()
        return cls(*(np.concatenate([getattr(p, f) for p in parts]) for f in _DET_FIELDS))

    @classmethod
    def empty(cls) -> "Detections":
        return cls(
            np.zeros(0, np.int64),
            np.zeros(0, np.float64),
            np.zeros(0, np.int8),
            np.zeros(0, np.int8),
            np.zeros(0, np.bool_),
        )

    def equals(self, other: "Detections") -> bool:
        return all(np.array_equal(getattr(self, f), getattr(other, f)) for f in _DET_FIELDS)


_DET_FIELDS = ("pulse_index", "click_time", "outcome_bit", "click_type", "retained")


class Firings(NamedTuple):
    photon0: np.ndarray
    photon1: np.ndarray
    dark0: np.ndarray
    dark1: np.ndarray

    @property
    def fire0(self):
        return self.photon0 | self.dark0

    @property
    def fire1(self):
        return self.photon1 | self.dark1


def generate_pulse_train(src: SourceParams, rng_seed, t0: float = 0.0) -> PulseTrain:
    """Draw every train's bases, bits and photon numbers.

    Each pulse gets its own intensity ``mu * (1 + f)`` with ``f`` uniform in
    ``[-fluctuation, +fluctuation]``. Pulse ``k`` of every train leaves at
    ``t0 + k / rep_rate``; the trains run in parallel.
    """
    rng = np.random.default_rng(rng_seed)
    n = src.total_pulses
    basis = rng.integers(0, 2, n, dtype=np.int8)
    bit = rng.integers(0, 2, n, dtype=np.int8)
    f = rng.uniform(-src.intensity_fluctuation, src.intensity_fluctuation, n)
    photons = rng.poisson(src.mu * (1.0 + f))
    k = np.tile(np.arange(src.n_pulses, dtype=np.int64), src.n_parallel)
    train = np.repeat(np.arange(src.n_parallel, dtype=np.int32), src.n_pulses)
    return PulseTrain(
        np.arange(n, dtype=np.int64),
        train,
        basis,
        bit,
        photons.astype(np.int64),
        t0 + k / src.rep_rate,
    )


def measure_pulses(train: PulseTrain, alice_basis, det: DetectorModel, rng, gate: float = 20e-9, baseline_error=None) -> Firings:
    """Route every photon to a detector and decide which detectors fire.

    Matched basis: a photon reaches the detector of Bob's bit with probability
    ``1 - baseline_error``. Conjugate basis: 50/50. Each photon is then
    registered with the total efficiency; each detector also fires on a dark
    count with probability ``dark_rate * gate``. Dead time is not applied here.
    """
    rng = np.random.default_rng(rng)
    err = det.baseline_error if baseline_error is None else baseline_error
    n = len(train)
    alice_basis = np.broadcast_to(np.asarray(alice_basis, dtype=np.int8), (n,))
    matched = train.basis == alice_basis
    p_right = np.where(matched, 1.0 - err, 0.5)
    k_right = rng.binomial(train.photon_number, p_right)
    k_wrong = train.photon_number - k_right
    to_one = train.bit == 1
    k0 = np.where(to_one, k_wrong, k_right)
    k1 = np.where(to_one, k_right, k_wrong)

    miss = 1.0 - det.total_efficiency
    u = rng.random((2, n))
    photon0 = u[0] < 1.0 - np.power(miss, k0)
    photon1 = u[1] < 1.0 - np.power(miss, k1)
    p_dark = det.dark_rate * gate
    v = rng.random((2, n))
    return Firings(photon0, photon1, v[0] < p_dark, v[1] < p_dark)


def measure_pulse(pulse: PulseRecord, alice_basis, det: DetectorModel, baseline_error=None, rng=None, gate: float = 20e-9):
    """Single-pulse version of :func:`measure_pulses`: (detector0 fired, detector1 fired)."""
    train = PulseTrain.from_arrays(
        [int(pulse.basis)], [pulse.bit], [pulse.photon_number], [pulse.emit_time], index=[pulse.index]
    )
    f = measure_pulses(train, alice_basis, det, rng, gate=gate, baseline_error=baseline_error)
    return bool(f.fire0[0]), bool(f.fire1[0])


def _rule_params(det: DetectorModel, rule: PostselectRule):
    dead = int(round(det.dead_time * PS))
    if rule.separation is Separation.QUIET_PERIOD:
        return 2 * dead, False, int(round(det.double_event_window * PS))
    if rule.separation is Separation.NAIVE:
        return dead, True, 0
    return 0, False, 0


def postselect_clicks(click_time, click0, click1, det: DetectorModel, rule: PostselectRule, rng, pulse_index=None, click_type=None) -> Detections:
    """Apply Alice's FPGA rules to time-ordered raw clicks of one detector pair.

    Arrays are per pulse slot; slots where neither detector clicked are
    ignored. Returns only the slots that clicked.
    """
    rng = np.random.default_rng(rng)
    click_time = np.asarray(click_time, dtype=np.float64)
    click0 = np.asarray(click0, dtype=np.bool_)
    click1 = np.asarray(click1, dtype=np.bool_)
    n = click_time.shape[0]
    if pulse_index is None:
        pulse_index = np.arange(n, dtype=np.int64)
    if click_type is None:
        click_type = np.where(click0 & click1, ClickType.DOUBLE, ClickType.SINGLE).astype(np.int8)
    coin = rng.integers(0, 2, n, dtype=np.int8)
    times_ps = np.rint(click_time * PS).astype(np.int64)
    quiet, strict, window = _rule_params(det, rule)
    retained, outcome = postselect(
        times_ps, click0, click1, coin, quiet, strict, window, rule.double_clicks is DoubleClicks.DISCARD
    )
    any_click = click0 | click1
    return Detections(
        np.asarray(pulse_index, dtype=np.int64)[any_click],
        click_time[any_click],
        outcome[any_click],
        np.asarray(click_type, dtype=np.int8)[any_click],
        retained[any_click],
    )


def detect(train: PulseTrain, alice_basis, det: DetectorModel, rule: PostselectRule, rng, delay: float = 0.0, gate: float = 20e-9, baseline_error=None) -> Detections:
    """Measure, apply dead time and post-select; one detector pair per parallel train.

    ``delay`` shifts emission times to arrival times at Alice.
    """
    rng = np.random.default_rng(rng)
    firings = measure_pulses(train, alice_basis, det, rng, gate=gate, baseline_error=baseline_error)
    fire0, fire1 = firings.fire0, firings.fire1
    click_time = train.emit_time + delay
    times_ps = np.rint(click_time * PS).astype(np.int64)
    dead_ps = int(round(det.dead_time * PS))

    parts = []
    for k in np.unique(train.train):
        sel = np.flatnonzero(train.train == k)
        sel = sel[np.argsort(times_ps[sel], kind="stable")]
        c0, c1 = apply_dead_time(times_ps[sel], fire0[sel], fire1[sel], dead_ps)
        photon = (firings.photon0[sel] & c0) | (firings.photon1[sel] & c1)
        ctype = np.where(c0 & c1, ClickType.DOUBLE, np.where(photon, ClickType.SINGLE, ClickType.DARK))
        parts.append(
            postselect_clicks(click_time[sel], c0, c1, det, rule, rng, train.index[sel], ctype.astype(np.int8))
        )
    return Detections.concat(parts)
