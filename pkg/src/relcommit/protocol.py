"""Deterministic discrete-event run of the six-party commitment.

Messages travel between parties with a delay made of serialization time,
distance over the link speed, and the receiving party's processing delay.
Events are delivered from a heap ordered by arrival time, with ties broken by
(sender, receiver, payload kind, insertion order).

Timeline of an honest run:

* Bob emits one pulse batch per parallel train at ``t0``.
* Alice chooses her basis when the first pulse reaches her. When the last
  batch has arrived she sends Bob the detection bitmap (one bit per pulse)
  and sends each agent the bitmap plus the detected outcome bits, the latter
  encrypted under that agent's one-time pad.
* Each agent decrypts on arrival, waits ``reveal_hold`` and sends the
  outcome bits to its neighbour B_i, which forwards them to Bob over fiber.
* Bob verifies once both forwarded copies are in.
"""

from __future__ import annotations

import enum
import heapq
import io
import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import geometry, photonic, security
from .geometry import C, PartyId, ProtocolLayout, TimingObservations


class ProtocolAbort(RuntimeError):
    """The run cannot continue, e.g. a one-time pad ran out of key."""


class KeyExhausted(ProtocolAbort):
    pass


class CausalityError(AssertionError):
    """A message was scheduled to arrive before it was sent."""


class IncompleteTranscript(ValueError):
    pass


# ---------------------------------------------------------------------------
# one-time pad
# ---------------------------------------------------------------------------


class OneTimePadKey:
    """Key bits consumed strictly front to back; a bit is never handed out twice."""

    def __init__(self, key_bits, consumed_prefix: int = 0):
        self.key_bits = np.asarray(key_bits, dtype=np.uint8)
        if self.key_bits.ndim != 1 or np.any(self.key_bits > 1):
            raise ValueError("key must be a one-dimensional bit array")
        if not 0 <= consumed_prefix <= self.key_bits.size:
            raise ValueError("consumed_prefix out of range")
        self.consumed_prefix = int(consumed_prefix)

    @classmethod
    def random(cls, n_bits: int, rng) -> "OneTimePadKey":
        return cls(np.random.default_rng(rng).integers(0, 2, n_bits, dtype=np.uint8))

    @property
    def remaining(self) -> int:
        return self.key_bits.size - self.consumed_prefix

    def copy(self) -> "OneTimePadKey":
        return OneTimePadKey(self.key_bits.copy(), self.consumed_prefix)

    def take(self, n: int) -> np.ndarray:
        if n < 0:
            raise ValueError("n must be non-negative")
        if n > self.remaining:
            raise KeyExhausted(f"need {n} key bits, only {self.remaining} left")
        seg = self.key_bits[self.consumed_prefix : self.consumed_prefix + n]
        self.consumed_prefix += n
        return seg


def otp_encrypt(plaintext, key: OneTimePadKey) -> np.ndarray:
    bits = np.asarray(plaintext, dtype=np.uint8)
    return np.bitwise_xor(bits, key.take(bits.size))


# XOR is its own inverse; the receiver applies the same segment of its copy
otp_decrypt = otp_encrypt


# ---------------------------------------------------------------------------
# messages and the event queue
# ---------------------------------------------------------------------------


class PayloadKind(enum.IntEnum):
    PULSE_BATCH = 0
    DETECTION_REPORT = 1
    ENCRYPTED_RESULTS = 2
    REVEALED_RESULTS = 3


@dataclass(frozen=True, eq=False)
class TimedMessage:
    sender: PartyId
    receiver: PartyId
    kind: PayloadKind
    send_time: float
    arrival_time: float
    n_bits: int
    payload: object = None

    def record(self) -> dict:
        return {
            "sender": self.sender.value,
            "receiver": self.receiver.value,
            "kind": self.kind.name,
            "send_ns": int(round(self.send_time * 1e9)),
            "arrival_ns": int(round(self.arrival_time * 1e9)),
            "bits": int(self.n_bits),
        }


class EventQueue:
    def __init__(self):
        self._heap = []
        self._seq = itertools.count()

    def __len__(self):
        return len(self._heap)

    def push(self, msg: TimedMessage):
        if msg.arrival_time < msg.send_time:
            raise CausalityError(
                f"{msg.kind.name} {msg.sender.value}->{msg.receiver.value} arrives "
                f"{msg.send_time - msg.arrival_time:.3e} s before it is sent"
            )
        key = (msg.arrival_time, msg.sender.value, msg.receiver.value, int(msg.kind), next(self._seq))
        heapq.heappush(self._heap, (key, msg))

    def pop(self) -> Optional[TimedMessage]:
        if not self._heap:
            return None
        return heapq.heappop(self._heap)[1]


def schedule(queue: EventQueue) -> Optional[TimedMessage]:
    """Next message to deliver, or None when the queue has drained."""
    return queue.pop()


# ---------------------------------------------------------------------------
# engine
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EngineConfig:
    t0: float = 0.0
    classical_rate: float = 1e9  # bits per second on every classical link
    processing_delay: dict = field(default_factory=dict)  # PartyId value -> seconds
    reveal_hold: float = 0.0
    key_bits: Optional[int] = None  # per agent; default covers every pulse
    rule: photonic.PostselectRule = photonic.PostselectRule()

    def __post_init__(self):
        if not self.classical_rate > 0.0:
            raise ValueError("classical_rate must be positive")
        if self.reveal_hold < 0.0 or any(v < 0.0 for v in self.processing_delay.values()):
            raise ValueError("delays must be non-negative")

    def delay_at(self, party: PartyId) -> float:
        return float(self.processing_delay.get(party.value, 0.0))


def transit_time(layout: ProtocolLayout, sender: PartyId, receiver: PartyId, serialization: float, processing: float) -> float:
    return serialization + geometry.propagation_delay(layout, sender, receiver) + processing


@dataclass(frozen=True, eq=False)
class CommitmentTranscript:
    layout: ProtocolLayout
    pulses: photonic.PulseTrain
    detections: photonic.Detections
    committed_bit: int
    messages: tuple
    observations: TimingObservations
    t_unveil: float
    commit_time: float
    declarations: tuple = ()
    seed: Optional[int] = None

    @property
    def detected_indices(self) -> np.ndarray:
        return self.detections.detected_indices

    def equals(self, other: "CommitmentTranscript") -> bool:
        return (
            self.committed_bit == other.committed_bit
            and self.pulses.equals(other.pulses)
            and self.detections.equals(other.detections)
            and [m.record() for m in self.messages] == [m.record() for m in other.messages]
            and self.observations == other.observations
            and self.t_unveil == other.t_unveil
            and self.commit_time == other.commit_time
        )


class _Run:
    """Mutable party state for one execution; discarded once the transcript is built."""

    def __init__(self, layout, src, det, params, committed_bit, seed, cfg: EngineConfig):
        self.layout = layout
        self.src = src
        self.det = det
        self.params = params
        self.bit = int(committed_bit)
        self.cfg = cfg
        ss = np.random.SeedSequence(seed)
        s_pulses, s_detect, s_k0, s_k1 = ss.spawn(4)
        self.pulses = photonic.generate_pulse_train(src, s_pulses, t0=cfg.t0)
        self.detect_rng = np.random.default_rng(s_detect)
        n_key = src.total_pulses if cfg.key_bits is None else cfg.key_bits
        self.keys = {
            PartyId.A0: OneTimePadKey.random(n_key, s_k0),
            PartyId.A1: OneTimePadKey.random(n_key, s_k1),
        }
        # Alice keeps her own copy of each pad
        self.alice_keys = {p: k.copy() for p, k in self.keys.items()}
        self.queue = EventQueue()
        self.log = []
        self.batches_left = src.n_parallel
        self.commit_time = math.nan
        self.detections = None
        self.reveal_sends = []
        self.bob_report = None
        self.bob_copies = {}

    def send(self, sender, receiver, kind, t_send, n_bits, payload=None, serialization=None):
        if serialization is None:
            serialization = n_bits / self.cfg.classical_rate
        arrival = t_send + transit_time(self.layout, sender, receiver, serialization, self.cfg.delay_at(receiver))
        self.queue.push(TimedMessage(sender, receiver, kind, t_send, arrival, n_bits, payload))

    def start(self):
        n = self.src.n_pulses
        for k in range(self.src.n_parallel):
            span = (n - 1) / self.src.rep_rate if n else 0.0
            self.send(PartyId.BOB, PartyId.ALICE, PayloadKind.PULSE_BATCH, self.cfg.t0, n, k, serialization=span)

    def run(self):
        self.start()
        while (msg := schedule(self.queue)) is not None:
            self.log.append(msg)
            getattr(self, f"_on_{msg.receiver.value.lower()}")(msg)

    # Alice ---------------------------------------------------------------

    def _on_alice(self, msg):
        self.batches_left -= 1
        if self.batches_left:
            return
        delay = geometry.propagation_delay(self.layout, PartyId.BOB, PartyId.ALICE)
        # the basis is fixed by the time the first pulse reaches Alice
        self.commit_time = self.cfg.t0 + delay
        self.detections = photonic.detect(
            self.pulses,
            self.bit,
            self.det,
            self.cfg.rule,
            self.detect_rng,
            delay=delay,
            gate=1.0 / self.src.rep_rate,
        )
        t = msg.arrival_time
        order = np.argsort(self.detections.detected_indices, kind="stable")
        idx = self.detections.detected_indices[order]
        bits = self.detections.detected_bits[order]
        bitmap = np.zeros(len(self.pulses), dtype=np.uint8)
        bitmap[idx] = 1
        self.send(PartyId.ALICE, PartyId.BOB, PayloadKind.DETECTION_REPORT, t, bitmap.size, bitmap)
        for agent in (PartyId.A0, PartyId.A1):
            cipher = otp_encrypt(bits, self.alice_keys[agent])
            self.send(PartyId.ALICE, agent, PayloadKind.ENCRYPTED_RESULTS, t, bitmap.size + cipher.size, (bitmap, cipher))

    # agents --------------------------------------------------------------

    def _agent(self, msg, neighbour):
        bitmap, cipher = msg.payload
        plain = otp_decrypt(cipher, self.keys[msg.receiver]).astype(np.int8)
        t_send = msg.arrival_time + self.cfg.reveal_hold
        self.reveal_sends.append(t_send)
        # Bob already holds the detected indices, so only the outcome bits travel
        self.send(msg.receiver, neighbour, PayloadKind.REVEALED_RESULTS, t_send, plain.size, plain)

    def _on_a0(self, msg):
        self._agent(msg, PartyId.B0)

    def _on_a1(self, msg):
        self._agent(msg, PartyId.B1)

    # Bob's side ----------------------------------------------------------

    def _relay(self, msg):
        self.send(msg.receiver, PartyId.BOB, PayloadKind.REVEALED_RESULTS, msg.arrival_time, msg.n_bits, msg.payload)

    def _on_b0(self, msg):
        self._relay(msg)

    def _on_b1(self, msg):
        self._relay(msg)

    def _on_bob(self, msg):
        if msg.kind is PayloadKind.DETECTION_REPORT:
            self.bob_report = np.flatnonzero(msg.payload).astype(np.int64)
        else:
            self.bob_copies[msg.sender] = msg.payload


def measure_timing(transcript_or_messages, t0: Optional[float] = None):
    """(TimingObservations, t_unveil) from the delivered messages.

    ``t_b_i`` is the arrival of the last reveal from A_i at B_i and
    ``t_unveil`` the earliest reveal transmission by either agent.
    """
    if isinstance(transcript_or_messages, CommitmentTranscript):
        messages = transcript_or_messages.messages
        if t0 is None:
            t0 = transcript_or_messages.observations.t0
    else:
        messages = transcript_or_messages
    reveals = [m for m in messages if m.kind is PayloadKind.REVEALED_RESULTS and m.sender in (PartyId.A0, PartyId.A1)]
    if t0 is None:
        firsts = [m.send_time for m in messages if m.kind is PayloadKind.PULSE_BATCH]
        if not firsts:
            raise IncompleteTranscript("no pulse emission recorded")
        t0 = min(firsts)
    arrivals = {}
    for m in reveals:
        arrivals[m.receiver] = max(arrivals.get(m.receiver, -math.inf), m.arrival_time)
    if PartyId.B0 not in arrivals or PartyId.B1 not in arrivals:
        raise IncompleteTranscript("reveal did not reach both B0 and B1")
    obs = TimingObservations(t0, arrivals[PartyId.B0], arrivals[PartyId.B1])
    return obs, min(m.send_time for m in reveals)


def run_honest_protocol(
    layout: ProtocolLayout,
    src: photonic.SourceParams,
    det: photonic.DetectorModel,
    params: security.SecurityParams,
    committed_bit: int,
    seed: int,
    engine: EngineConfig = EngineConfig(),
):
    """Execute one honest commit/reveal and return (transcript, verdict)."""
    if committed_bit not in (0, 1):
        raise ValueError("committed_bit must be 0 or 1")
    run = _Run(layout, src, det, params, committed_bit, seed, engine)
    run.run()
    if run.bob_report is None or len(run.bob_copies) != 2:
        raise IncompleteTranscript("run ended before Bob received every message")
    obs, t_unveil = measure_timing(run.log, t0=engine.t0)
    decls = tuple(
        security.Declaration(run.bob_report, run.bob_copies[b]) for b in (PartyId.B0, PartyId.B1)
    )
    transcript = CommitmentTranscript(
        layout=layout,
        pulses=run.pulses,
        detections=run.detections,
        committed_bit=int(committed_bit),
        messages=tuple(run.log),
        observations=obs,
        t_unveil=t_unveil,
        commit_time=run.commit_time,
        declarations=decls,
        seed=seed,
    )
    verdict = security.verify(params, run.pulses, run.bob_report, decls[0], decls[1], layout, obs)
    return transcript, verdict


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------


def _ns(t: float) -> int:
    return int(round(t * 1e9))


def export_jsonl(transcript: CommitmentTranscript, fh=None) -> str:
    """One JSON object per line: a ``run`` header, then one ``message`` per delivery.

    Times are integer nanoseconds. Returns the text; also writes it to ``fh``
    when given.
    """
    buf = io.StringIO()
    obs = transcript.observations
    header = {
        "type": "run",
        "seed": transcript.seed,
        "committed_bit": transcript.committed_bit,
        "n_pulses": len(transcript.pulses),
        "n_detected": int(transcript.detected_indices.size),
        "t0_ns": _ns(obs.t0),
        "t_b0_ns": _ns(obs.t_b0),
        "t_b1_ns": _ns(obs.t_b1),
        "t_unveil_ns": _ns(transcript.t_unveil),
        "commit_ns": _ns(transcript.commit_time),
        "layout": {k: v for k, v in asdict(transcript.layout).items()},
    }
    buf.write(json.dumps(header, sort_keys=True) + "\n")
    for seq, m in enumerate(transcript.messages):
        rec = {"type": "message", "seq": seq, **m.record()}
        buf.write(json.dumps(rec, sort_keys=True) + "\n")
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text
