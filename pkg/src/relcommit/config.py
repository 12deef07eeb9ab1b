"""Flat ``key = value`` run configuration with mandatory physical units.

Keys are dotted (``layout.d_alice_a0 = 9.3km``). Lines starting with ``#``
are comments. Every physical quantity must carry a unit suffix; fractions
accept either a plain number or a percentage. Unknown keys are rejected.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Optional

from . import adversary, geometry, photonic, protocol, security

# measured arrival instants (µs) at B0 and B1 for the eight field runs
FIELD_TIMINGS_US = {
    1: (92.85, 102.74),
    2: (93.02, 102.85),
    3: (92.99, 102.92),
    4: (92.98, 102.93),
    5: (93.18, 103.22),
    6: (92.97, 102.84),
    7: (93.12, 103.08),
    8: (93.24, 103.10),
}
FIELD_T0_US = 1.53
DEFAULT_BITS = (0, 1, 0, 0, 1, 0, 1, 1)


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


UNITS = {
    "length": {"m": 1.0, "km": 1e3, "cm": 1e-2, "mm": 1e-3},
    "time": {"s": 1.0, "ms": 1e-3, "us": 1e-6, "µs": 1e-6, "μs": 1e-6, "ns": 1e-9, "ps": 1e-12},
    "frequency": {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9},
    "rate": {"cps": 1.0, "Hz": 1.0, "kHz": 1e3, "MHz": 1e6},
    "angle": {"rad": 1.0, "deg": math.pi / 180.0},
}

_NUMBER = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([^\s\d.+-][^\s]*)?\s*$")


def parse_quantity(key: str, text: str, kind: str) -> float:
    m = _NUMBER.match(text)
    if not m:
        raise ConfigError(key, f"cannot parse {text!r} as a number")
    value, unit = float(m.group(1)), m.group(2) or ""
    if kind == "number":
        if unit:
            raise ConfigError(key, f"expected a plain number, got unit {unit!r}")
        return value
    if kind == "fraction":
        if unit == "%":
            return value / 100.0
        if unit:
            raise ConfigError(key, f"expected a plain fraction or a percentage, got unit {unit!r}")
        return value
    table = UNITS[kind]
    if not unit:
        raise ConfigError(key, f"missing unit; one of {', '.join(table)} is required")
    if unit not in table:
        raise ConfigError(key, f"unit {unit!r} is not a {kind}; use one of {', '.join(table)}")
    return value * table[unit]


def _parse_int(key, text):
    try:
        return int(text.strip())
    except ValueError:
        raise ConfigError(key, f"expected an integer, got {text!r}") from None


def _parse_bits(key, text):
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts or any(p not in ("0", "1") for p in parts):
        raise ConfigError(key, "expected a comma-separated list of 0/1")
    return tuple(int(p) for p in parts)


def _choice(options):
    def parse(key, text):
        v = text.strip()
        if v not in options:
            raise ConfigError(key, f"expected one of {', '.join(options)}, got {v!r}")
        return v

    return parse


def _quantity(kind):
    return lambda key, text: parse_quantity(key, text, kind)


def _text(key, text):
    return text.strip()


# key -> (parser, default as written in a config file or None)
SCHEMA = {
    "layout.d_alice_bob": (_quantity("length"), "0m"),
    "layout.d_alice_a0": (_quantity("length"), "9.3km"),
    "layout.d_alice_a1": (_quantity("length"), "12.3km"),
    "layout.d_a0_b0": (_quantity("length"), "0m"),
    "layout.d_a1_b1": (_quantity("length"), "0m"),
    "layout.theta": (_quantity("angle"), "165deg"),
    **{
        f"layout.speed.{link}": (_quantity("fraction"), repr(f))
        for link, f in geometry.default_speed_factors().items()
    },
    "source.mu": (_quantity("number"), "0.183"),
    "source.intensity_fluctuation": (_quantity("fraction"), "10%"),
    "source.rep_rate": (_quantity("frequency"), "50MHz"),
    "source.n_pulses": (_parse_int, "2838"),
    "source.n_parallel": (_parse_int, "2"),
    "detector.efficiency": (_quantity("fraction"), "50%"),
    "detector.extra_optics_efficiency": (_quantity("fraction"), "90%"),
    "detector.dark_rate": (_quantity("rate"), "100cps"),
    "detector.dead_time": (_quantity("time"), "30ns"),
    "detector.double_event_window": (_quantity("time"), "60ns"),
    "detector.baseline_error": (_quantity("fraction"), "1%"),
    "postselect.double_clicks": (_choice([m.value for m in photonic.DoubleClicks]), "random_assign"),
    "postselect.separation": (_choice([m.value for m in photonic.Separation]), "quiet_period_2tdead"),
    "security.n_tol": (_parse_int, "107"),
    "security.e_tol": (_quantity("fraction"), "1.5%"),
    "security.eps_rect": (_quantity("fraction"), "0.0021"),
    "security.eps_diag": (_quantity("fraction"), "0.0021"),
    "engine.t0": (_quantity("time"), "1.53us"),
    "engine.classical_rate": (_quantity("frequency"), "1GHz"),
    "engine.reveal_hold": (_quantity("time"), "0s"),
    **{f"engine.processing_delay.{p.value.lower()}": (_quantity("time"), "0s") for p in geometry.PartyId},
    "run.committed_bits": (_parse_bits, ",".join(map(str, DEFAULT_BITS))),
    "run.repetitions": (_parse_int, "8"),
    "run.seed": (_parse_int, None),
    "run.out": (_text, None),
    "timing.t0": (_quantity("time"), None),
    "timing.t_b0": (_quantity("time"), None),
    "timing.t_b1": (_quantity("time"), None),
    "attack.strategy": (_choice([m.value for m in adversary.Strategy]), "strong_pulse_double_click"),
    "attack.countermeasure": (_text, ""),
    "attack.intensity": (_quantity("number"), "1000"),
    "attack.offset": (_quantity("time"), "1ns"),
    "attack.spacing": (_quantity("time"), None),
    "attack.trials": (_parse_int, "1000"),
    "bound.sweep": (_text, None),
}


def read_pairs(text: str, source: str = "<config>") -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}", f"expected key = value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(key, "unknown key")
        out[key] = value
    return out


def parse_override(item: str) -> tuple:
    if "=" not in item:
        raise ConfigError(item, "override must look like key=value")
    key, value = (s.strip() for s in item.split("=", 1))
    if key not in SCHEMA:
        raise ConfigError(key, "unknown key")
    return key, value


@dataclass(frozen=True)
class RunConfig:
    layout: geometry.ProtocolLayout
    source: photonic.SourceParams
    detector: photonic.DetectorModel
    rule: photonic.PostselectRule
    security: security.SecurityParams
    engine: protocol.EngineConfig
    committed_bits: tuple
    repetitions: int
    seed: Optional[int]
    out: Optional[str]
    timing: Optional[geometry.TimingObservations]
    attack: adversary.AttackSpec
    trials: int
    sweep: Optional[tuple]
    resolved: dict = field(default_factory=dict)

    def require_seed(self) -> int:
        if self.seed is None:
            raise ConfigError("run.seed", "a seed is required (config key or --seed)")
        return self.seed


def _wrap(key, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(key, str(exc)) from None


def build(raw: dict) -> RunConfig:
    """Validate raw string values against the schema and assemble every parameter object."""
    v = {}
    resolved = {}
    for key, (parse, default) in SCHEMA.items():
        text = raw.get(key, default)
        if text is None:
            v[key] = None
            continue
        v[key] = parse(key, text)
        resolved[key] = v[key]

    speed = {link: v[f"layout.speed.{link}"] for link in geometry.LINKS}
    layout = _wrap(
        "layout",
        geometry.ProtocolLayout,
        v["layout.d_alice_bob"], v["layout.d_alice_a0"], v["layout.d_alice_a1"],
        v["layout.d_a0_b0"], v["layout.d_a1_b1"], v["layout.theta"], speed,
    )
    source = _wrap(
        "source",
        photonic.SourceParams,
        v["source.mu"], v["source.intensity_fluctuation"], v["source.rep_rate"],
        v["source.n_pulses"], v["source.n_parallel"],
    )
    detector = _wrap(
        "detector",
        photonic.DetectorModel,
        v["detector.efficiency"], v["detector.dark_rate"], v["detector.dead_time"],
        v["detector.extra_optics_efficiency"], v["detector.double_event_window"],
        v["detector.baseline_error"],
    )
    rule = photonic.PostselectRule(
        photonic.DoubleClicks(v["postselect.double_clicks"]), photonic.Separation(v["postselect.separation"])
    )
    sec = _wrap(
        "security",
        security.SecurityParams,
        v["security.n_tol"], v["security.e_tol"], v["security.eps_rect"], v["security.eps_diag"],
        source.mu, source.intensity_fluctuation,
    )
    delays = {p.value: v[f"engine.processing_delay.{p.value.lower()}"] for p in geometry.PartyId}
    engine = _wrap(
        "engine",
        protocol.EngineConfig,
        t0=v["engine.t0"],
        classical_rate=v["engine.classical_rate"],
        processing_delay=delays,
        reveal_hold=v["engine.reveal_hold"],
        rule=rule,
    )
    for key in ("run.repetitions", "attack.trials"):
        if v[key] < 0:
            raise ConfigError(key, "must be non-negative")

    timing = None
    t_keys = ("timing.t0", "timing.t_b0", "timing.t_b1")
    if any(v[k] is not None for k in t_keys):
        missing = [k for k in t_keys if v[k] is None]
        if missing:
            raise ConfigError(missing[0], "missing timing field")
        timing = _wrap("timing", geometry.TimingObservations, v["timing.t0"], v["timing.t_b0"], v["timing.t_b1"])

    attack = _wrap(
        "attack",
        adversary.AttackSpec,
        adversary.Strategy(v["attack.strategy"]),
        v["attack.countermeasure"],
        v["attack.intensity"],
        v["attack.offset"],
        v["attack.spacing"],
    )
    sweep = None
    if v["bound.sweep"]:
        parts = v["bound.sweep"].split(":")
        try:
            sweep = tuple(int(p) for p in parts)
        except ValueError:
            sweep = ()
        if len(sweep) != 3 or sweep[2] <= 0 or sweep[0] < 2 or sweep[1] < sweep[0]:
            raise ConfigError("bound.sweep", "expected START:STOP:STEP with 2 <= START <= STOP and STEP > 0")
    return RunConfig(
        layout, source, detector, rule, sec, engine,
        v["run.committed_bits"], v["run.repetitions"], v["run.seed"], v["run.out"],
        timing, attack, v["attack.trials"], sweep, resolved,
    )


def load(path: Optional[str], overrides=()) -> RunConfig:
    raw = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(path, f"cannot read config: {exc.strerror}") from None
        raw.update(read_pairs(text, path))
    for item in overrides:
        key, value = parse_override(item)
        raw[key] = value
    return build(raw)


def field_timing(exp: int) -> geometry.TimingObservations:
    if exp not in FIELD_TIMINGS_US:
        raise ConfigError("--field-run", f"expected 1..{len(FIELD_TIMINGS_US)}, got {exp}")
    b0, b1 = FIELD_TIMINGS_US[exp]
    return geometry.TimingObservations(FIELD_T0_US * 1e-6, b0 * 1e-6, b1 * 1e-6)
