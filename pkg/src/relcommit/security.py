"""Binding bound, multi-photon estimation and Bob's accept/reject decision.

Two different quantities are conventionally called delta here. The laser's
intensity-fluctuation bound is ``SecurityParams.intensity_fluctuation``; the
free variable minimised in the binding bound is ``BindingBound.delta_star``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple, Optional

import numpy as np

from . import geometry
from ._search import grid_then_golden
from .photonic import Basis, PulseTrain

LN2 = math.log(2.0)
# exact big-integer combinatorial sums up to this many single photons
EXACT_COMB_LIMIT = 1000


class SecurityError(ValueError):
    pass


class EstimationError(SecurityError):
    """Requested estimation error is unreachable for the given sample size."""


class ProtocolError(SecurityError):
    """Transcript pieces are missing or inconsistent with each other."""


@dataclass(frozen=True)
class SecurityParams:
    n_tol: int = 107
    e_tol: float = 0.015
    eps_rect: float = 0.21e-2
    eps_diag: float = 0.21e-2
    mu: float = 0.183
    intensity_fluctuation: float = 0.1

    def __post_init__(self):
        if self.n_tol < 1:
            raise SecurityError("n_tol must be at least 1")
        if not 0.0 <= float(self.e_tol) < 0.5:
            raise SecurityError("e_tol must lie in [0, 1/2)")
        for name in ("eps_rect", "eps_diag"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise SecurityError(f"{name} must lie in (0, 1)")
        if not self.mu > 0.0 or not 0.0 <= self.intensity_fluctuation < 1.0:
            raise SecurityError("need mu > 0 and intensity_fluctuation in [0, 1)")

    @property
    def error_budget(self) -> int:
        return error_budget(self.e_tol, self.n_tol)


@dataclass(frozen=True)
class BindingBound:
    eps_b: float
    delta_star: float
    exponential_term: float
    entropy_term: float
    combinatorial_factor: float
    log_combinatorial_factor: float
    error_budget: int


@dataclass(frozen=True)
class EstimationResult:
    n_rect: int
    n_diag: int
    p_multi: float
    delta_multi_rect: float
    delta_multi_diag: float
    n_e_rect: int
    n_e_diag: int
    n_sent_rect: int = 0
    n_sent_diag: int = 0
    n_detect_rect: int = 0
    n_detect_diag: int = 0


class Reason(str, enum.Enum):
    MISMATCH = "mismatch"
    INSUFFICIENT_SINGLES = "insufficient_singles"
    EXCESSIVE_ERRORS = "excessive_errors"
    OK = "ok"


@dataclass(frozen=True)
class VerificationVerdict:
    accepted: bool
    deduced_bit: Optional[int]
    reason: Reason
    estimation: Optional[EstimationResult]
    t_commit_upper: float = math.nan
    exclusions: tuple = (False, False)
    detail: str = ""


class Declaration(NamedTuple):
    """What one of Alice's agents reveals: the detected pulse indices and a bit for each."""

    indices: np.ndarray
    bits: np.ndarray

    def same_as(self, other: "Declaration") -> bool:
        return np.array_equal(self.indices, other.indices) and np.array_equal(self.bits, other.bits)


# ---------------------------------------------------------------------------
# elementary functions
# ---------------------------------------------------------------------------


def binary_entropy(x):
    """h(x) in bits, with h(0) = h(1) = 0."""
    arr = np.asarray(x, dtype=np.float64)
    if np.any((arr < 0.0) | (arr > 1.0)) or np.any(np.isnan(arr)):
        raise SecurityError("binary entropy is defined on [0, 1]")
    inner = (arr > 0.0) & (arr < 1.0)
    safe = np.where(inner, arr, 0.5)
    h = np.where(inner, -safe * np.log2(safe) - (1.0 - safe) * np.log2(1.0 - safe), 0.0)
    return float(h) if np.ndim(h) == 0 else h


def p_multi_bound(mu: float, delta_int: float) -> float:
    """Upper bound on the multi-photon probability of a pulse at intensity mu(1+delta)."""
    m = mu * (1.0 + delta_int)
    # 1 - (1 + m) e^-m, written to keep precision for small m
    return float(-math.expm1(-m) - m * math.exp(-m))


def kl_divergence(x: float, y: float) -> float:
    """Bernoulli relative entropy D(x||y) in nats."""
    if not (0.0 < x < 1.0 and 0.0 < y < 1.0):
        raise SecurityError("kl_divergence needs x, y in (0, 1)")
    return x * math.log(x / y) + (1.0 - x) * math.log((1.0 - x) / (1.0 - y))


def _kl_upper(p: float, d: float) -> float:
    # D(p + d || p), continuous up to d = 1 - p
    x = p + d
    if x >= 1.0:
        return -math.log(p)
    return kl_divergence(x, p)


def solve_delta_multi(p_multi: float, n_sent: int, eps_target: float, rel_tol: float = 1e-9) -> float:
    """Deviation d with exp(-D(p + d || p) * n_sent) = eps_target, found by bisection."""
    if n_sent < 1:
        raise SecurityError("n_sent must be at least 1")
    if not 0.0 < p_multi < 1.0:
        raise SecurityError("p_multi must lie in (0, 1)")
    if eps_target >= 1.0:
        return 0.0
    if not eps_target > 0.0:
        raise SecurityError("eps_target must be positive")
    target = -math.log(eps_target) / n_sent
    hi = 1.0 - p_multi
    if _kl_upper(p_multi, hi) < target:
        raise EstimationError(
            f"eps={eps_target} needs a deviation beyond 1 - p_multi for n_sent={n_sent}"
        )
    lo = 0.0
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if _kl_upper(p_multi, mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def estimate_n_single(n_detect: int, n_sent: int, p_multi: float, delta_m: float) -> int:
    """Worst-case single-photon count: every possible multi-photon pulse was detected."""
    multi = math.ceil(n_sent * (p_multi + delta_m))
    return max(0, int(n_detect) - multi)


# ---------------------------------------------------------------------------
# binding bound
# ---------------------------------------------------------------------------


def error_budget(e_tol, n_tol: int) -> int:
    """floor(E_tol * N_tol), evaluated on the decimal value of e_tol so 0.29 * 100 gives 29."""
    if isinstance(e_tol, float):
        e_tol = Fraction(repr(e_tol))
    return math.floor(Fraction(e_tol) * n_tol)


def combinatorial_factor(n: int, k_max: int) -> int:
    """1 + sum_{k=1..k_max} (2^k - 1) C(n, k), exactly."""
    return 1 + sum(((1 << k) - 1) * math.comb(n, k) for k in range(1, k_max + 1))


def log_combinatorial_factor(n: int, k_max: int) -> float:
    if n <= EXACT_COMB_LIMIT:
        return math.log(combinatorial_factor(n, k_max))
    # log-domain terms, summed relative to the largest with fsum
    logs = [0.0]
    for k in range(1, k_max + 1):
        log_binom = math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)
        logs.append(log_binom + k * LN2 + math.log1p(-(2.0**-k)))
    top = max(logs)
    return top + math.log(math.fsum(math.exp(v - top) for v in logs))


def _log_bracket(delta, n_tol: int, k: int):
    # log of [1 - e^X] 2^{1-(1-h)N} + 2 e^X with X = (delta N - k)^2 / (1 - N)
    delta = np.asarray(delta, dtype=np.float64)
    x = (delta * n_tol - k) ** 2 / (1.0 - n_tol)
    h = -delta * np.log2(delta) - (1.0 - delta) * np.log2(1.0 - delta)
    with np.errstate(divide="ignore"):
        first = np.log(-np.expm1(x)) + (1.0 - (1.0 - h) * n_tol) * LN2
    return np.logaddexp(first, LN2 + x)


def binding_bound_at(delta: float, params: SecurityParams) -> float:
    """Value of the binding expression at one delta, including eps_rect + eps_diag."""
    k = params.error_budget
    log_val = float(_log_bracket(delta, params.n_tol, k)) + log_combinatorial_factor(params.n_tol, k)
    return _safe_exp(log_val) + params.eps_rect + params.eps_diag


def _safe_exp(v: float) -> float:
    try:
        return math.exp(v)
    except OverflowError:
        return math.inf


def epsilon_b_bound(params: SecurityParams, n_grid: int = 10_000, inset: float = 1e-6, tol: float = 1e-6) -> BindingBound:
    """Infimum over delta in (E_tol, 1/2) of the binding bound, plus its pieces at the optimum."""
    n = params.n_tol
    if n < 2:
        raise SecurityError("the binding bound needs n_tol >= 2")
    k = params.error_budget
    lo = float(params.e_tol) + inset
    hi = 0.5 - inset
    delta, log_bracket = grid_then_golden(
        lambda d: _log_bracket(d, n, k),
        lambda d: float(_log_bracket(d, n, k)),
        lo,
        hi,
        n_grid,
        tol,
    )
    log_comb = log_combinatorial_factor(n, k)
    x = (delta * n - k) ** 2 / (1.0 - n)
    return BindingBound(
        eps_b=_safe_exp(log_bracket + log_comb) + params.eps_rect + params.eps_diag,
        delta_star=delta,
        exponential_term=math.exp(x),
        entropy_term=2.0 ** (1.0 - (1.0 - binary_entropy(delta)) * n),
        combinatorial_factor=_safe_exp(log_comb),
        log_combinatorial_factor=log_comb,
        error_budget=k,
    )


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------


def _check_declaration(decl: Declaration, detected: np.ndarray):
    if decl.indices.shape != decl.bits.shape:
        raise ProtocolError("declaration indices and bits differ in length")
    if not np.array_equal(np.asarray(decl.indices), np.asarray(detected)):
        extra = np.setdiff1d(decl.indices, detected)
        if extra.size:
            raise ProtocolError(f"declaration references undetected pulses, e.g. {int(extra[0])}")
        raise ProtocolError("declaration does not cover every reported detection")


def count_errors(pulses: PulseTrain, detected: np.ndarray, revealed: Declaration):
    """Mismatches between Bob's prepared bits and the revealed bits, split by Bob's basis."""
    detected = np.asarray(detected, dtype=np.int64)
    _check_declaration(revealed, detected)
    basis = pulses.basis[revealed.indices]
    wrong = pulses.bit[revealed.indices] != np.asarray(revealed.bits)
    return int(np.sum(wrong & (basis == Basis.RECT))), int(np.sum(wrong & (basis == Basis.DIAG)))


def _single_photon_floor(n_detect, n_sent, p, eps):
    if n_sent == 0:
        return 0, math.nan
    try:
        dm = solve_delta_multi(p, n_sent, eps)
    except EstimationError:
        # the only certain bound left: every sent pulse may have been multi-photon
        dm = 1.0 - p
    return estimate_n_single(n_detect, n_sent, p, dm), dm


def estimate(params: SecurityParams, pulses: PulseTrain, detected, revealed: Declaration, subtract_multiphoton: bool = True) -> EstimationResult:
    detected = np.asarray(detected, dtype=np.int64)
    n_e_rect, n_e_diag = count_errors(pulses, detected, revealed)
    p = p_multi_bound(params.mu, params.intensity_fluctuation)
    n_sent_rect = int(np.sum(pulses.basis == Basis.RECT))
    n_sent_diag = int(np.sum(pulses.basis == Basis.DIAG))
    det_basis = pulses.basis[detected]
    n_det_rect = int(np.sum(det_basis == Basis.RECT))
    n_det_diag = int(np.sum(det_basis == Basis.DIAG))
    if subtract_multiphoton:
        n_rect, dm_rect = _single_photon_floor(n_det_rect, n_sent_rect, p, params.eps_rect)
        n_diag, dm_diag = _single_photon_floor(n_det_diag, n_sent_diag, p, params.eps_diag)
    else:
        n_rect, n_diag, dm_rect, dm_diag = n_det_rect, n_det_diag, 0.0, 0.0
    return EstimationResult(
        n_rect, n_diag, p, dm_rect, dm_diag, n_e_rect, n_e_diag,
        n_sent_rect, n_sent_diag, n_det_rect, n_det_diag,
    )


def decide(params: SecurityParams, est: EstimationResult):
    """(accepted, deduced bit, reason, detail) from the estimated counts alone."""
    if est.n_rect < params.n_tol or est.n_diag < params.n_tol:
        return False, None, Reason.INSUFFICIENT_SINGLES, ""
    k = params.error_budget
    pass0 = est.n_e_rect <= k
    pass1 = est.n_e_diag <= k
    if pass0 and pass1:
        return False, None, Reason.MISMATCH, "declaration passes for both bit values"
    if pass0:
        return True, 0, Reason.OK, ""
    if pass1:
        return True, 1, Reason.OK, ""
    return False, None, Reason.EXCESSIVE_ERRORS, ""


def verify(
    params: SecurityParams,
    pulses: PulseTrain,
    detected,
    declaration_a0: Declaration,
    declaration_a1: Declaration,
    layout: Optional[geometry.ProtocolLayout] = None,
    observations: Optional[geometry.TimingObservations] = None,
    subtract_multiphoton: bool = True,
) -> VerificationVerdict:
    """Bob's decision on a revealed commitment.

    The timing bound and exclusion checks are attached when a layout and
    observations are supplied.
    """
    if pulses is None or detected is None or declaration_a0 is None or declaration_a1 is None:
        raise ProtocolError("incomplete transcript")
    detected = np.asarray(detected, dtype=np.int64)
    t_upper = math.nan
    excl = (False, False)
    if layout is not None and observations is not None:
        t_upper = geometry.solve_commit_point(layout, observations).t_commit_upper
        excl = tuple(geometry.location_exclusion(layout, observations))

    if not declaration_a0.same_as(declaration_a1):
        return VerificationVerdict(False, None, Reason.MISMATCH, None, t_upper, excl, "agent declarations differ")
    est = estimate(params, pulses, detected, declaration_a0, subtract_multiphoton)
    accepted, bit, reason, detail = decide(params, est)
    return VerificationVerdict(accepted, bit, reason, est, t_upper, excl, detail)
