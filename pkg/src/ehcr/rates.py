"""Closed-form service rates, queue distributions and delays.

All rates are per slot.  The energy queue is always taken as an M/D/1
queue with unit service, so the secondary has energy in a fraction
``lambda_e`` of slots; this is a lower bound on the real system and only
the simulator models the energy queue exactly.

Two dominant systems are covered: ``S1`` (secondary always backlogged,
primary queue as in the original system) and ``S2`` (primary always
backlogged).  The ``sf1_*`` functions are the same first dominant system
when the secondary exploits the primary's ARQ feedback.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import SuccessProbs

# Boundary slack: lambda_p == mu_p (or eta) is the closure of the stability
# region and is where optimal policies sit; solvers may land within 1e-9.
BOUNDARY_TOL = 1e-9


class UnstableError(ValueError):
    """The requested queue has no stationary distribution."""


def _check_prob(name, v):
    if not (0.0 <= v <= 1.0) or math.isnan(v):
        raise ValueError(f"{name}={v!r} is not in [0, 1]")


@dataclass(frozen=True)
class AccessPolicy:
    """Sensing and access probabilities of the secondary.

    ``p_s`` sense, ``p_t`` transmit without sensing, ``p_f``/``p_b`` transmit
    after sensing free/busy, ``p_r`` transmit right after an overheard NACK
    (ignored when feedback is not used).
    """

    p_s: float = 0.0
    p_t: float = 0.0
    p_f: float = 0.0
    p_b: float = 0.0
    p_r: float = 0.0

    def __post_init__(self):
        for name in ("p_s", "p_t", "p_f", "p_b", "p_r"):
            _check_prob(name, getattr(self, name))

    def as_tuple(self):
        return (self.p_s, self.p_t, self.p_f, self.p_b, self.p_r)


SILENT = AccessPolicy()
CONVENTIONAL = AccessPolicy(p_s=1.0, p_t=0.0, p_f=1.0, p_b=0.0, p_r=0.0)


@dataclass(frozen=True)
class Traffic:
    lambda_p: float = 0.0
    lambda_s: float = 0.0
    lambda_e: float = 1.0
    p_fa: float = 0.0
    p_md: float = 0.0

    def __post_init__(self):
        for name in ("lambda_p", "lambda_s", "lambda_e", "p_fa", "p_md"):
            _check_prob(name, getattr(self, name))


@dataclass(frozen=True)
class ServiceRates:
    """Mean service rates; ``status`` is ``"ok"`` or names the unstable queue.

    When a queue is unstable the rates that depend on its stationary
    distribution are NaN rather than clamped.
    """

    mu_p: float
    mu_s: float
    mu_e: float
    status: str = "ok"

    @property
    def stable(self) -> bool:
        return self.status == "ok"


@dataclass(frozen=True)
class PrimaryChainDist:
    """Stationary law of the primary queue with an always-backlogged secondary."""

    lambda_p: float
    mu_p: float
    nu0: float
    geometric_ratio: float

    def nu(self, k) -> np.ndarray | float:
        """Probability of ``k`` packets in the queue (vectorised over ``k``)."""
        k = np.asarray(k)
        if self.lambda_p == 0.0:
            out = np.where(k == 0, 1.0, 0.0)
        else:
            # nu0 * (1-mu)^(k-1) * base^k regrouped so no factor overflows
            base = self.lambda_p / ((1.0 - self.lambda_p) * self.mu_p)
            kk = np.maximum(k, 1)
            tail = self.nu0 * base * self.geometric_ratio ** (kk - 1)
            out = np.where(k == 0, self.nu0, tail)
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class FeedbackChain:
    """Primary queue law when the secondary overhears ACK/NACK.

    ``alpha_p`` and ``gamma_p`` are the primary success probabilities on a
    first transmission and on a retransmission; ``sum_pi``/``sum_eps`` are the
    fractions of slots spent in first-transmission/retransmission states.
    """

    lambda_p: float
    alpha_p: float
    gamma_p: float
    eta: float
    pi0: float
    sum_pi: float
    sum_eps: float

    @property
    def ratio(self) -> float:
        return self.lambda_p * (1.0 - self.eta) / ((1.0 - self.lambda_p) * self.eta)

    def pi(self, k: int) -> float:
        """First-transmission state probability with ``k`` packets queued."""
        lam, eta = self.lambda_p, self.eta
        if k == 0:
            return self.pi0
        if lam == 0.0:
            return 0.0
        if k == 1:
            return self.pi0 * lam / (1.0 - lam) * (lam + (1.0 - lam) * self.gamma_p) / eta
        return self.pi0 * lam * (1.0 - self.alpha_p) / (1.0 - eta) ** 2 * self.ratio**k

    def eps(self, k: int) -> float:
        """Retransmission state probability with ``k`` packets queued."""
        lam, eta = self.lambda_p, self.eta
        if k == 0 or lam == 0.0:
            return 0.0
        if k == 1:
            return self.pi0 * lam / eta * (1.0 - self.alpha_p)
        return self.pi0 * (1.0 - lam) * (1.0 - self.alpha_p) / (1.0 - eta) ** 2 * self.ratio**k


@dataclass(frozen=True)
class DelayReport:
    d_p: float
    feasible: bool
    reason: str = field(default="")


def exposure(policy: AccessPolicy, traffic: Traffic) -> float:
    """Probability that the secondary transmits while the primary is busy, given it has energy."""
    p = policy
    return (1.0 - p.p_s) * p.p_t + p.p_s * traffic.p_md * p.p_f + p.p_s * (1.0 - traffic.p_md) * p.p_b


def _idle_gain(policy, probs, traffic):
    # secondary success mass per slot with the primary idle
    p = policy
    return ((1.0 - p.p_s) * p.p_t * probs.p_bar_0s
            + p.p_s * p.p_b * traffic.p_fa * probs.p_bar_1s
            + p.p_s * p.p_f * (1.0 - traffic.p_fa) * probs.p_bar_1s)


def _busy_gain(policy, probs, traffic):
    # same with the primary busy
    p = policy
    return ((1.0 - p.p_s) * p.p_t * probs.p_bar_0s_c
            + p.p_s * p.p_f * traffic.p_md * probs.p_bar_1s_c
            + p.p_s * p.p_b * (1.0 - traffic.p_md) * probs.p_bar_1s_c)


def energy_rate(policy: AccessPolicy, traffic: Traffic, occ_idle: float, occ_busy: float) -> float:
    """Energy-queue service rate for given joint occupancies.

    ``occ_idle`` is Pr{secondary data queue nonempty, primary empty},
    ``occ_busy`` is Pr{secondary nonempty, primary nonempty}.
    """
    _check_prob("occ_idle", occ_idle)
    _check_prob("occ_busy", occ_busy)
    if occ_idle + occ_busy > 1.0 + 1e-12:
        raise ValueError("joint occupancies sum above one")
    p = policy
    return ((1.0 - p.p_s) * p.p_t * (occ_idle + occ_busy)
            + p.p_s * p.p_f * (traffic.p_md * occ_busy + (1.0 - traffic.p_fa) * occ_idle)
            + p.p_s * p.p_b * (traffic.p_fa * occ_idle + (1.0 - traffic.p_md) * occ_busy))


def s1_mu_p(policy: AccessPolicy, probs: SuccessProbs, traffic: Traffic) -> float:
    return probs.p_bar_p - traffic.lambda_e * probs.delta_p * exposure(policy, traffic)


def s1_rates(policy: AccessPolicy, probs: SuccessProbs, traffic: Traffic) -> ServiceRates:
    """Rates in the dominant system with a backlogged secondary."""
    mu_p = s1_mu_p(policy, probs, traffic)
    lam = traffic.lambda_p
    if lam > mu_p + BOUNDARY_TOL:
        return ServiceRates(mu_p, math.nan, math.nan, "primary-unstable")
    busy = min(lam / mu_p, 1.0) if lam > 0 else 0.0
    idle = 1.0 - busy
    mu_s = traffic.lambda_e * (idle * _idle_gain(policy, probs, traffic) + busy * _busy_gain(policy, probs, traffic))
    mu_e = energy_rate(policy, traffic, idle, busy)
    return ServiceRates(mu_p, mu_s, mu_e)


def s2_rates(policy: AccessPolicy, probs: SuccessProbs, traffic: Traffic) -> ServiceRates:
    """Rates in the dominant system with a backlogged primary.

    With sensing off this is ``mu_s = p_t lambda_e P0s^c`` and
    ``mu_p = P_p - lambda_s Delta_p / P0s^c``, independent of ``p_t``.
    """
    mu_s = traffic.lambda_e * _busy_gain(policy, probs, traffic)
    lam_s = traffic.lambda_s
    if lam_s == 0.0:
        return ServiceRates(probs.p_bar_p, mu_s, 0.0)
    if lam_s > mu_s + BOUNDARY_TOL:
        return ServiceRates(math.nan, mu_s, math.nan, "secondary-unstable")
    occupied = min(lam_s / mu_s, 1.0)
    mu_p = probs.p_bar_p - occupied * traffic.lambda_e * probs.delta_p * exposure(policy, traffic)
    return ServiceRates(mu_p, mu_s, energy_rate(policy, traffic, 0.0, occupied))


def conventional_rates(probs: SuccessProbs, traffic: Traffic) -> ServiceRates:
    """Always sense, send only when the channel looks free."""
    return s1_rates(CONVENTIONAL, probs, traffic)


def primary_chain(lambda_p: float, mu_p: float) -> PrimaryChainDist:
    if not 0.0 < mu_p <= 1.0:
        raise ValueError(f"mu_p={mu_p!r} outside (0, 1]")
    _check_prob("lambda_p", lambda_p)
    if lambda_p >= mu_p:
        raise UnstableError(f"lambda_p={lambda_p} >= mu_p={mu_p}")
    ratio = lambda_p * (1.0 - mu_p) / ((1.0 - lambda_p) * mu_p)
    return PrimaryChainDist(lambda_p, mu_p, 1.0 - lambda_p / mu_p, ratio)


def feedback_chain(policy: AccessPolicy, probs: SuccessProbs, traffic: Traffic) -> FeedbackChain:
    lam = traffic.lambda_p
    ell = traffic.lambda_e * probs.delta_p
    alpha = probs.p_bar_p - ell * exposure(policy, traffic)
    gamma = probs.p_bar_p - ell * policy.p_r
    eta = lam * alpha + (1.0 - lam) * gamma
    if gamma <= 0.0:
        raise UnstableError("retransmissions never succeed (gamma_p <= 0)")
    if lam > eta + BOUNDARY_TOL:
        raise UnstableError(f"lambda_p={lam} exceeds eta={eta}")
    pi0 = max(eta - lam, 0.0) / gamma
    return FeedbackChain(lam, alpha, gamma, eta, pi0, lam, lam * (1.0 - alpha) / gamma)


def sf1_secondary_rate(policy: AccessPolicy, probs: SuccessProbs, traffic: Traffic) -> float:
    """Secondary service rate with feedback leveraging (backlogged secondary).

    Raises :class:`UnstableError` outside ``lambda_p <= eta``.
    """
    fc = feedback_chain(policy, probs, traffic)
    return traffic.lambda_e * (
        fc.pi0 * _idle_gain(policy, probs, traffic)
        + fc.sum_pi * _busy_gain(policy, probs, traffic)
        + fc.sum_eps * policy.p_r * probs.p_bar_0s_c
    )


def delay_s1(policy: AccessPolicy, probs: SuccessProbs, traffic: Traffic) -> DelayReport:
    """Mean primary queueing delay (slots) by Little's law, backlogged secondary."""
    mu_p = s1_mu_p(policy, probs, traffic)
    lam = traffic.lambda_p
    if lam >= mu_p:
        return DelayReport(math.inf, False, "lambda_p >= mu_p")
    return DelayReport((1.0 - lam) / (mu_p - lam), True)


def delay_from_eta(lambda_p: float, alpha_p: float, gamma_p: float, eta: float) -> float:
    """Mean primary delay of the feedback chain, written in terms of ``eta``."""
    lam = lambda_p
    num = (alpha_p - eta) * (eta - lam) ** 2 + (1.0 - lam) ** 2 * (1.0 - alpha_p) * eta
    return num / ((eta - lam) * (1.0 - lam) * (1.0 - eta) * gamma_p)


def delay_sf1(policy: AccessPolicy, probs: SuccessProbs, traffic: Traffic) -> DelayReport:
    lam = traffic.lambda_p
    ell = traffic.lambda_e * probs.delta_p
    alpha = probs.p_bar_p - ell * exposure(policy, traffic)
    gamma = probs.p_bar_p - ell * policy.p_r
    eta = lam * alpha + (1.0 - lam) * gamma
    if gamma <= 0.0 or lam >= eta:
        return DelayReport(math.inf, False, "lambda_p >= eta")
    if eta >= 1.0:
        return DelayReport(math.nan, False, "eta == 1 (singular)")
    return DelayReport(delay_from_eta(lam, alpha, gamma, eta), True)


def delay_excess(eta: float, lambda_p: float, gamma_p: float, max_delay: float) -> float:
    """Rearranged feedback delay constraint; ``<= 0`` iff the mean delay is at most ``max_delay``.

    Valid for ``lambda_p < eta < 1`` and ``0 < lambda_p``.  Convex in ``eta``
    for fixed ``gamma_p``.
    """
    lam, g, d = lambda_p, gamma_p, max_delay
    w = lam + (1.0 - lam) * g
    return ((eta - g) * (eta - lam) ** 2 / eta
            + (1.0 - lam) * (w - eta)
            + d * (eta - lam) * (eta - 1.0) * g * lam / eta)
