"""Slot-level Monte Carlo simulation of the primary/secondary protocol.

Each slot runs service first and appends Bernoulli arrivals afterwards, so a
packet arriving in slot ``t`` can leave in slot ``t + 1`` at the earliest.
Randomness comes from four Philox streams (arrivals, sensing, access,
reception) spawned from one seed.  Every slot consumes a fixed number of
draws from each stream whether or not they are used, so runs with matched
seeds see the same arrivals and fading outcomes across configurations.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import SuccessProbs
from .rates import AccessPolicy, Traffic

log = logging.getLogger(__name__)

ENERGY_MODELS = ("exact", "md1-approx")
DOMINANCE_MODES = ("none", "saturate-secondary", "saturate-primary")
STREAMS = ("arrivals", "sensing", "access", "reception")
GROWTH_SLOPE = 1e-3
_CHUNK = 1 << 16
_BATCHES = 30
_Z95 = 1.959963984540054


@dataclass(frozen=True)
class SimConfig:
    num_slots: int = 1_000_000
    seed: int = 0
    feedback_enabled: bool = False
    energy_model: str = "md1-approx"
    dominance: str = "none"
    warmup_slots: int | None = None  # default: 10% of num_slots

    def __post_init__(self):
        if self.energy_model not in ENERGY_MODELS:
            raise ValueError(f"energy_model must be one of {ENERGY_MODELS}")
        if self.dominance not in DOMINANCE_MODES:
            raise ValueError(f"dominance must be one of {DOMINANCE_MODES}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")
        if not 0 <= self.warmup < self.num_slots:
            raise ValueError("need num_slots > warmup_slots >= 0")

    @property
    def warmup(self) -> int:
        return self.num_slots // 10 if self.warmup_slots is None else self.warmup_slots


@dataclass
class NodeState:
    primary: int = 0
    secondary: int = 0
    energy: int = 0
    retransmission: bool = False

    def check(self, feedback_enabled: bool):
        if min(self.primary, self.secondary, self.energy) < 0:
            raise AssertionError("negative queue length")
        if self.retransmission and not feedback_enabled:
            raise AssertionError("retransmission flag without feedback")


@dataclass(frozen=True)
class SimReport:
    """Post-warmup statistics.

    ``mu_p``/``mu_s`` count successes (dummy packets included) per slot in
    which the node had something to send; ``mu_e`` counts secondary
    transmissions per slot with energy available.  Throughputs and delays
    count real packets only.  ``ci`` maps statistic names to 95% half-widths and
    ``stderr`` to the batch-means standard errors behind them.
    """

    slots: int
    mu_p: float
    mu_s: float
    mu_e: float
    throughput_p: float
    throughput_s: float
    mean_delay_p: float
    mean_queue_p: float
    mean_queue_s: float
    empty_p: float
    empty_s: float
    empty_e: float
    primary_states: tuple  # (empty, first transmission, retransmission)
    slope_p: float
    slope_s: float
    ci: dict = field(default_factory=dict)
    stderr: dict = field(default_factory=dict)
    warnings: tuple = ()

    @property
    def stable_p(self) -> bool:
        return self.slope_p <= GROWTH_SLOPE

    @property
    def stable_s(self) -> bool:
        return self.slope_s <= GROWTH_SLOPE


def streams(seed: int) -> dict:
    """Independent counter-based generators, one per decision category."""
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.Generator(np.random.Philox(ss)) for name, ss in zip(STREAMS, children)}


# counters accumulated per slot, snapshotted at batch boundaries
_FIELDS = ("slots", "tx_p", "succ_p", "dep_p", "has_s", "succ_s", "dep_s", "has_e", "used_e",
           "empty_p", "empty_s", "empty_e", "sum_q", "sum_v", "delay_sum", "delay_n",
           "st_empty", "st_first", "st_retx")


def run(config: SimConfig, policy: AccessPolicy, probs: SuccessProbs, traffic: Traffic,
        state: NodeState | None = None) -> SimReport:
    """Simulate ``config.num_slots`` slots and summarise the post-warmup part."""
    gens = streams(config.seed)
    st = state if state is not None else NodeState()
    n, warm = config.num_slots, config.warmup
    sat_s = config.dominance == "saturate-secondary"
    sat_p = config.dominance == "saturate-primary"
    exact = config.energy_model == "exact"
    fb = config.feedback_enabled
    lam_p, lam_s, lam_e = traffic.lambda_p, traffic.lambda_s, traffic.lambda_e
    p_fa, p_md = traffic.p_fa, traffic.p_md
    p_s, p_t, p_f, p_b, p_r = policy.as_tuple()
    pp, ppc = probs.p_bar_p, probs.p_bar_p_c
    ps_ok = ((probs.p_bar_0s, probs.p_bar_0s_c), (probs.p_bar_1s, probs.p_bar_1s_c))

    Q, V, Z, nack = st.primary, st.secondary, st.energy, st.retransmission and fb
    arrivals = deque([0] * Q)  # arrival slots of real primary packets (pre-existing count as 0)
    c = dict.fromkeys(_FIELDS, 0)
    measured = n - warm
    bounds = [warm + (measured * k) // _BATCHES for k in range(1, _BATCHES + 1)]
    snaps = []
    stride = max(1, measured // 20_000)
    traj_q, traj_v = [], []

    t = 0
    while t < n:
        m = min(_CHUNK, n - t)
        ua = gens["arrivals"].random((m, 3)).tolist()
        us = gens["sensing"].random((m, 2)).tolist()
        ux = gens["access"].random(m).tolist()
        ur = gens["reception"].random((m, 2)).tolist()
        for j in range(m):
            rec = t >= warm
            pu_tx = Q > 0 or sat_p
            su_has = V > 0 or sat_s
            su_tx = False
            sensed = 0
            if su_has and Z > 0:
                if fb and nack:
                    su_tx = ux[j] < p_r
                elif us[j][0] < p_s:
                    sensed = 1
                    busy = (us[j][1] >= p_md) if pu_tx else (us[j][1] < p_fa)
                    su_tx = ux[j] < (p_b if busy else p_f)
                else:
                    su_tx = ux[j] < p_t
            r = ur[j]
            p_ok = pu_tx and r[0] < (ppc if su_tx else pp)
            s_ok = su_tx and r[1] < ps_ok[sensed][1 if pu_tx else 0]

            if rec:
                c["slots"] += 1
                if pu_tx:
                    c["tx_p"] += 1
                    c["succ_p"] += p_ok
                if su_has:
                    c["has_s"] += 1
                    c["succ_s"] += s_ok
                if Z > 0:
                    c["has_e"] += 1
                c["empty_p"] += Q == 0
                c["empty_s"] += V == 0
                c["empty_e"] += Z == 0
                c["sum_q"] += Q
                c["sum_v"] += V
                if Q == 0:
                    c["st_empty"] += 1
                elif nack:
                    c["st_retx"] += 1
                else:
                    c["st_first"] += 1

            # energy
            if rec:
                c["used_e"] += su_tx
            if su_tx or (Z > 0 and not exact):
                Z -= 1
            # departures
            if p_ok and Q > 0:
                Q -= 1
                a = arrivals.popleft()
                if rec:
                    c["dep_p"] += 1
                    if a >= warm:
                        c["delay_sum"] += t - a
                        c["delay_n"] += 1
            if s_ok and V > 0:
                V -= 1
                if rec:
                    c["dep_s"] += 1
            if fb:
                nack = pu_tx and not p_ok
            # late arrivals
            u = ua[j]
            if u[0] < lam_p:
                Q += 1
                arrivals.append(t)
            if u[1] < lam_s:
                V += 1
            if u[2] < lam_e:
                Z += 1

            t += 1
            if rec and (t - warm) % stride == 0:
                traj_q.append(Q)
                traj_v.append(V)
            if len(snaps) < _BATCHES and t == bounds[len(snaps)]:
                snaps.append(dict(c))

    st.primary, st.secondary, st.energy, st.retransmission = Q, V, Z, nack
    return _summarise(c, snaps, traj_q, traj_v, stride)


def _ratio(num, den):
    return num / den if den else math.nan


def _batch_stats(snaps, num, den):
    """Batch-means estimate and standard error of ``sum(num) / sum(den)``."""
    prev = dict.fromkeys(_FIELDS, 0)
    vals = []
    for s in snaps:
        dn = s[den] - prev[den]
        if dn:
            vals.append((s[num] - prev[num]) / dn)
        prev = s
    if len(vals) < 2:
        return math.nan
    return float(np.std(vals, ddof=1) / math.sqrt(len(vals)))


def _slope(traj, stride):
    half = np.asarray(traj[len(traj) // 2:], float)
    if half.size < 2:
        return 0.0
    x = np.arange(half.size) * stride
    return float(np.polyfit(x, half, 1)[0])


_STATS = {
    # name: (numerator, denominator)
    "mu_p": ("succ_p", "tx_p"),
    "mu_s": ("succ_s", "has_s"),
    "mu_e": ("used_e", "has_e"),
    "throughput_p": ("dep_p", "slots"),
    "throughput_s": ("dep_s", "slots"),
    "mean_delay_p": ("delay_sum", "delay_n"),
    "mean_queue_p": ("sum_q", "slots"),
    "mean_queue_s": ("sum_v", "slots"),
    "empty_p": ("empty_p", "slots"),
    "empty_s": ("empty_s", "slots"),
    "empty_e": ("empty_e", "slots"),
    "state_empty": ("st_empty", "slots"),
    "state_first": ("st_first", "slots"),
    "state_retx": ("st_retx", "slots"),
}


def _summarise(c, snaps, traj_q, traj_v, stride) -> SimReport:
    est = {k: _ratio(c[a], c[b]) for k, (a, b) in _STATS.items()}
    se = {k: _batch_stats(snaps, a, b) for k, (a, b) in _STATS.items()}
    ci = {k: _Z95 * v for k, v in se.items()}
    noisy = tuple(sorted(k for k in ("mu_p", "mu_s", "throughput_p", "throughput_s", "mean_delay_p")
                         if est[k] > 0 and ci[k] > 0.1 * est[k]))
    if noisy:
        log.warning("95%% half-width above 10%% of the estimate for %s", ", ".join(noisy))
    return SimReport(
        slots=c["slots"], mu_p=est["mu_p"], mu_s=est["mu_s"], mu_e=est["mu_e"],
        throughput_p=est["throughput_p"], throughput_s=est["throughput_s"],
        mean_delay_p=est["mean_delay_p"], mean_queue_p=est["mean_queue_p"],
        mean_queue_s=est["mean_queue_s"], empty_p=est["empty_p"], empty_s=est["empty_s"],
        empty_e=est["empty_e"],
        primary_states=(est["state_empty"], est["state_first"], est["state_retx"]),
        slope_p=_slope(traj_q, stride), slope_s=_slope(traj_v, stride),
        ci=ci, stderr=se, warnings=noisy,
    )


@dataclass(frozen=True)
class BoundaryEstimate:
    rate: float
    inconclusive: bool
    runs: int


def estimate_boundary(config: SimConfig, probs: SuccessProbs, traffic: Traffic, policy: AccessPolicy,
                      axis: str = "secondary", resolution: float = 5e-3, upper: float = 1.0) -> BoundaryEstimate:
    """Empirical stability boundary in ``lambda_s`` (or ``lambda_p``) by bisection.

    A run is unstable when the queue's least-squares slope over the last half
    of the run exceeds ``GROWTH_SLOPE``; slopes within a factor two of that
    threshold mark the estimate inconclusive.
    """
    if axis not in ("secondary", "primary"):
        raise ValueError("axis must be 'secondary' or 'primary'")
    key = "lambda_s" if axis == "secondary" else "lambda_p"
    lo, hi, runs, vague = 0.0, upper, 0, False
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        rep = run(config, policy, probs, replace(traffic, **{key: mid}))
        runs += 1
        slope = rep.slope_s if axis == "secondary" else rep.slope_p
        vague |= 0.5 * GROWTH_SLOPE < slope < 2.0 * GROWTH_SLOPE
        if slope > GROWTH_SLOPE:
            hi = mid
        else:
            lo = mid
    return BoundaryEstimate(0.5 * (lo + hi) if lo > 0 else 0.0, vague, runs)
