"""Packet-reception probabilities over flat Rayleigh-fading links.

Two transmitters share the band: the primary (fixed power over the whole
slot) and the secondary (fixed energy per packet, spread over ``T`` or
``T - tau`` depending on whether it sensed first).  Each receiver sees an
exponential power gain on the wanted link and on the interfering link.

The six probabilities that the queueing analysis needs are collected in
:class:`SuccessProbs`; everything downstream works purely with those.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

import numpy as np
from scipy.optimize import brentq, least_squares

PRIMARY = "primary"
SECONDARY = "secondary"
_NODES = (PRIMARY, SECONDARY)

# exp() argument floor: keeps results >= 1e-300 instead of underflowing to 0
_LOG_FLOOR = math.log(1e-300)
_ORDER_SLACK = 1e-12


@dataclass(frozen=True)
class SuccessProbs:
    """Reception-success probabilities seen by the MAC analysis.

    ``p_bar_p`` / ``p_bar_p_c``: primary packet decoded with the secondary
    silent / transmitting.  ``p_bar_0s`` / ``p_bar_1s``: secondary packet
    decoded with the primary silent, sent over the full slot / after a
    sensing phase.  The ``_c`` variants are the same with the primary active.
    """

    p_bar_p: float
    p_bar_p_c: float
    p_bar_0s: float
    p_bar_1s: float
    p_bar_0s_c: float
    p_bar_1s_c: float

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (0.0 <= v <= 1.0) or math.isnan(v):
                raise ValueError(f"{f.name}={v!r} is not a probability")
        pairs = (("p_bar_p_c", "p_bar_p"), ("p_bar_0s_c", "p_bar_0s"), ("p_bar_1s_c", "p_bar_1s"))
        for low, high in pairs:
            if getattr(self, low) > getattr(self, high) + _ORDER_SLACK:
                raise ValueError(f"{low} exceeds {high}: interference cannot raise success")

    @property
    def delta_p(self) -> float:
        """Primary success lost to a concurrent secondary transmission."""
        return self.p_bar_p - self.p_bar_p_c

    @property
    def delta_0s(self) -> float:
        return self.p_bar_0s_c / self.p_bar_0s if self.p_bar_0s > 0 else 0.0

    @property
    def delta_1s(self) -> float:
        return self.p_bar_1s_c / self.p_bar_1s if self.p_bar_1s > 0 else 0.0

    def ordering_violations(self) -> list[str]:
        """Sensing-delay orderings (post-sensing never beats full slot) that fail.

        Not enforced on construction: some published parameter sets break
        them and are still meaningful inputs to the queueing formulas.
        """
        out = []
        if self.p_bar_1s > self.p_bar_0s + _ORDER_SLACK:
            out.append("p_bar_1s > p_bar_0s")
        if self.p_bar_1s_c > self.p_bar_0s_c + _ORDER_SLACK:
            out.append("p_bar_1s_c > p_bar_0s_c")
        return out

    def with_secondary_mpr(self, delta: float) -> "SuccessProbs":
        """Copy with both interfered secondary probabilities set to ``delta`` times the clean ones."""
        return replace(self, p_bar_0s_c=delta * self.p_bar_0s, p_bar_1s_c=delta * self.p_bar_1s)

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(getattr(self, f.name) for f in fields(self))


@dataclass(frozen=True)
class LinkModel:
    """Physical parameters of the two-pair network.

    Mean channel gains: ``gain_pp`` primary->primary receiver, ``gain_ss``
    secondary->secondary receiver, ``gain_ps`` primary->secondary receiver
    (interference), ``gain_sp`` secondary->primary receiver (interference).
    The primary sends at ``power_p`` watts for the whole slot; the secondary
    spends ``energy_s`` joules per packet over its transmission time.
    """

    bits_per_packet: float
    slot_duration: float
    bandwidth: float
    sensing_duration: float
    gain_pp: float = 1.0
    gain_ss: float = 1.0
    gain_ps: float = 1.0
    gain_sp: float = 1.0
    noise_pd: float = 1.0
    noise_sd: float = 1.0
    power_p: float = 1.0
    energy_s: float = 1.0

    def __post_init__(self):
        if self.bits_per_packet < 0:
            raise ValueError("bits_per_packet must be >= 0")
        if self.slot_duration <= 0 or self.bandwidth <= 0:
            raise ValueError("slot_duration and bandwidth must be positive")
        if not 0 < self.sensing_duration < self.slot_duration:
            raise ValueError("need 0 < sensing_duration < slot_duration")
        for name in ("gain_pp", "gain_ss", "gain_ps", "gain_sp", "noise_pd", "noise_sd"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.power_p < 0 or self.energy_s < 0:
            raise ValueError("transmit power/energy must be >= 0")

    def spectral_efficiency(self, i: int) -> float:
        """Bits/s/Hz needed when transmission starts at ``i * tau``."""
        _check_index(i)
        return self.bits_per_packet / (self.bandwidth * (self.slot_duration - i * self.sensing_duration))

    def snr(self, sender: str, receiver_of: str, i: int = 0) -> float:
        """Mean transmit-SNR factor of ``sender`` at the receiver serving ``receiver_of``.

        Secondary SNR grows as ``1 / (1 - i tau / T)`` since the same energy
        is squeezed into a shorter burst.
        """
        _check_node(sender)
        _check_node(receiver_of)
        noise = self.noise_pd if receiver_of == PRIMARY else self.noise_sd
        if sender == PRIMARY:
            return self.power_p / noise
        return self.energy_s / ((self.slot_duration - i * self.sensing_duration) * noise)

    def gain(self, sender: str, receiver_of: str) -> float:
        table = {
            (PRIMARY, PRIMARY): self.gain_pp,
            (SECONDARY, SECONDARY): self.gain_ss,
            (PRIMARY, SECONDARY): self.gain_ps,
            (SECONDARY, PRIMARY): self.gain_sp,
        }
        return table[(sender, receiver_of)]


def _check_node(node):
    if node not in _NODES:
        raise ValueError(f"unknown node {node!r}; expected one of {_NODES}")


def _check_index(i):
    if i not in (0, 1):
        raise ValueError(f"start index must be 0 or 1, got {i!r}")


def _threshold(link: LinkModel, i: int) -> float:
    return 2.0 ** link.spectral_efficiency(i) - 1.0


def _clip01(p: float) -> float:
    return min(1.0, max(0.0, p))


def success_alone(link: LinkModel, sender: str, i: int = 0) -> float:
    """Probability that ``sender``'s packet is decoded without interference.

    ``exp(-(2**R - 1) / (gamma * sigma))`` with ``R`` the spectral efficiency
    for a transmission starting at ``i * tau``.  The primary always starts at
    the slot boundary, so ``i`` must be 0 for it.
    """
    _check_node(sender)
    _check_index(i)
    if sender == PRIMARY and i != 0:
        raise ValueError("the primary always transmits from the start of the slot")
    x = _threshold(link, i)
    if x == 0.0:
        return 1.0
    g = link.snr(sender, sender, i) * link.gain(sender, sender)
    if g == 0.0:
        return 0.0
    return _clip01(math.exp(max(-x / g, _LOG_FLOOR)))


def success_interfered(link: LinkModel, sender: str, interferer: str, i: int = 0, n: int = 0) -> float:
    """Decoding probability of ``sender`` while ``interferer`` is also on air.

    The interferer start index ``n`` does not change the result: the primary
    interferer has fixed power, and a secondary interferer is evaluated at its
    full-slot power (``tau << T``), as the analysis assumes.
    """
    _check_node(interferer)
    _check_index(n)
    if sender == interferer:
        raise ValueError("sender and interferer must differ")
    alone = success_alone(link, sender, i)
    x = _threshold(link, i)
    if x == 0.0:
        return alone
    own = link.snr(sender, sender, i) * link.gain(sender, sender)
    if own == 0.0:
        return 0.0
    other = link.snr(interferer, sender, 0) * link.gain(interferer, sender)
    return _clip01(alone / (1.0 + x * other / own))


def derive_success_probs(link: LinkModel) -> SuccessProbs:
    vals = (
        success_alone(link, PRIMARY, 0),
        success_interfered(link, PRIMARY, SECONDARY, 0, 0),
        success_alone(link, SECONDARY, 0),
        success_alone(link, SECONDARY, 1),
        success_interfered(link, SECONDARY, PRIMARY, 0, 0),
        success_interfered(link, SECONDARY, PRIMARY, 1, 0),
    )
    return SuccessProbs(*(float(v) for v in vals))


def monte_carlo_success_probs(link: LinkModel, draws: int = 10**6, seed: int = 0):
    """Estimate the six probabilities by drawing exponential fading gains.

    Returns ``{name: (estimate, standard_error)}`` keyed like the fields of
    :class:`SuccessProbs`.  Success is the event that the instantaneous SINR
    reaches ``2**R - 1``.
    """
    rng = np.random.default_rng(seed)
    beta = {
        key: rng.exponential(link.gain(*key), size=draws)
        for key in ((PRIMARY, PRIMARY), (SECONDARY, SECONDARY), (PRIMARY, SECONDARY), (SECONDARY, PRIMARY))
    }

    def sinr(sender, i, interferer=None):
        signal = link.snr(sender, sender, i) * beta[(sender, sender)]
        if interferer is None:
            return signal
        return signal / (link.snr(interferer, sender, 0) * beta[(interferer, sender)] + 1.0)

    events = {
        "p_bar_p": sinr(PRIMARY, 0) >= _threshold(link, 0),
        "p_bar_p_c": sinr(PRIMARY, 0, SECONDARY) >= _threshold(link, 0),
        "p_bar_0s": sinr(SECONDARY, 0) >= _threshold(link, 0),
        "p_bar_1s": sinr(SECONDARY, 1) >= _threshold(link, 1),
        "p_bar_0s_c": sinr(SECONDARY, 0, PRIMARY) >= _threshold(link, 0),
        "p_bar_1s_c": sinr(SECONDARY, 1, PRIMARY) >= _threshold(link, 1),
    }
    out = {}
    for name, hit in events.items():
        p = float(hit.mean())
        out[name] = (p, math.sqrt(max(p * (1.0 - p), 1e-300) / draws))
    return out


def fit_link(probs: SuccessProbs, spectral_efficiency: float = 1.0) -> tuple[LinkModel, float]:
    """Find a link whose derived probabilities approximate ``probs``.

    Time, bandwidth and noise are normalised to one and the packet size is
    fixed by ``spectral_efficiency``; the sensing fraction and the four
    SNR-gain products are fitted by least squares on the six probabilities.
    Returns the link and the largest absolute mismatch.

    The channel model ties the two interfered secondary probabilities
    together (``1/delta - 1`` is proportional to ``-log`` of the clean
    probability for both start times), so arbitrary sets are only matched
    approximately.
    """
    target = np.array(probs.as_tuple())
    if not (0 < probs.p_bar_1s <= probs.p_bar_0s < 1 and 0 < probs.p_bar_p < 1):
        raise ValueError("need 0 < p_bar_1s <= p_bar_0s < 1 and 0 < p_bar_p < 1 to fit a link")
    if min(probs.p_bar_p_c, probs.p_bar_0s_c, probs.p_bar_1s_c) <= 0:
        raise ValueError("interfered probabilities must be positive to fit a link")
    r = spectral_efficiency

    def h(y):
        return y * (2.0 ** (r / y) - 1.0)

    # sensing fraction from the ratio of clean secondary exponents
    ratio = math.log(probs.p_bar_1s) / math.log(probs.p_bar_0s)
    if ratio <= 1.0 + 1e-12:
        frac0 = 1e-6
    else:
        # keep 2**(r / y) finite at the upper end of the bracket
        f_hi = 1.0 - max(r / 1000.0, 1e-9)
        g = lambda f: h(1.0 - f) / h(1.0) - ratio  # noqa: E731
        frac0 = brentq(g, 1e-12, f_hi) if g(f_hi) > 0 else f_hi
    x0 = 2.0**r - 1.0
    g_ss = x0 / -math.log(probs.p_bar_0s)
    g_pp = x0 / -math.log(probs.p_bar_p)
    g_sp = max((probs.p_bar_p / probs.p_bar_p_c - 1.0) * g_pp / x0, 1e-9)
    g_ps = max((probs.p_bar_0s / probs.p_bar_0s_c - 1.0) * g_ss / x0, 1e-9)

    def build(theta):
        frac = 1.0 / (1.0 + math.exp(-theta[0]))
        frac = min(max(frac, 1e-9), 1.0 - 1e-9)
        gpp, gss, gps, gsp = np.exp(theta[1:])
        return LinkModel(
            bits_per_packet=r, slot_duration=1.0, bandwidth=1.0, sensing_duration=frac,
            gain_pp=gpp, gain_ss=gss, gain_ps=gps, gain_sp=gsp,
        )

    def resid(theta):
        return np.array(derive_success_probs(build(theta)).as_tuple()) - target

    frac0 = min(max(frac0, 1e-6), 1.0 - 1e-6)
    theta0 = np.array([math.log(frac0 / (1.0 - frac0)), *np.log([g_pp, g_ss, g_ps, g_sp])])
    sol = least_squares(resid, theta0, xtol=1e-14, ftol=1e-14, gtol=1e-14)
    link = build(sol.x)
    return link, float(np.max(np.abs(resid(sol.x))))
