"""Named parameter sets from the numerical study.

Each preset pairs a :class:`SuccessProbs` with the traffic-side constants
(energy arrival rate, sensing errors).  Arrival rates that a figure sweeps
are left at zero; ``fig7`` fixes ``lambda_p = 0.4`` and sweeps ``lambda_e``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .channel import SuccessProbs
from .rates import Traffic


@dataclass(frozen=True)
class Preset:
    name: str
    probs: SuccessProbs
    traffic: Traffic
    note: str = ""


_BASE = SuccessProbs(p_bar_p=0.7, p_bar_p_c=0.1, p_bar_0s=0.8, p_bar_1s=0.6,
                     p_bar_0s_c=0.1, p_bar_1s_c=0.075)

PRESETS = {
    "fig3": Preset(
        "fig3",
        replace(_BASE, p_bar_1s_c=0.3),
        Traffic(lambda_e=1.0, p_fa=0.01, p_md=0.02),
        "stability regions, reliable power supply",
    ),
    "fig4": Preset(
        "fig4", _BASE, Traffic(lambda_e=0.4, p_fa=0.05, p_md=0.01),
        "proposed vs conventional access",
    ),
    "fig5": Preset(
        "fig5", _BASE, Traffic(lambda_e=0.4, p_fa=0.05, p_md=0.01),
        "secondary MPR strength; sweep delta_0s = delta_1s over {0, 1/8, 1/4, 1/2}",
    ),
    "fig6": Preset(
        "fig6", _BASE, Traffic(lambda_e=0.8, p_fa=0.05, p_md=0.01),
        "primary MPR strength; sweep p_bar_p_c",
    ),
    "fig7": Preset(
        "fig7", _BASE, Traffic(lambda_p=0.4, lambda_e=0.4, p_fa=0.05, p_md=0.01),
        "energy arrival sweep at lambda_p = 0.4",
    ),
    "fig8": Preset(
        "fig8", _BASE, Traffic(lambda_e=0.4, p_fa=0.05, p_md=0.01),
        "primary delay constraint D in {2, 4}",
    ),
}

MPR_DELTAS = (0.0, 1.0 / 8.0, 1.0 / 4.0, 1.0 / 2.0)


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; available: {sorted(PRESETS)}") from None
