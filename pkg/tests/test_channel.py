import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ehcr.channel import (PRIMARY, SECONDARY, LinkModel, SuccessProbs, derive_success_probs, fit_link,
                          monte_carlo_success_probs, success_alone, success_interfered)
from ehcr.presets import get_preset


def unit_link(**kw):
    """b/(TW) = 1 and every SNR-gain product 1 at i = 0."""
    base = dict(bits_per_packet=1.0, slot_duration=1.0, bandwidth=1.0, sensing_duration=0.05)
    base.update(kw)
    return LinkModel(**base)


def test_zero_rate_packet_always_decoded():
    link = unit_link(bits_per_packet=0.0)
    assert success_alone(link, PRIMARY) == 1.0
    assert success_alone(link, SECONDARY, 1) == 1.0


def test_unit_link_alone():
    assert success_alone(unit_link(), PRIMARY) == pytest.approx(math.exp(-1), abs=1e-12)
    assert success_alone(unit_link(), SECONDARY, 0) == pytest.approx(0.367879, abs=1e-6)


def test_sensing_delay_lowers_secondary_success():
    got = success_alone(unit_link(), SECONDARY, 1)
    assert got == pytest.approx(math.exp(-(2 ** (1 / 0.95) - 1) * 0.95), abs=1e-12)
    assert got < success_alone(unit_link(), SECONDARY, 0)


def test_interfered_unit_link():
    assert success_interfered(unit_link(), PRIMARY, SECONDARY) == pytest.approx(math.exp(-1) / 2, abs=1e-12)
    assert success_interfered(unit_link(), PRIMARY, SECONDARY) == pytest.approx(0.183940, abs=1e-6)


def test_silent_interferer_changes_nothing():
    link = unit_link(energy_s=0.0)
    assert success_interfered(link, PRIMARY, SECONDARY) == success_alone(link, PRIMARY)


def test_primary_victim_ignores_secondary_start():
    link = unit_link()
    assert success_interfered(link, PRIMARY, SECONDARY, 0, 0) == success_interfered(link, PRIMARY, SECONDARY, 0, 1)


def test_decreasing_in_packet_size():
    vals = [success_alone(unit_link(bits_per_packet=b), SECONDARY, 1) for b in (0.5, 1.0, 1.5, 2.0)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_decreasing_in_sensing_time():
    vals = [success_alone(unit_link(sensing_duration=t), SECONDARY, 1) for t in (0.01, 0.05, 0.2, 0.5)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("bad", [
    lambda: success_alone(unit_link(), SECONDARY, 2),
    lambda: success_alone(unit_link(), PRIMARY, 1),
    lambda: success_alone(unit_link(), "relay"),
    lambda: success_interfered(unit_link(), PRIMARY, PRIMARY),
    lambda: unit_link(sensing_duration=1.0),
    lambda: unit_link(sensing_duration=2.0),
    lambda: unit_link(gain_pp=0.0),
    lambda: unit_link(bandwidth=-1.0),
])
def test_rejects_invalid_input(bad):
    with pytest.raises(ValueError):
        bad()


def test_degenerate_link_all_ones():
    probs = derive_success_probs(unit_link(bits_per_packet=0.0))
    assert probs.as_tuple() == (1.0,) * 6
    assert probs.delta_p == 0.0


def test_success_probs_validation():
    with pytest.raises(ValueError):
        SuccessProbs(0.5, 0.6, 0.8, 0.6, 0.1, 0.05)
    with pytest.raises(ValueError):
        SuccessProbs(0.7, 0.1, 0.8, 0.6, 1.2, 0.05)
    probs = get_preset("fig4").probs
    assert probs.delta_p == pytest.approx(0.6)
    assert probs.ordering_violations() == []


links = st.builds(
    LinkModel,
    bits_per_packet=st.floats(0.0, 3.0),
    slot_duration=st.just(1.0),
    bandwidth=st.just(1.0),
    sensing_duration=st.floats(0.01, 0.5),
    gain_pp=st.floats(0.1, 10.0),
    gain_ss=st.floats(0.1, 10.0),
    gain_ps=st.floats(0.01, 10.0),
    gain_sp=st.floats(0.01, 10.0),
    power_p=st.floats(0.0, 10.0),
    energy_s=st.floats(0.0, 10.0),
)


@given(links)
@settings(max_examples=200, deadline=None)
def test_derived_probabilities_respect_orderings(link):
    probs = derive_success_probs(link)
    assert probs.ordering_violations() == []
    assert probs.p_bar_p_c <= probs.p_bar_p + 1e-12
    assert probs.p_bar_0s_c <= probs.p_bar_0s + 1e-12
    assert probs.p_bar_1s_c <= probs.p_bar_1s + 1e-12
    assert probs.p_bar_1s <= probs.p_bar_0s + 1e-12
    assert probs.p_bar_1s_c <= probs.p_bar_0s_c + 1e-12


def test_monte_carlo_agrees_on_unit_link():
    link = unit_link(gain_ps=0.5, gain_sp=2.0)
    probs = derive_success_probs(link)
    mc = monte_carlo_success_probs(link, draws=200_000, seed=3)
    for name, (est, se) in mc.items():
        assert abs(getattr(probs, name) - est) <= 3.5 * se, name


def test_fit_link_reproduces_reachable_set():
    target = derive_success_probs(unit_link(gain_pp=2.0, gain_ss=3.0, gain_ps=0.4, gain_sp=0.6,
                                            sensing_duration=0.1))
    link, err = fit_link(target)
    assert err < 1e-6
    got = derive_success_probs(link)
    assert max(abs(a - b) for a, b in zip(got.as_tuple(), target.as_tuple())) < 1e-6


def test_fit_link_reports_mismatch_for_figure_sets():
    _, err3 = fit_link(get_preset("fig3").probs)
    _, err4 = fit_link(get_preset("fig4").probs)
    # the channel model couples the two interfered secondary probabilities
    assert err3 > 1e-3
    assert err4 > 1e-3
