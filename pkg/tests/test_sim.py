import logging
from dataclasses import replace

import pytest

from ehcr import sim, solver
from ehcr.presets import get_preset
from ehcr.rates import SILENT, AccessPolicy, delay_s1, feedback_chain, s1_rates

P = get_preset("fig4").probs
T = get_preset("fig4").traffic
ALWAYS = AccessPolicy(p_t=1.0)


def test_config_validation():
    with pytest.raises(ValueError):
        sim.SimConfig(energy_model="lossy")
    with pytest.raises(ValueError):
        sim.SimConfig(dominance="both")
    with pytest.raises(ValueError):
        sim.SimConfig(num_slots=100, warmup_slots=100)
    with pytest.raises(ValueError):
        sim.SimConfig(seed=-1)
    assert sim.SimConfig(num_slots=1000).warmup == 100


def test_node_state_check():
    with pytest.raises(AssertionError):
        sim.NodeState(primary=-1).check(False)
    with pytest.raises(AssertionError):
        sim.NodeState(retransmission=True).check(False)
    sim.NodeState(retransmission=True).check(True)


def test_idle_network():
    rep = sim.run(sim.SimConfig(num_slots=100_000), SILENT, P, T)
    assert rep.throughput_p == 0.0
    assert rep.throughput_s == 0.0
    assert rep.mean_queue_p == 0.0
    assert rep.mean_queue_s == 0.0
    assert rep.empty_p == 1.0 and rep.empty_s == 1.0


def test_reproducible_bitwise():
    cfg = sim.SimConfig(num_slots=20_000, seed=42, feedback_enabled=True)
    pol = AccessPolicy(0.3, 0.6, 0.9, 0.2, 0.5)
    t = replace(T, lambda_p=0.3, lambda_s=0.05)
    a, b = sim.run(cfg, pol, P, t), sim.run(cfg, pol, P, t)
    assert a == b
    assert sim.run(replace(cfg, seed=43), pol, P, t) != a


def test_rates_stay_in_range():
    rep = sim.run(sim.SimConfig(num_slots=20_000), AccessPolicy(0.5, 0.5, 0.5, 0.5, 0.5), P,
                  replace(T, lambda_p=0.3, lambda_s=0.05))
    for v in (rep.mu_p, rep.mu_s, rep.mu_e, rep.throughput_p, rep.throughput_s):
        assert 0.0 <= v <= 1.0
    assert rep.mean_delay_p >= 1.0


@pytest.mark.slow
def test_dominant_secondary_matches_analytic_rates():
    t = replace(T, lambda_p=0.3, lambda_s=0.1)
    rep = sim.run(sim.SimConfig(num_slots=10**6, dominance="saturate-secondary"), ALWAYS, P, t)
    assert rep.mu_p == pytest.approx(0.46, rel=0.01)
    assert rep.mu_s == pytest.approx(s1_rates(ALWAYS, P, t).mu_s, rel=0.02)
    assert rep.mean_delay_p == pytest.approx(delay_s1(ALWAYS, P, t).d_p, rel=0.02)
    assert rep.mean_delay_p == pytest.approx(4.375, rel=0.02)
    # Little's law between queue length and per-packet sojourn
    assert rep.mean_queue_p / 0.3 == pytest.approx(rep.mean_delay_p, rel=0.02)
    # real packets only: secondary throughput is its arrival rate
    assert rep.throughput_s == pytest.approx(0.1, rel=0.02)


@pytest.mark.slow
def test_feedback_chain_occupancy():
    pol = AccessPolicy(0.3, 0.6, 0.9, 0.2, 0.5)
    t = replace(T, lambda_p=0.3)
    fc = feedback_chain(pol, P, t)
    rep = sim.run(sim.SimConfig(num_slots=300_000, seed=5, dominance="saturate-secondary", feedback_enabled=True),
                  pol, P, t)
    for name, exp, obs in zip(("empty", "first", "retx"), (fc.pi0, fc.sum_pi, fc.sum_eps), rep.primary_states):
        assert abs(obs - exp) <= 3 * rep.stderr[f"state_{name}"], name


@pytest.mark.slow
def test_exact_energy_at_least_md1():
    pol = AccessPolicy(0.3, 0.6, 0.9, 0.2, 0.5)
    t = replace(T, lambda_p=0.3)
    cfg = sim.SimConfig(num_slots=200_000, seed=9, dominance="saturate-secondary")
    md1 = sim.run(cfg, pol, P, t)
    exact = sim.run(replace(cfg, energy_model="exact"), pol, P, t)
    assert exact.mu_s >= md1.mu_s - 1.96 * (md1.stderr["mu_s"] ** 2 + exact.stderr["mu_s"] ** 2) ** 0.5


def test_short_runs_warn(caplog):
    with caplog.at_level(logging.WARNING, logger="ehcr.sim"):
        rep = sim.run(sim.SimConfig(num_slots=2_000), ALWAYS, P, replace(T, lambda_p=0.3, lambda_s=0.01))
    assert rep.warnings
    assert "half-width" in caplog.text


def test_boundary_of_silent_policy_is_zero():
    est = sim.estimate_boundary(sim.SimConfig(num_slots=20_000), P, replace(T, lambda_p=0.2), SILENT)
    assert est.rate == 0.0


def test_boundary_rejects_unknown_axis():
    with pytest.raises(ValueError):
        sim.estimate_boundary(sim.SimConfig(num_slots=1000), P, T, SILENT, axis="energy")


@pytest.mark.slow
def test_boundary_of_saturated_primary():
    est = sim.estimate_boundary(sim.SimConfig(num_slots=200_000, dominance="saturate-primary"), P,
                                replace(T, lambda_p=0.3), ALWAYS)
    assert est.rate == pytest.approx(0.04, abs=0.005)


@pytest.mark.slow
def test_feedback_boundary_not_below_plain():
    t = replace(T, lambda_p=0.2)
    cfg = sim.SimConfig(num_slots=200_000)
    plain = sim.estimate_boundary(cfg, P, t, solver.optimize_s1(P, T, 0.2).best_policy)
    fb = sim.estimate_boundary(replace(cfg, feedback_enabled=True), P, t, solver.optimize_sf1(P, T, 0.2).best_policy)
    assert fb.rate >= plain.rate
