"""Slot-level simulation against the analytic service rates and delay.

Run: python demos/simulation_check.py [slots]
"""

import sys
from dataclasses import replace

from ehcr import SimConfig, get_preset, run
from ehcr.rates import AccessPolicy, delay_s1, feedback_chain, s1_rates, sf1_secondary_rate

slots = int(sys.argv[1]) if len(sys.argv) > 1 else 300_000
preset = get_preset("fig4")
probs = preset.probs
traffic = replace(preset.traffic, lambda_p=0.3, lambda_s=0.05)
policy = AccessPolicy(p_s=0.3, p_t=0.6, p_f=0.9, p_b=0.2, p_r=0.5)
cfg = SimConfig(num_slots=slots, seed=1, dominance="saturate-secondary")

print(f"== {slots} slots, secondary saturated with dummy packets")
an = s1_rates(policy, probs, traffic)
rep = run(cfg, policy, probs, traffic)
for label, a, s, key in (("mu_p", an.mu_p, rep.mu_p, "mu_p"), ("mu_s", an.mu_s, rep.mu_s, "mu_s")):
    print(f"   {label}: analytic {a:.5f}  sim {s:.5f} +- {rep.ci[key]:.5f}")
print(f"   primary delay: analytic {delay_s1(policy, probs, traffic).d_p:.4f}  sim {rep.mean_delay_p:.4f}")

print("== with one-slot feedback and retransmission")
fc = feedback_chain(policy, probs, traffic)
rep = run(replace(cfg, feedback_enabled=True), policy, probs, traffic)
print(f"   mu_s: analytic {sf1_secondary_rate(policy, probs, traffic):.5f}  sim {rep.mu_s:.5f}")
for name, exp, obs in zip(("empty", "first try", "retransmit"), (fc.pi0, fc.sum_pi, fc.sum_eps),
                          rep.primary_states):
    print(f"   P(primary {name:>10}): analytic {exp:.4f}  sim {obs:.4f}")

print("== md1 battery approximation against exact energy accounting")
exact = run(replace(cfg, energy_model="exact"), policy, probs, traffic)
print(f"   mu_s md1 {run(cfg, policy, probs, traffic).mu_s:.5f}  exact {exact.mu_s:.5f}")
