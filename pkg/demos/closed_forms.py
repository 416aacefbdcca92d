"""Closed-form optima with sensing off, checked against the general solver.

Run: python demos/closed_forms.py
"""

from dataclasses import replace

import numpy as np

from ehcr import get_preset, solver
from ehcr.rates import AccessPolicy, s1_rates

preset = get_preset("fig4")
probs, traffic = preset.probs, preset.traffic

print("1. no feedback: best transmit probability as lambda_p grows")
print(f"{'lambda_p':>9}{'p_t':>10}{'lambda_s':>12}{'solver':>12}")
for lam in (0.05, 0.15, 0.3, 0.45, 0.6):
    cf = solver.closed_form_s1_ps0(probs, traffic, lam)
    op = solver.optimize_s1(probs, traffic, lam, ps_grid=[0.0])
    print(f"{lam:9.2f}{cf.best_policy.p_t:10.4f}{cf.best_value:12.6f}{op.best_value:12.6f}")

LAM = 0.6
print(f"2. the interior root: scanning p_t by hand at lambda_p = {LAM}")
pts = np.linspace(0.0, 1.0, 2001)
vals = []
for pt in pts:
    r = s1_rates(AccessPolicy(p_t=pt), probs, replace(traffic, lambda_p=LAM))
    vals.append(r.mu_s if r.stable else -np.inf)
i = int(np.argmax(vals))
print(f"   grid argmax p_t={pts[i]:.4f}, value {vals[i]:.6f}")
print(f"   closed form  p_t={solver.closed_form_s1_ps0(probs, traffic, LAM).best_policy.p_t:.4f}")

print("3. with feedback: retransmission-slot access p_r trades against first-slot access")
for pr in (0.0, 0.5, 1.0):
    pt = solver.closed_form_sf_pt(probs, traffic, LAM, pr)
    print(f"   p_r={pr:.1f} -> p_t={pt:.4f}")
best = solver.closed_form_sf_ps0(probs, traffic, LAM)
print(f"   best over p_r: {best.best_policy}, lambda_s={best.best_value:.6f}")
