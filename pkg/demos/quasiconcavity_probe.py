"""Probe the S1 secondary rate for quasiconcavity at fixed sensing probability.

With sensing off the rate is a one-dimensional ratio and behaves well.  Once
p_s > 0 the sampled segments find small dips, which is why the solver maximises
each level set exactly instead of relying on local ascent.

Run: python demos/quasiconcavity_probe.py
"""

from dataclasses import replace

from ehcr import get_preset, solver
from ehcr.rates import AccessPolicy, s1_rates

preset = get_preset("fig4")
t = replace(preset.traffic, lambda_p=0.3)

for ps in (0.0, 0.5):
    def rate(x, ps=ps):
        return s1_rates(AccessPolicy(ps, x[0], x[2], x[1]), preset.probs, t).mu_s

    def stable(x, ps=ps):
        return s1_rates(AccessPolicy(ps, x[0], x[2], x[1]), preset.probs, t).stable

    r = solver.check_quasiconcavity(rate, [0] * 3, [1] * 3, feasible=stable)
    if r.passed:
        print(f"p_s={ps}: no violation in {r.checked} segments")
    else:
        x, y, z, vx, vy, vz = r.counterexample
        print(f"p_s={ps}: violation after {r.checked} segments")
        print(f"   V(x)={vx:.6f} V(y)={vy:.6f} but V(mid)={vz:.6f} (dip {min(vx, vy) - vz:.2e})")

print("exact solver at p_s=0.5:", solver.optimize_s1(preset.probs, preset.traffic, 0.3, ps_grid=[0.5]).best_value)
