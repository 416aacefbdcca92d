"""Sweep the primary arrival rate and compare the secondary stable-throughput curves.

Run: python demos/region_sweep.py [preset]   (writes region_<preset>.svg to the working directory)
"""

import sys
from pathlib import Path

import numpy as np

from ehcr import get_preset, solver
from ehcr.cli import write_svg

name = sys.argv[1] if len(sys.argv) > 1 else "fig4"
preset = get_preset(name)
probs, traffic = preset.probs, preset.traffic
grid = np.round(np.arange(0.0, probs.p_bar_p + 1e-9, 0.05), 12)
print(f"== preset {name}: P_p={probs.p_bar_p}, lambda_e={traffic.lambda_e}")

curves = [
    solver.stability_region(probs, traffic, grid, feedback=False),
    solver.stability_region(probs, traffic, grid, feedback=True),
    solver.s2_region(probs, traffic, grid),
    solver.conventional_region(probs, traffic, grid),
]
by_label = {c.label: dict(zip(c.lambda_p, c.lambda_s_max)) for c in curves}

print(f"{'lambda_p':>9}" + "".join(f"{c.label:>14}" for c in curves) + "  winner(no fb)")
winners = dict(zip(curves[0].lambda_p, curves[0].winner))
for lam in grid:
    cells = "".join(f"{by_label[c.label].get(lam, float('nan')):14.5f}" for c in curves)
    print(f"{lam:9.2f}{cells}  {winners.get(lam, '-')}")

# feedback can only help: the no-feedback policy is a special case of it
fb, plain = curves[1], curves[0]
gain = np.array(fb.lambda_s_max[: len(plain)]) - np.array(plain.lambda_s_max)
print(f"largest gain from feedback: {gain.max():.4f} at lambda_p={plain.lambda_p[int(gain.argmax())]:.2f}")

out = Path(f"region_{name}.svg")
write_svg(out, curves, name)
print("wrote", out)
