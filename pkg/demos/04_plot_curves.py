"""
Plotting AoI against the threshold
==================================

Produces the AoI versus delta curves for a few periods, with simulated
points on top.  matplotlib is only needed for this script; it is not a
dependency of the package.  The same data can be had from the command line:

    adra sweep -n 20 -d 10 --var threshold --values 0:200:10 --with-sim --out d10.csv
"""

import sys

import numpy as np

from adra import ADAPTIVE, ProtocolConfig, SimConfig, optimize_delta, run_replicated

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    sys.exit("this demo needs matplotlib (pip install matplotlib)")

fig, ax = plt.subplots(figsize=(6, 4))
for d, color in ((10, "C0"), (30, "C1")):
    res = optimize_delta(ProtocolConfig(20, d, 0, ADAPTIVE), delta_max=240)
    deltas = np.array([c.delta for c in res.curve])
    ax.plot(deltas, [c.aoi for c in res.curve], color=color, label=f"D = {d}")
    # a few simulated points, 2 runs each to keep this quick
    marks = deltas[:: 40]
    sims = [run_replicated(SimConfig(ProtocolConfig(20, d, int(t), ADAPTIVE), runs=2, seed=5)).mean_aoi for t in marks]
    ax.plot(marks, sims, "o", color=color, mfc="none")

ax.set_xlabel("age threshold delta (slots)")
ax.set_ylabel("average AoI (slots)")
ax.set_title("N = 20, p = 1/u")
ax.legend()
fig.tight_layout()
fig.savefig("aoi_vs_threshold.png", dpi=150)
print("wrote aoi_vs_threshold.png")
