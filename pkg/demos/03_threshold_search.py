"""
Choosing the threshold
======================

The average AoI is evaluated on every integer threshold up to a bound, so
no shape assumption is needed.  Under a fixed transmit probability the
threshold and p are searched jointly.
"""

import numpy as np

from adra import ADAPTIVE, FixedPolicy, ProtocolConfig, compare, optimize_delta

res = optimize_delta(ProtocolConfig(20, 10, 0, ADAPTIVE), delta_max=200)
curve = np.array([c.aoi for c in res.curve])
print(f"best delta {res.best_delta}, AoI {res.best_aoi:.3f}")
# thresholds up to one frame never block anyone, hence the flat start
print("AoI at delta = 0, 10, 20, 40, 100, 200:", np.round(curve[[0, 10, 20, 40, 100, 200]], 3))

###############################################################################
# Gain over plain slotted ALOHA as the period grows
# -------------------------------------------------
# The gain shrinks with D: a longer frame already gives every device more
# chances to get through.

print(f"\n{'D':>3} {'class':>8} {'delta*':>7} {'p*':>5} {'AoI*':>8} {'ALOHA':>8} {'gain':>6}")
for d in (5, 10, 20):
    for policy in (FixedPolicy(0.1), ADAPTIVE):
        cmp = compare(ProtocolConfig(20, d, 0, policy))
        p = "-" if cmp.adra.best_p is None else f"{cmp.adra.best_p:.2f}"
        label = "adaptive" if policy is ADAPTIVE else "fixed"
        print(
            f"{d:>3} {label:>8} {cmp.adra.best_delta:>7} {p:>5} {cmp.adra.best_aoi:>8.3f}"
            f" {cmp.aira.aoi:>8.3f} {cmp.improvement:>6.1%}"
        )
