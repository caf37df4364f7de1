"""
Checking the model by simulation
================================

The simulator plays the protocol slot by slot with exact knowledge of the
number of contenders.  Each replication has its own random stream, so the
same seed always reproduces the same numbers.
"""

from adra import ADAPTIVE, FixedPolicy, ProtocolConfig, SimConfig, analyze, run_replicated

print(f"{'policy':>10} {'delta':>6} {'analytic':>10} {'simulated':>10} {'stderr':>8} {'gap':>7}")
for policy in (ADAPTIVE, FixedPolicy(0.05)):
    for delta in (0, 20, 40, 80):
        cfg = ProtocolConfig(20, 10, delta, policy)
        analytic = analyze(cfg).avg_aoi
        # 10 runs of 10^6 slots, the first 100 frames of each discarded
        sim = run_replicated(SimConfig(cfg, runs=10, seed=1))
        gap = (analytic - sim.mean_aoi) / sim.mean_aoi
        print(f"{str(policy):>10} {delta:>6} {analytic:>10.4f} {sim.mean_aoi:>10.4f} {sim.std_err:>8.4f} {gap:>+7.2%}")

###############################################################################
# Where the model is loose
# ------------------------
# The analysis treats the other devices as independent draws from the
# stationary law.  With only a handful of devices and a long threshold the
# real network can lock into a collision-free rotation, which the model does
# not see.  Four devices, D = 2, delta = 8 is such a case: each device is
# served exactly once every four frames.

cfg = ProtocolConfig(4, 2, 8, ADAPTIVE)
sim = run_replicated(SimConfig(cfg, horizon_slots=200_000, runs=4, seed=3))
print(f"\nN=4, D=2, delta=8: analytic {analyze(cfg).avg_aoi:.3f}, simulated {sim.mean_aoi:.3f}")
