"""
Detecting a change of shift across curves
=========================================

Thirty curves of 200 points each. The shift is -0.2 for the first ten and
0.1 afterwards. The estimator runs across curves inside a regime and
restarts at the break; the difference of regime means estimates the jump.
"""

# %%
import numpy as np

from rmshift import sim

config = sim.load_config("experiment2")
report = sim.simulate(config)
first, last = report.diagnostics["regime_means"]
print(f"regime means: {first:.4f}, {last:.4f}   delta_hat = {report.delta_hat:.4f}")

# %%
# Per-curve estimates: each is the state after the curve's last point.
for c, est in enumerate(report.diagnostics["per_curve_estimates"]):
    print(f"curve {c:2d}  theta_hat = {est:+.4f}")

# %%
# Over 100 replicates, how often is the jump recovered within 0.05?
config = sim.load_config("experiment2", replicates=100)
deltas = np.array([r.delta_hat for r in sim.run_replicates(config)])
print(f"mean {deltas.mean():.4f}, within 0.05 of 0.3: {np.mean(np.abs(deltas - 0.3) <= 0.05):.0%}")

# %%
# Without the restart the second regime inherits the first regime's history.
carried = sim.simulate(sim.load_config("experiment2", cumulative="true"), with_curve=False)
print(f"cumulative delta_hat = {carried.delta_hat:.4f}")
