"""
Checking the asymptotics by simulation
======================================

Standardized errors of the shift estimate across replicates, compared with
the normal limit; the efficient step size lowers the variance. The last
cell tracks the normalized cumulative squared error along single runs.
"""

# %%
from dataclasses import replace

import numpy as np

from rmshift import model, rm, sim

base = sim.load_config("experiment1", n_per_curve=10_000, replicates=300)
out = sim.clt_diagnostic(base, with_curve=False)
print(f"target {out['target_variance']:.4f}  sample {out['sample_variance']:.4f}  "
      f"KS {out['ks_distance']:.3f}")

# %%
# Efficient step: gamma_n = 1 / (2 pi |f1| n).
eff = replace(base, rm=rm.RMConfig.for_model(base.model, "efficient_known_f1"))
out = sim.clt_diagnostic(eff, with_curve=False)
print(f"efficient: target {out['target_variance']:.4f}  sample {out['sample_variance']:.4f}")

# %%
# Pointwise curve statistics: ratio of the sample variance of
# sqrt(n h_n) (f_hat - f) to its asymptotic value.
curve_cfg = sim.load_config("experiment1", n_per_curve=5_000, replicates=200)
out = sim.clt_diagnostic(curve_cfg, with_curve=True)
print(f"median NW variance ratio over the grid: {out['nw_variance_ratio_median']:.2f}")

# %%
# Quadratic strong law: (1 / log n) sum_k (theta_k - theta)^2 against xi^2.
# Convergence is slow; early large steps leave a visible offset at 1e5.
cfg = sim.load_config("experiment1", n_per_curve=100_000, replicates=10)
xi2 = model.xi_squared(cfg.model)
for r in sim.run_replicates(cfg):
    idx, q = r.qsl_trace
    marks = [int(np.searchsorted(idx, m)) for m in (1_000, 10_000, 100_000)]
    print("  ".join(f"n={idx[i]:>6d}: {q[i] / xi2:.2f}" for i in marks))
