"""
Estimating from a CSV file
==========================

The ``estimate`` command reads ``x, y`` pairs (or a raw signal with a
declared period), streams them in file order and writes the same report
files as a simulation, without the fields that need the true shift.
"""

# %%
import csv
import json
from pathlib import Path

import numpy as np

from rmshift import cli, model, sim

out = Path("demo_output/csv")
out.mkdir(parents=True, exist_ok=True)

# %%
# Two segments with different shifts, written as separate files.
for name, theta in (("before", -0.05), ("after", 0.12)):
    spec = model.experiment1(theta=theta)
    x, y = sim.generate_observations(spec, np.random.default_rng(7), 3000)
    with open(out / f"{name}.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y"])
        w.writerows(zip(x.tolist(), y.tolist()))

# %%
# Equivalent shell command:
#   rmshift estimate --input demo_output/csv/before.csv --output demo_output/csv/before_report --sigma2 1
estimates = {}
for name in ("before", "after"):
    code = cli.main(["estimate", "--input", str(out / f"{name}.csv"),
                     "--output", str(out / f"{name}_report"), "--sigma2", "1"])
    assert code == 0
    report = json.loads((out / f"{name}_report" / "report.json").read_text())
    estimates[name] = report["final_theta_hat"]
    print(name, report["final_theta_hat"], report["ci"])
print(f"delta_hat = {estimates['after'] - estimates['before']:.4f}")

# %%
# Raw-signal mode: one value per line, sample i sits at x = (i mod P)/P - 1/2.
# An ordered sweep is not an i.i.d. design, so the first periods pull the
# estimate around more than random sampling would (true shift here: 0.08).
signal = model.experiment1(theta=0.0).f(np.arange(2000) % 400 / 400 - 0.5 - 0.08)
(out / "signal.csv").write_text("".join(f"{v:.12g}\n" for v in signal))
cli.main(["estimate", "--input", str(out / "signal.csv"), "--output", str(out / "signal_report"),
          "--period", "400"])
