"""
Plotting a sweep
================

Run a preset through the experiment layer and plot SEP against total power
in dB.  The CSV holds linear values; the dB axis is applied here.
"""

import io

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from dfrelay.experiment import format_csv, parse_csv, preset_spec, run_sweep

spec = preset_spec("fig2")
spec.validation = None          # skip Monte Carlo to keep this quick
rows = parse_csv(format_csv(run_sweep(spec), spec.network.n_relays))

fig, ax = plt.subplots()
for label in ("1;3;5@pmax=1pR", "1;3;5@pmax=0.5pR"):
    for solver, style in (("exact", "-o"), ("approx", "--x"), ("equal", ":s")):
        sel = [r for r in rows if r["relay_set"] == label and r["solver"] == solver]
        x = 10 * np.log10([r["sweep_value"] for r in sel])
        ax.semilogy(x, [r["sep_closed_form"] for r in sel], style, label=f"{solver} {label}")
ax.set_xlabel("total relay power (dB)")
ax.set_ylabel("SEP")
ax.legend(fontsize=7)
fig.savefig("sweep.png", dpi=120)
print("wrote sweep.png")
