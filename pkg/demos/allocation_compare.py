"""
Exact versus approximate power allocation
=========================================

Sweep the total relay power and compare the barrier-method optimum, the
closed-form approximation and equal power.  Per-relay caps are set to the
full budget so only the sum constraint binds.
"""

import numpy as np

from dfrelay import (REFERENCE_POSITIONS, Constraints, Geometry, NetworkConfig, allocate_approx,
                     allocate_equal, allocate_exact, derive_stats)

stats = derive_stats(NetworkConfig.from_geometry(Geometry(REFERENCE_POSITIONS)))
n = stats.n_relays

print(f"{'P_R dB':>7} {'exact':>11} {'approx':>11} {'equal':>11}  approx/exact")
for db in np.arange(0, 36, 5):
    p_R = 10 ** (db / 10)
    cons = Constraints.uniform(p_R, n, cap=p_R)
    ex = allocate_exact(stats, cons)
    ap = allocate_approx(stats, cons)
    eq = allocate_equal(stats, cons)
    print(f"{db:7.0f} {ex.sep.value:11.3e} {ap.sep.value:11.3e} {eq.sep.value:11.3e}"
          f"  {ap.sep.value / ex.sep.value:.4f}")

# where does the power go?  the relay nearest the destination rarely decodes, so it gets little
p_R = 10 ** 2.0
ex = allocate_exact(stats, Constraints.uniform(p_R, n))
print("\nshares at 20 dB:", np.round(ex.p / p_R, 3))
print("KKT residual   :", ex.kkt_residual, " duality gap:", ex.duality_gap)
