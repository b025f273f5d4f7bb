"""
Three ways to get the average SEP
=================================

Five relays on the unit segment between source and destination, QPSK,
unit source power.  We give every relay the same power and compare the
closed form, adaptive quadrature and a semi-analytic Monte-Carlo run.
"""

import numpy as np

from dfrelay import (REFERENCE_POSITIONS, Geometry, NetworkConfig, TrialPlan, derive_stats,
                     estimate_sep, sep_closed_form, sep_quadrature)

net = NetworkConfig.from_geometry(Geometry(REFERENCE_POSITIONS), source_power=1.0)
stats = derive_stats(net)

# beta is the probability that a relay decodes; it falls off with distance
print("beta:", np.round(stats.relay_beta, 4))

p = np.full(net.n_relays, 0.2)
print("closed form :", sep_closed_form(stats, p).value)
print("quadrature  :", sep_quadrature(stats, p).value)

est = estimate_sep(net, p, TrialPlan(trials=200_000, seed=1))
print(f"monte carlo : {est.value} +/- {est.std_error:.2e}")
