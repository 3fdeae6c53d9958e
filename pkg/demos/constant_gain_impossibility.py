"""
Constant gains cannot stabilise the Hopf orbit
==============================================

The orbit has one real multiplier above 1.  Classical delayed feedback
with constant gains and small memory then needs the adjoint criterion to
be nonpositive; on this orbit it equals the mean of the two gains, and
every constant gain pair leaves an unstable multiplier.
"""
import numpy as np

from etdf import GainDesign, Gating, hopf_system, operator_spectrum
from etdf.floquet import constant_gain_criterion

system, orbit, lin = hopf_system(-0.25)

# %%
# The criterion for a few gain pairs.
for K in ([1.0, 1.0], [-0.5, 0.25], [2.0, -1.0]):
    print(K, "criterion", round(constant_gain_criterion(lin, orbit, np.array(K)), 6))

# %%
# Gains with a nonpositive sum pass the criterion, yet the spectra on a
# coarse grid (eps = 0.02) all keep a multiplier outside the unit circle.
worst = np.inf
for s in np.linspace(-2.0, 0.0, 5):
    for dgain in np.linspace(-2.0, 2.0, 5):
        K = np.array([s + dgain, s - dgain]) / 2
        design = GainDesign(K, 0.1, 0.02, gating=Gating.CONSTANT)
        m = operator_spectrum(lin, design, N=64).max_nontrivial_modulus()
        worst = min(worst, m)
print("smallest leading nontrivial modulus over the grid:", round(worst, 4))
