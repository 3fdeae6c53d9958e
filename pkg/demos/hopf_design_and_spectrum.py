"""
Gain design and Floquet spectrum on the Hopf orbit
==================================================

The subcritical Hopf normal form at p = -0.25 has an unstable orbit of
radius 0.5 and period 2 pi.  We place the multipliers of the impulsive
monodromy at +-0.5i, then look at the full spectrum of the delayed loop.
"""
import numpy as np

from etdf import GainDesign, Gating, design_gains, hopf_system, monodromy_uncontrolled, spectrum_char
from etdf.design import controllability
from etdf.floquet import asymptotic_spectrum

# %%
# Orbit, linearisation and the uncontrolled monodromy.  The unstable
# multiplier is exp(-4 pi p) = e^pi.
system, orbit, lin = hopf_system(-0.25)
P0 = monodromy_uncontrolled(lin)
b0 = lin.b(0.0)
print("P0 eigenvalues:", np.round(np.linalg.eigvals(P0).real, 6))
print("controllability det:", round(controllability(P0, b0)[1], 4))

# %%
# Exponential spectrum assignment gives the impulse gains.
K0 = design_gains(P0, b0, [0.5j, -0.5j])
print("K0 =", K0)

# %%
# Closed loop with memory eps = 0.04 and a short impulse.  The characteristic
# function finds the assigned pair, the trivial multiplier and the roots
# brought in by the delay.
design = GainDesign(K0, orbit.T / 500, 0.04, targets=(0.5j, -0.5j), gating=Gating.TIME)
sp = spectrum_char(lin, design)
for m in sp.multipliers:
    print(f"  {m.cls.value:13s} {m.value.real:+.5f} {m.value.imag:+.5f}i   |z| = {abs(m.value):.5f}")
print("stable:", sp.stable(), " max nontrivial modulus:", round(sp.max_nontrivial_modulus(), 5))

# %%
# For small eps the delay roots crowd onto the circle of radius eps/2 around
# 1 - eps/2.  The asymptotic family lies on it exactly.
asy = asymptotic_spectrum(lin, design).of_class("delay_induced")
print("distance of asymptotic roots from the circle:",
      np.max(np.abs(np.abs(asy - (1 - 0.02)) - 0.02)))
