"""
Phase drift with a detuned gate period
======================================

The controller assumes the period 2 pi, but the plant rotates slightly
faster.  With the time-gated impulse the trajectory slips in phase against
the gate every period, and the control never switches off.
"""
import numpy as np

from etdf import GainDesign, Gating, HistoryState, design_gains, expression_system, hopf_system
from etdf import monodromy_uncontrolled, simulate

system, orbit, lin = hopf_system(-0.25)
K0 = design_gains(monodromy_uncontrolled(lin), lin.b(0.0), [0.5j, -0.5j])
design = GainDesign(K0, orbit.T / 500, 0.04, gating=Gating.TIME)

# %%
# Same normal form with the rotation sped up by 0.2 %.
w = 1.002
plant = expression_system([f"p*x1 - {w}*x2 + x1*(x1^2 + x2^2) + u",
                           f"{w}*x1 + p*x2 + x2*(x1^2 + x2^2) + u"], {"p": -0.25})

# %%
# Nominal plant against the detuned one, both from the orbit itself.
init = HistoryState.from_orbit(orbit)
for name, sys_ in (("nominal", system), ("detuned", plant)):
    d = simulate(sys_, orbit, design, init, 15).diagnostics
    print(f"{name}: phase shift per period {np.round(np.diff(np.unwrap(d.phase, period=orbit.T))[-5:], 5)}")
    print(f"{name}: max|u| last period {d.max_u[-1]:.2e}")
