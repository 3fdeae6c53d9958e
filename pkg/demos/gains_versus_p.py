"""
Impulse gains near the Hopf point
=================================

As p approaches 0 the orbit shrinks and the monodromy tends to the
identity, so the assignment becomes ill-posed and the gains grow.
"""
import numpy as np

from etdf import design_gains, hopf_system, monodromy_uncontrolled
from etdf.design import controllability

# %%
# Gains and controllability determinant along p.
for p in (-0.5, -0.25, -0.1, -0.05, -0.02, -0.01):
    _, _, lin = hopf_system(p)
    P0 = monodromy_uncontrolled(lin)
    K0 = design_gains(P0, lin.b(0.0), [0.5j, -0.5j])
    det = controllability(P0, lin.b(0.0))[1]
    print(f"p = {p:+.3f}: K0 = ({K0[0]:+.4f}, {K0[1]:+.4f})  |K0| = {np.linalg.norm(K0):7.3f}  det = {det:.4g}")

# %%
# At p = 0 there is no orbit left to stabilise.
try:
    hopf_system(0.0)
except Exception as exc:
    print(type(exc).__name__, "-", exc)
