"""
A pendulum orbit the method cannot stabilise
============================================

A damped pendulum with a vertically oscillating pivot, written as an
autonomous system with a phase oscillator.  The torque input cannot reach
the oscillator, so only two multipliers can be placed.  The loop then keeps
an odd number of real multipliers above 1 and stays unstable.
"""
import numpy as np

from etdf import config, pipeline
from etdf.design import controllable_subspace, is_controllable

cfg = config.load("pendulum")
st = pipeline.setup(cfg)

# %%
# Orbit and controllability of the monodromy pair.
print("period", round(st.orbit.T, 6), "= two forcing periods:", round(2 * 2 * np.pi / 1.7, 6))
print("multipliers of P0:", np.round(np.linalg.eigvals(st.P0), 5))
print("controllable:", is_controllable(st.P0, st.b0),
      " dimension of controllable subspace:", controllable_subspace(st.P0, st.b0).shape[1])

# %%
# Partial assignment places 0.3 and 0.2 on the controllable block.
print("K0 =", np.round(st.design.K0, 5))
print("achieved:", np.round(st.report["achieved"], 5))

# %%
# The delayed loop still has a real multiplier above 1.
spectra, verdict = pipeline.run_spectrum(st, methods=["char_fn"])
print("stable:", verdict["stable"], " max nontrivial modulus:", round(verdict["max_nontrivial_modulus"], 4))
