"""Extended time-delayed feedback (ETDF) with impulse gains for periodic orbits.

Design gains by exponential spectrum assignment, compute the Floquet spectrum
of the delayed closed loop and simulate the nonlinear system.
"""
from .design import (
    GainDesign,
    Gating,
    ImpulseProfile,
    assign_spectrum_exp,
    controllability,
    design_gains,
    section_time,
    state_gate,
)
from .errors import ETDFError
from .floquet import (
    FloquetSpectrum,
    asymptotic_spectrum,
    char_fn,
    classical_spectrum,
    kappa_roots,
    operator_spectrum,
    spectrum_char,
)
from .models import (
    ControlledSystem,
    PeriodicOrbit,
    expression_system,
    find_orbit_shooting,
    hopf_system,
    linearize_along_orbit,
    pendulum_system,
)
from .ode import Linearization, integrate, monodromy_parametrized, monodromy_uncontrolled
from .simulate import HistoryState, estimate_decay, phase_align, simulate

__version__ = "0.1.0"

__all__ = [
    "ControlledSystem", "ETDFError", "FloquetSpectrum", "GainDesign", "Gating", "HistoryState",
    "ImpulseProfile", "Linearization", "PeriodicOrbit", "assign_spectrum_exp", "asymptotic_spectrum",
    "char_fn", "classical_spectrum", "controllability", "design_gains", "estimate_decay",
    "expression_system", "find_orbit_shooting", "hopf_system", "integrate", "kappa_roots",
    "linearize_along_orbit", "monodromy_parametrized", "monodromy_uncontrolled", "operator_spectrum",
    "pendulum_system", "phase_align", "section_time", "simulate", "spectrum_char", "state_gate",
]
