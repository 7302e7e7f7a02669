"""Dynamical localization of an interacting wavepacket in a weakly anharmonic trap.

Quantum side: split-step Fourier integration of the 1D Gross-Pitaevskii
equation. Classical side: the orbit-averaged resonance Hamiltonian, its
fixed points and separatrix, and the confinement fraction F(u, beta).
"""

__version__ = "0.1.0"

from .core import (
    ModelParams,
    PhasePoint,
    SpatialGrid,
    WaveState,
    from_action_angle,
    make_initial_state,
    scattering_length,
    to_action_angle,
)

__all__ = [
    "ModelParams",
    "PhasePoint",
    "SpatialGrid",
    "WaveState",
    "from_action_angle",
    "make_initial_state",
    "scattering_length",
    "to_action_angle",
    "__version__",
]
