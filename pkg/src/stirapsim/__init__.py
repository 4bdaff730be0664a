"""Adiabatic-passage state transfer and W-state generation among transmons in a resonator."""

from .analysis import excitation_expectation, fidelity, populations, w_state
from .evolution import CollapseChannel, IntegrationError, TimeGrid, evolve_lindblad, evolve_schrodinger
from .hamiltonian import HamiltonianModel, dark_state, zero_excitation_state
from .pulses import GaussianTerm, PulseSchedule, builtin_schedule, eval_envelope, sample_schedule
from .statespace import BasisLabel, StateSpace, build_space

__version__ = "0.1.0"
