"""Resonant interaction Hamiltonian and its dark states.

    H(t) = sum_l [ g_l a |e>_l<0| + Omega_l(t) |1>_l<e| ] + h.c.      (hbar = 1)
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .pulses import TWO_PI, PulseSchedule
from .statespace import StateSpace


class DegenerateDarkStateError(ValueError):
    """All dark-state coefficients vanish; nothing to normalise."""


def couplings_from_mhz(values, n_qubits: int) -> np.ndarray:
    """Coupling constants g_l in rad/us from ``g/2pi`` in MHz (scalar or per-qubit)."""
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.size == 1:
        arr = np.full(n_qubits, arr[0])
    if arr.size != n_qubits:
        raise ValueError(f"expected {n_qubits} couplings, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("couplings must be finite")
    return TWO_PI * arr


class HamiltonianModel:
    """H(t) split into a static cavity-coupling part and per-qubit drive generators.

    Args:
        space: composite state space.
        couplings: g_l in rad/us, one per qubit.
        schedule: Rabi envelopes Omega_l(t), one per qubit.
    """

    def __init__(self, space: StateSpace, couplings: Sequence[float], schedule: PulseSchedule):
        couplings = np.asarray(couplings, dtype=float)
        if couplings.shape != (space.n_qubits,):
            raise ValueError(f"need {space.n_qubits} couplings, got shape {couplings.shape}")
        if schedule.n_qubits != space.n_qubits:
            raise ValueError(f"schedule drives {schedule.n_qubits} qubits, space has {space.n_qubits}")
        self.space = space
        self.couplings = couplings
        self.schedule = schedule

        a = space.destroy
        static = np.zeros((space.dim, space.dim), dtype=complex)
        drives = []
        for l in range(space.n_qubits):
            up = a @ space.transition(l, "e", "0")
            static += couplings[l] * (up + up.conj().T)
            d = space.transition(l, "1", "e")
            drives.append(d + d.conj().T)
        self.static = static
        self.drives = np.array(drives)
        self.indices = None

    @property
    def dim(self) -> int:
        return self.static.shape[0]

    def rabi(self, t: float) -> np.ndarray:
        return self.schedule.values(t)

    def assemble(self, t: float) -> np.ndarray:
        """Dense Hermitian H(t)."""
        return self.from_rabi(self.rabi(t))

    def from_rabi(self, rabi: np.ndarray) -> np.ndarray:
        return self.static + np.tensordot(rabi, self.drives, axes=1)

    def from_rabi_batch(self, rabi: np.ndarray) -> np.ndarray:
        """H for each row of ``rabi`` (shape ``(n_times, n_qubits)``)."""
        return self.static[None] + np.tensordot(rabi, self.drives, axes=1)

    def _copy(self) -> "HamiltonianModel":
        new = object.__new__(HamiltonianModel)
        new.__dict__.update(self.__dict__)
        return new

    def with_schedule(self, schedule: PulseSchedule) -> "HamiltonianModel":
        """Same space and couplings, new drives; reuses the cached operators."""
        if schedule.n_qubits != self.space.n_qubits:
            raise ValueError("schedule size does not match space")
        new = self._copy()
        new.schedule = schedule
        return new

    def restrict(self, indices) -> "HamiltonianModel":
        """Model acting only on the basis states ``indices`` of the full space.

        Exact when ``indices`` is a union of excitation sectors, since H
        conserves the excitation number.
        """
        if self.indices is not None:
            raise ValueError("model is already restricted")
        ix = np.asarray(sorted(indices), dtype=int)
        new = self._copy()
        new.static = self.static[np.ix_(ix, ix)]
        new.drives = self.drives[:, ix][:, :, ix]
        new.indices = ix
        return new

    def sector_indices(self, excitations) -> np.ndarray:
        n = self.space.excitation_numbers
        return np.flatnonzero(np.isin(n, list(excitations)))


def assemble(model: HamiltonianModel, t: float) -> np.ndarray:
    return model.assemble(t)


def dark_state(space: StateSpace, couplings: Sequence[float], rabi_values: Sequence[float]) -> np.ndarray:
    """Normalised zero-energy state in the single-excitation sector.

    Product form: the qubit-l branch ``|1>_l`` carries ``g_l * prod_{j != l} Omega_j``
    and the one-photon branch carries ``-prod_j Omega_j``. This stays finite
    when some Omega_l vanishes.
    """
    g = np.asarray(couplings, dtype=float)
    om = np.asarray(rabi_values, dtype=float)
    n = space.n_qubits
    if g.shape != (n,) or om.shape != (n,):
        raise ValueError("couplings and rabi_values need one entry per qubit")
    basis = space.single_excitation_basis()
    psi = np.zeros(space.dim, dtype=complex)
    for l in range(n):
        psi[space.basis_index(basis[l])] = g[l] * np.prod(np.delete(om, l))
    psi[space.basis_index(basis[n])] = -np.prod(om)
    norm = np.linalg.norm(psi)
    if norm == 0.0:
        raise DegenerateDarkStateError("all dark-state coefficients are zero")
    return psi / norm


def zero_excitation_state(space: StateSpace) -> np.ndarray:
    return space.basis_vector(space.ground_label())


def dark_state_residual(H: np.ndarray, psi: np.ndarray) -> float:
    """``||H psi|| / ||H||`` (spectral norm); 0 for the zero matrix."""
    hn = np.linalg.norm(H, 2)
    if hn == 0.0:
        return 0.0
    return float(np.linalg.norm(H @ psi) / hn)
