"""Fidelities, populations and conservation diagnostics over trajectories."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .evolution import Trajectory
from .statespace import BasisLabel, StateSpace

PSD_TOL = 1e-8


class NotPositiveError(ValueError):
    pass


def _as_density(state: np.ndarray) -> np.ndarray:
    state = np.asarray(state, dtype=complex)
    return np.outer(state, state.conj()) if state.ndim == 1 else state


def _psd_sqrt(rho: np.ndarray) -> np.ndarray:
    """Square root of a Hermitian PSD matrix.

    Eigenvalues in [-PSD_TOL, 0) are clamped, and those below the roundoff
    floor are zeroed so their square roots do not inject ~1e-8 noise.
    """
    w, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    if w.min() < -PSD_TOL:
        raise NotPositiveError(f"matrix is not positive semidefinite (min eigenvalue {w.min():.3e})")
    w = np.where(w > rho.shape[0] * np.finfo(float).eps * max(w.max(), 0.0), w, 0.0)
    return (v * np.sqrt(w)) @ v.conj().T


def uhlmann_fidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    """``(Tr sqrt(sqrt(sigma) rho sqrt(sigma)))**2`` for two density matrices.

    Evaluated as the squared trace norm of ``sqrt(rho) sqrt(sigma)``, which
    keeps roundoff on near-zero eigenvalues from entering through a square root.
    """
    sv = np.linalg.svd(_psd_sqrt(rho) @ _psd_sqrt(sigma), compute_uv=False)
    return float(np.clip(np.sum(sv) ** 2, 0.0, 1.0))


def fidelity(state: np.ndarray, target: np.ndarray) -> float:
    """Fidelity of ``state`` with ``target``.

    A vector target uses ``<t|rho|t>``; a density-matrix target uses the
    general Uhlmann formula. ``state`` may be a vector or a density matrix.
    """
    target = np.asarray(target, dtype=complex)
    state = np.asarray(state, dtype=complex)
    if target.ndim == 1:
        if state.ndim == 1:
            return float(abs(np.vdot(target, state)) ** 2)
        return float(np.real(target.conj() @ state @ target))
    return uhlmann_fidelity(_as_density(state), target)


def fidelity_series(states: np.ndarray, target: np.ndarray) -> np.ndarray:
    target = np.asarray(target, dtype=complex)
    states = np.asarray(states)
    if target.ndim == 1 and states.ndim == 2:
        return np.abs(states @ target.conj()) ** 2
    if target.ndim == 1 and states.ndim == 3:
        return np.real(np.einsum("i,tij,j->t", target.conj(), states, target))
    return np.array([fidelity(s, target) for s in states])


def populations(state: np.ndarray, space: StateSpace, labels: Sequence[BasisLabel]) -> np.ndarray:
    idx = [space.basis_index(lab) for lab in labels]
    state = np.asarray(state)
    if state.ndim == 1:
        return np.abs(state[idx]) ** 2
    return np.real(np.diagonal(state)[idx])


def excitation_expectation(state: np.ndarray, space: StateSpace) -> float:
    n = space.excitation_numbers
    state = np.asarray(state)
    if state.ndim == 1:
        return float(np.sum(n * np.abs(state) ** 2))
    return float(np.sum(n * np.real(np.diagonal(state))))


def w_state(space: StateSpace) -> np.ndarray:
    """``(1/sqrt N) sum_l |0>_c |0..1_l..0>``; the Bell-like state for N = 2."""
    n = space.n_qubits
    if n < 2:
        raise ValueError("a W state needs at least two qubits")
    psi = np.zeros(space.dim, dtype=complex)
    for lab in space.single_excitation_basis()[:n]:
        psi[space.basis_index(lab)] = 1.0
    return psi / np.sqrt(n)


def named_state(space: StateSpace, name: str) -> np.ndarray:
    """Resolve ``phiK`` (single-excitation basis, 1-based), ``w``, ``ground`` or a basis label."""
    key = name.strip().lower()
    if key == "w":
        return w_state(space)
    if key == "ground":
        return space.basis_vector(space.ground_label())
    if key.startswith("phi") and key[3:].isdigit():
        k = int(key[3:])
        basis = space.single_excitation_basis()
        if not 1 <= k <= len(basis):
            raise ValueError(f"{name} outside the single-excitation basis (1..{len(basis)})")
        return space.basis_vector(basis[k - 1])
    return space.basis_vector(BasisLabel.parse(name))


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    labels: list[BasisLabel]
    populations: np.ndarray  # (n_times, n_labels)
    fidelity: np.ndarray
    norm_or_trace: np.ndarray
    ne_expectation: np.ndarray

    def __post_init__(self):
        n = len(self.times)
        for series in (self.populations, self.fidelity, self.norm_or_trace, self.ne_expectation):
            if len(series) != n:
                raise ValueError("series lengths differ")
        if n > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    @property
    def columns(self) -> list[str]:
        return ["t_us"] + [str(l) for l in self.labels] + ["fidelity", "norm_or_trace", "ne_expectation"]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns)
            for i, t in enumerate(self.times):
                row = [f"{t:.6f}"]
                row += [f"{p:.10f}" for p in self.populations[i]]
                row += [f"{self.fidelity[i]:.10f}", f"{self.norm_or_trace[i]:.10f}", f"{self.ne_expectation[i]:.10f}"]
                w.writerow(row)

    def max_fidelity(self, after: float | None = None) -> tuple[float, float]:
        """Largest fidelity at or after ``after`` and the time it occurs."""
        mask = np.ones(len(self.times), bool) if after is None else self.times >= after - 1e-12
        if not mask.any():
            raise ValueError(f"no recorded times after {after}")
        i = np.flatnonzero(mask)[np.argmax(self.fidelity[mask])]
        return float(self.fidelity[i]), float(self.times[i])


def build_record(
    traj: Trajectory,
    space: StateSpace,
    target: np.ndarray,
    labels: Sequence[BasisLabel] | None = None,
) -> TrajectoryRecord:
    labels = list(labels) if labels is not None else space.single_excitation_basis()
    idx = [space.basis_index(l) for l in labels]
    n = space.excitation_numbers
    if traj.kind == "vector":
        probs = np.abs(traj.states) ** 2
        norm = probs.sum(axis=1)
    else:
        probs = np.real(np.diagonal(traj.states, axis1=1, axis2=2))
        norm = probs.sum(axis=1)
    return TrajectoryRecord(
        times=np.asarray(traj.times),
        labels=labels,
        populations=probs[:, idx],
        fidelity=fidelity_series(traj.states, target),
        norm_or_trace=norm,
        ne_expectation=probs @ n,
    )
