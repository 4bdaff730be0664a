"""Fixed-step RK4 propagation of state vectors and density matrices.

Open-system dynamics follow

    drho/dt = -i[H, rho] + (kappa/2) L[a] + 1/2 sum_l { gamma_1e L[|e><1|] + gamma_e0 L[|0><e|]
                                                        + Gamma_1 L[|1><1|] + Gamma_e L[|e><e|] }

with ``L[A] = 2 A rho A^dag - A^dag A rho - rho A^dag A``. Every channel therefore
enters as ``rate * (A rho A^dag - {A^dag A, rho}/2)``: a configured rate is the
population decay rate of the level it empties.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

from .hamiltonian import HamiltonianModel
from .pulses import sample_schedule
from .statespace import CAVITY, StateSpace

log = logging.getLogger(__name__)

NORM_TOL = 1e-6
POSITIVITY_TOL = 1e-5
_CHUNK_ELEMENTS = 2_000_000

CHANNEL_KINDS = ("cavity_decay", "relax_1e", "relax_e0", "dephase_1", "dephase_e")
_QUBIT_OPS = {
    "relax_1e": ("e", "1"),
    "relax_e0": ("0", "e"),
    "dephase_1": ("1", "1"),
    "dephase_e": ("e", "e"),
}


class IntegrationError(RuntimeError):
    """Norm/trace drift or positivity loss beyond tolerance; refine the grid."""


@dataclass(frozen=True)
class TimeGrid:
    t_start: float
    t_end: float
    n_steps: int
    record_stride: int = 1

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise ValueError(f"t_end ({self.t_end}) must exceed t_start ({self.t_start})")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")

    @classmethod
    def from_dt(cls, t_start: float, t_end: float, dt: float, record_stride: int = 1) -> "TimeGrid":
        """Grid whose step is ``dt`` rounded so it divides the interval."""
        if dt <= 0:
            raise ValueError("dt must be positive")
        n = max(1, int(round((t_end - t_start) / dt)))
        return cls(float(t_start), float(t_end), n, int(record_stride))

    @property
    def dt(self) -> float:
        return (self.t_end - self.t_start) / self.n_steps

    @property
    def step_times(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(self.n_steps + 1)

    @property
    def record_steps(self) -> np.ndarray:
        steps = np.arange(0, self.n_steps + 1, self.record_stride)
        if steps[-1] != self.n_steps:
            steps = np.append(steps, self.n_steps)
        return steps


@dataclass(frozen=True)
class CollapseChannel:
    """One dissipator term; ``site`` is a 0-based qubit index, or ``"cavity"``."""

    kind: str
    rate: float
    site: int | str = CAVITY

    def __post_init__(self):
        if self.kind not in CHANNEL_KINDS:
            raise ValueError(f"unknown channel kind {self.kind!r}")
        if not np.isfinite(self.rate) or self.rate < 0:
            raise ValueError(f"rate must be >= 0, got {self.rate}")
        if self.kind == "cavity_decay" and self.site != CAVITY:
            raise ValueError("cavity_decay acts on the cavity")
        if self.kind != "cavity_decay" and not isinstance(self.site, (int, np.integer)):
            raise ValueError(f"{self.kind} needs a qubit index")

    def operator(self, space: StateSpace) -> np.ndarray:
        if self.kind == "cavity_decay":
            return space.destroy
        to, frm = _QUBIT_OPS[self.kind]
        return space.transition(int(self.site), to, frm)


def discussion_preset(kappa: float, gamma: float, n_qubits: int) -> list[CollapseChannel]:
    """Cavity decay ``kappa`` plus, on every qubit, gamma_1e = gamma, gamma_e0 = gamma/2,
    Gamma_1 = gamma/2 and Gamma_e = gamma/4 (all rad/us)."""
    channels = [CollapseChannel("cavity_decay", kappa)]
    for l in range(n_qubits):
        channels += [
            CollapseChannel("relax_1e", gamma, l),
            CollapseChannel("relax_e0", gamma / 2, l),
            CollapseChannel("dephase_1", gamma / 2, l),
            CollapseChannel("dephase_e", gamma / 4, l),
        ]
    return channels


@dataclass
class Trajectory:
    """Recorded snapshots of one integration run."""

    times: np.ndarray
    states: np.ndarray
    kind: str  # "vector" or "density"
    drift: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def __len__(self) -> int:
        return len(self.times)


def _rabi_tables(model: HamiltonianModel, grid: TimeGrid):
    t = grid.step_times
    full = sample_schedule(model.schedule, t)
    half = sample_schedule(model.schedule, t[:-1] + 0.5 * grid.dt)
    return full.T, half.T


def _norm_deviation(kind: str, state: np.ndarray) -> float:
    if kind == "vector":
        return abs(np.vdot(state, state).real - 1.0)
    return abs(np.trace(state).real - 1.0)


def _check_drift(kind: str, drift: float, tol: float):
    if drift > tol:
        what = "norm" if kind == "vector" else "trace"
        raise IntegrationError(f"{what} drift {drift:.3e} exceeds {tol:.1e}; use a finer time step")


@njit(cache=True)
def _matvec(A, x, out):
    n = x.size
    for i in range(n):
        acc = 0j
        for j in range(n):
            acc += A[i, j] * x[j]
        out[i] = acc


@njit(cache=True)
def _rk4_vector_chunk(A_full, A_half, psi, dt, flags, out, pos):
    n = psi.size
    k1 = np.empty(n, dtype=np.complex128)
    k2 = np.empty(n, dtype=np.complex128)
    k3 = np.empty(n, dtype=np.complex128)
    k4 = np.empty(n, dtype=np.complex128)
    tmp = np.empty(n, dtype=np.complex128)
    psi = psi.copy()
    for j in range(A_half.shape[0]):
        _matvec(A_full[j], psi, k1)
        for i in range(n):
            tmp[i] = psi[i] + 0.5 * dt * k1[i]
        _matvec(A_half[j], tmp, k2)
        for i in range(n):
            tmp[i] = psi[i] + 0.5 * dt * k2[i]
        _matvec(A_half[j], tmp, k3)
        for i in range(n):
            tmp[i] = psi[i] + dt * k3[i]
        _matvec(A_full[j + 1], tmp, k4)
        for i in range(n):
            psi[i] = psi[i] + (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        if flags[j]:
            out[pos] = psi
            pos += 1
    return psi, pos


def evolve_schrodinger(
    model: HamiltonianModel,
    psi0: np.ndarray,
    grid: TimeGrid,
    *,
    tol: float = NORM_TOL,
) -> Trajectory:
    """Integrate ``dpsi/dt = -i H(t) psi`` with classical RK4.

    The state is never renormalised; the largest recorded deviation of the
    norm from one is returned as ``drift`` and must stay below ``tol``.
    """
    psi = np.array(psi0, dtype=complex)
    if psi.shape != (model.dim,):
        raise ValueError(f"psi0 must have shape ({model.dim},)")
    if abs(np.linalg.norm(psi) - 1.0) > 1e-8:
        raise ValueError("psi0 must be normalised")

    full, half = _rabi_tables(model, grid)
    dt = grid.dt
    flags = np.zeros(grid.n_steps + 1, dtype=np.bool_)
    flags[grid.record_steps] = True
    out = np.empty((len(grid.record_steps), model.dim), dtype=complex)
    out[0] = psi
    pos = 1
    chunk = max(1, _CHUNK_ELEMENTS // model.dim**2)
    for start in range(0, grid.n_steps, chunk):
        stop = min(start + chunk, grid.n_steps)
        # -i H at step starts (plus the final end point) and at midpoints
        A_full = -1j * model.from_rabi_batch(full[start : stop + 1])
        A_half = -1j * model.from_rabi_batch(half[start:stop])
        psi, pos = _rk4_vector_chunk(A_full, A_half, psi, dt, flags[start + 1 : stop + 1], out, pos)

    states = out
    drift = max(_norm_deviation("vector", s) for s in states)
    _check_drift("vector", drift, tol)
    return Trajectory(grid.step_times[grid.record_steps], states, "vector", drift)


class _Liouvillian:
    def __init__(self, model: HamiltonianModel, channels: Sequence[CollapseChannel]):
        space = model.space
        self.model = model
        self.jumps = []
        decay = np.zeros((space.dim, space.dim), dtype=complex)
        for ch in channels:
            if ch.rate == 0.0:
                continue
            A = ch.operator(space)
            self.jumps.append((ch.rate, A, A.conj().T))
            decay += ch.rate * (A.conj().T @ A)
        # -i H_eff with H_eff = H - (i/2) sum rate A^dag A
        self.nonherm = -0.5 * decay

    def generator(self, rabi: np.ndarray) -> np.ndarray:
        return -1j * self.model.from_rabi(rabi) + self.nonherm

    def __call__(self, G: np.ndarray, rho: np.ndarray) -> np.ndarray:
        M = G @ rho
        out = M + M.conj().T
        for rate, A, Ad in self.jumps:
            out += rate * (A @ rho @ Ad)
        return out


def evolve_lindblad(
    model: HamiltonianModel,
    rho0: np.ndarray,
    channels: Sequence[CollapseChannel],
    grid: TimeGrid,
    *,
    tol: float = NORM_TOL,
    positivity_tol: float = POSITIVITY_TOL,
) -> Trajectory:
    """Integrate the master equation with RK4 on the full density matrix."""
    if model.indices is not None:
        raise ValueError("open-system evolution needs the full-space model")
    rho = np.array(rho0, dtype=complex)
    dim = model.space.dim
    if rho.shape != (dim, dim):
        raise ValueError(f"rho0 must have shape ({dim}, {dim})")
    if abs(np.trace(rho).real - 1.0) > 1e-8 or np.abs(rho - rho.conj().T).max() > 1e-10:
        raise ValueError("rho0 must be Hermitian with unit trace")
    if np.linalg.eigvalsh(rho).min() < -1e-8:
        raise ValueError("rho0 must be positive semidefinite")

    rhs = _Liouvillian(model, channels)
    full, half = _rabi_tables(model, grid)
    dt = grid.dt
    record = set(grid.record_steps.tolist())
    states = [rho.copy()]
    G_now = rhs.generator(full[0])
    for k in range(grid.n_steps):
        G_mid = rhs.generator(half[k])
        G_next = rhs.generator(full[k + 1])
        k1 = rhs(G_now, rho)
        k2 = rhs(G_mid, rho + 0.5 * dt * k1)
        k3 = rhs(G_mid, rho + 0.5 * dt * k2)
        k4 = rhs(G_next, rho + dt * k3)
        rho = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        G_now = G_next
        if k + 1 in record:
            states.append(rho.copy())

    states = np.array(states)
    drift = max(_norm_deviation("density", s) for s in states)
    _check_drift("density", drift, tol)
    min_eig = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min())
    if min_eig < -positivity_tol:
        raise IntegrationError(f"density matrix lost positivity (min eigenvalue {min_eig:.3e})")
    herm = float(max(np.abs(s - s.conj().T).max() for s in states))
    return Trajectory(
        grid.step_times[grid.record_steps],
        states,
        "density",
        drift,
        {"min_eigenvalue": min_eig, "hermiticity": herm},
    )
