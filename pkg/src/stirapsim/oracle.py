"""Piecewise-constant exponential propagator used to cross-check the RK4 path.

Each step applies ``expm(-i H(t_mid) dt)`` (or the Liouvillian superoperator
exponential) with H frozen at the step midpoint. ``scipy.linalg.expm`` does
the scaling and squaring. Second-order accurate; only for verification.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.linalg import expm

from .evolution import CollapseChannel, TimeGrid
from .hamiltonian import HamiltonianModel

MAX_VECTOR_DIM = 100
MAX_DENSITY_DIM = 60


def liouvillian_superoperator(H: np.ndarray, jumps: Sequence[tuple[float, np.ndarray]]) -> np.ndarray:
    """Matrix acting on column-stacked ``vec(rho)``.

    Uses ``vec(A X B) = (B^T kron A) vec(X)``.
    """
    d = H.shape[0]
    eye = np.eye(d)
    L = -1j * (np.kron(eye, H) - np.kron(H.T, eye))
    for rate, A in jumps:
        AdA = A.conj().T @ A
        L += rate * (np.kron(A.conj(), A) - 0.5 * np.kron(eye, AdA) - 0.5 * np.kron(AdA.T, eye))
    return L


def propagator_oracle(
    model: HamiltonianModel,
    initial: np.ndarray,
    grid: TimeGrid,
    channels: Sequence[CollapseChannel] | None = None,
) -> np.ndarray:
    """Final state after ``grid`` with midpoint-frozen exponentials.

    ``initial`` is a state vector for closed evolution; a density matrix
    switches to the superoperator path (``channels`` may then be given).
    """
    dim = model.space.dim
    initial = np.asarray(initial, dtype=complex)
    dt = grid.dt
    mids = grid.step_times[:-1] + 0.5 * dt

    if initial.ndim == 1:
        if channels:
            raise ValueError("collapse channels need a density-matrix initial state")
        if dim > MAX_VECTOR_DIM:
            raise ValueError(f"oracle limited to dim <= {MAX_VECTOR_DIM}")
        psi = initial.copy()
        for t in mids:
            psi = expm(-1j * dt * model.assemble(t)) @ psi
        return psi

    if dim > MAX_DENSITY_DIM:
        raise ValueError(f"density oracle limited to dim <= {MAX_DENSITY_DIM}")
    jumps = [(ch.rate, ch.operator(model.space)) for ch in channels or () if ch.rate > 0]
    vec = initial.reshape(-1, order="F")
    for t in mids:
        vec = expm(dt * liouvillian_superoperator(model.assemble(t), jumps)) @ vec
    return vec.reshape(dim, dim, order="F")
