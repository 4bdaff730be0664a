"""Composite Hilbert space of N three-level transmons and one resonator mode.

Basis kets are ordered cavity first, then qubits 1..N, i.e. the flat index of
``|n>_c |x_1>...|x_N>`` is ``n * 3**N + sum_k level(x_k) * 3**(N-1-k)``.
Qubit levels are ordered ``(0, e, 1)`` so the ladder ``0 <-> e <-> 1`` is
index-adjacent.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence, Union

import numpy as np

LEVELS = ("0", "e", "1")
LEVEL_INDEX = {name: i for i, name in enumerate(LEVELS)}

DEFAULT_MAX_DIM = 3**10 * 4

CAVITY = "cavity"
Site = Union[int, str]


@dataclass(frozen=True)
class BasisLabel:
    """A product basis ket ``|photon>_c |q_1 ... q_N>``."""

    photon: int
    qubits: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(self.qubits))
        for q in self.qubits:
            if q not in LEVEL_INDEX:
                raise ValueError(f"unknown qubit level {q!r}; expected one of {LEVELS}")
        if self.photon < 0:
            raise ValueError(f"photon number must be non-negative, got {self.photon}")

    def __str__(self) -> str:
        return f"c:{self.photon}|q:{''.join(self.qubits)}"

    @classmethod
    def parse(cls, text: str) -> "BasisLabel":
        """Inverse of ``str(label)``, e.g. ``"c:0|q:100"``."""
        try:
            cav, qub = text.strip().split("|")
            ckey, photon = cav.split(":")
            qkey, levels = qub.split(":")
        except ValueError:
            raise ValueError(f"malformed basis label {text!r}") from None
        if ckey != "c" or qkey != "q":
            raise ValueError(f"malformed basis label {text!r}")
        return cls(int(photon), tuple(levels))

    @property
    def excitations(self) -> int:
        return self.photon + sum(1 for q in self.qubits if q != "0")


class StateSpace:
    """Tensor-product space of ``n_qubits`` qutrits and a truncated boson mode.

    Instances are immutable; operator caches are filled lazily and never
    mutated afterwards, so a space can be shared read-only between workers.
    """

    def __init__(self, n_qubits: int, photon_cutoff: int = 1, max_dim: int = DEFAULT_MAX_DIM):
        if n_qubits < 1:
            raise ValueError(f"n_qubits must be >= 1, got {n_qubits}")
        if photon_cutoff < 0:
            raise ValueError(f"photon_cutoff must be >= 0, got {photon_cutoff}")
        dim = (photon_cutoff + 1) * 3**n_qubits
        if dim > max_dim:
            raise ValueError(f"dimension {dim} exceeds cap {max_dim}")
        self._n_qubits = int(n_qubits)
        self._photon_cutoff = int(photon_cutoff)
        self._dim = dim

    @property
    def n_qubits(self) -> int:
        return self._n_qubits

    @property
    def photon_cutoff(self) -> int:
        return self._photon_cutoff

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def dims(self) -> tuple[int, ...]:
        return (self._photon_cutoff + 1,) + (3,) * self._n_qubits

    def __repr__(self) -> str:
        return f"StateSpace(n_qubits={self.n_qubits}, photon_cutoff={self.photon_cutoff})"

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, StateSpace)
            and other.n_qubits == self.n_qubits
            and other.photon_cutoff == self.photon_cutoff
        )

    def __hash__(self) -> int:
        return hash((self.n_qubits, self.photon_cutoff))

    # -- indexing ---------------------------------------------------------

    def basis_index(self, label: BasisLabel | str) -> int:
        if isinstance(label, str):
            label = BasisLabel.parse(label)
        if len(label.qubits) != self.n_qubits:
            raise ValueError(f"label {label} has {len(label.qubits)} qubits, space has {self.n_qubits}")
        if label.photon > self.photon_cutoff:
            raise ValueError(f"photon number {label.photon} exceeds cutoff {self.photon_cutoff}")
        index = label.photon
        for q in label.qubits:
            index = index * 3 + LEVEL_INDEX[q]
        return index

    def label_of(self, index: int) -> BasisLabel:
        if not 0 <= index < self.dim:
            raise IndexError(f"index {index} out of range for dim {self.dim}")
        levels = []
        for _ in range(self.n_qubits):
            index, r = divmod(index, 3)
            levels.append(LEVELS[r])
        return BasisLabel(index, tuple(reversed(levels)))

    def labels(self) -> list[BasisLabel]:
        return [self.label_of(i) for i in range(self.dim)]

    def basis_vector(self, label: BasisLabel | str) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[self.basis_index(label)] = 1.0
        return v

    def single_excitation_basis(self) -> list[BasisLabel]:
        """Labels with exactly one excitation.

        Ordered as qubit-|1> states (qubit 1 first), the one-photon state, then
        qubit-|e> states. For three qubits this is |phi_1> ... |phi_7>.
        """
        if self.photon_cutoff < 1:
            raise ValueError("single-excitation basis needs photon_cutoff >= 1")
        n = self.n_qubits

        def excited(site: int, level: str) -> BasisLabel:
            qs = ["0"] * n
            qs[site] = level
            return BasisLabel(0, tuple(qs))

        return (
            [excited(l, "1") for l in range(n)]
            + [BasisLabel(1, ("0",) * n)]
            + [excited(l, "e") for l in range(n)]
        )

    def ground_label(self) -> BasisLabel:
        return BasisLabel(0, ("0",) * self.n_qubits)

    # -- operators --------------------------------------------------------

    def embed_local(self, site: Site, local: np.ndarray) -> np.ndarray:
        """Tensor ``local`` at ``site`` with identities elsewhere.

        ``site`` is a 0-based qubit index or ``"cavity"``.
        """
        local = np.asarray(local, dtype=complex)
        if site == CAVITY:
            slot = 0
        elif isinstance(site, (int, np.integer)) and 0 <= site < self.n_qubits:
            slot = int(site) + 1
        else:
            raise ValueError(f"invalid site {site!r}")
        d = self.dims[slot]
        if local.shape != (d, d):
            raise ValueError(f"local operator at site {site!r} must be {d}x{d}, got {local.shape}")
        left = int(np.prod(self.dims[:slot]))
        right = int(np.prod(self.dims[slot + 1 :]))
        return np.kron(np.kron(np.eye(left), local), np.eye(right))

    def transition(self, qubit: int, to: str, frm: str) -> np.ndarray:
        """Embedded ``|to>_qubit <frm|``."""
        m = np.zeros((3, 3), dtype=complex)
        m[LEVEL_INDEX[to], LEVEL_INDEX[frm]] = 1.0
        return self.embed_local(qubit, m)

    @cached_property
    def destroy(self) -> np.ndarray:
        """Embedded cavity annihilation operator ``a``."""
        n = self.photon_cutoff + 1
        a = np.diag(np.sqrt(np.arange(1, n, dtype=float)), 1)
        return self.embed_local(CAVITY, a)

    @cached_property
    def excitation_numbers(self) -> np.ndarray:
        """Eigenvalue of N_e for every basis state (integer array)."""
        return np.array([self.label_of(i).excitations for i in range(self.dim)], dtype=int)

    @cached_property
    def excitation_operator(self) -> np.ndarray:
        """N_e = sum_l (|e><e| + |1><1|)_l + a^dag a, diagonal in this basis."""
        return np.diag(self.excitation_numbers.astype(complex))


def build_space(n_qubits: int, photon_cutoff: int = 1, max_dim: int = DEFAULT_MAX_DIM) -> StateSpace:
    return StateSpace(n_qubits, photon_cutoff, max_dim=max_dim)


def labels_from_strings(space: StateSpace, names: Sequence[str]) -> list[BasisLabel]:
    out = [BasisLabel.parse(n) for n in names]
    for lab in out:
        space.basis_index(lab)
    return out
