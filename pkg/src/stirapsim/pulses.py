"""Gaussian-sum Rabi envelopes.

Frequencies are stored as angular frequencies in rad/us and times in us.
Config files carry amplitudes as ``value/2pi`` in MHz and widths in ns; the
``from_config``/``to_config`` pair is the only place where units change.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Sequence

import numpy as np
import yaml

TWO_PI = 2.0 * np.pi

BUILTIN_SCHEDULES = ("qst-fig2", "wstate-fig4")


@dataclass(frozen=True)
class GaussianTerm:
    """``amplitude * exp(-(t - delay)**2 / width**2)``; amplitude in rad/us, times in us."""

    amplitude: float
    delay: float
    width: float

    def __post_init__(self):
        if not np.isfinite(self.amplitude) or self.amplitude < 0:
            raise ValueError(f"amplitude must be finite and >= 0, got {self.amplitude}")
        if not np.isfinite(self.width) or self.width <= 0:
            raise ValueError(f"width must be > 0, got {self.width}")
        if not np.isfinite(self.delay):
            raise ValueError(f"delay must be finite, got {self.delay}")

    @classmethod
    def from_config(cls, amp_mhz_over_2pi: float, delay_us: float, width_ns: float) -> "GaussianTerm":
        return cls(TWO_PI * float(amp_mhz_over_2pi), float(delay_us), float(width_ns) / 1000.0)

    def __call__(self, t):
        return self.amplitude * np.exp(-((t - self.delay) ** 2) / self.width**2)


def eval_envelope(terms: Iterable[GaussianTerm], t):
    """Sum of Gaussian terms at ``t`` (scalar or array)."""
    total = np.zeros_like(np.asarray(t, dtype=float))
    for term in terms:
        total = total + term(t)
    return total if total.ndim else float(total)


@dataclass(frozen=True)
class PulseSchedule:
    """One Gaussian-sum envelope per qubit.

    ``source`` optionally keeps the config-unit numbers each term was built
    from, so a schedule written back out reloads to bitwise-identical terms.
    """

    envelopes: tuple[tuple[GaussianTerm, ...], ...]
    source: tuple[tuple[tuple[float, float, float], ...], ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "envelopes", tuple(tuple(e) for e in self.envelopes))

    @property
    def n_qubits(self) -> int:
        return len(self.envelopes)

    def values(self, t: float) -> np.ndarray:
        """Rabi frequency of every qubit at a single time."""
        return np.array([eval_envelope(terms, t) for terms in self.envelopes], dtype=float)

    @classmethod
    def zeros(cls, n_qubits: int) -> "PulseSchedule":
        return cls(tuple(() for _ in range(n_qubits)))

    @classmethod
    def from_config(cls, terms: Sequence[Sequence[dict]]) -> "PulseSchedule":
        """Build from ``[[{amp_mhz_over_2pi, delay_us, width_ns}, ...], ...]``."""
        envelopes = []
        source = []
        for per_qubit in terms:
            raw = tuple(
                (float(d["amp_mhz_over_2pi"]), float(d["delay_us"]), float(d["width_ns"]))
                for d in per_qubit
            )
            source.append(raw)
            envelopes.append(tuple(GaussianTerm.from_config(*r) for r in raw))
        return cls(tuple(envelopes), tuple(source))

    def to_config(self) -> list[list[dict]]:
        if self.source is not None:
            raw = self.source
        else:
            raw = tuple(
                tuple((t.amplitude / TWO_PI, t.delay, t.width * 1000.0) for t in env)
                for env in self.envelopes
            )
        return [
            [{"amp_mhz_over_2pi": a, "delay_us": d, "width_ns": w} for a, d, w in env]
            for env in raw
        ]


def sample_schedule(schedule: PulseSchedule, grid) -> np.ndarray:
    """Envelope values on a time grid, shape ``(n_qubits, len(grid))``."""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("grid must be a non-empty 1-d array")
    if grid.size > 1 and np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    out = np.zeros((schedule.n_qubits, grid.size))
    for l, terms in enumerate(schedule.envelopes):
        out[l] = eval_envelope(terms, grid)
    return out


def load_scenario_data(name: str) -> dict:
    """Raw dict of a scenario file shipped with the package."""
    path = resources.files("stirapsim") / "scenarios" / f"{name}.yaml"
    if not path.is_file():
        raise KeyError(f"unknown builtin scenario {name!r}")
    return yaml.safe_load(path.read_text())


def builtin_schedule(name: str) -> PulseSchedule:
    if name not in BUILTIN_SCHEDULES:
        raise KeyError(f"unknown builtin schedule {name!r}; choose from {BUILTIN_SCHEDULES}")
    return PulseSchedule.from_config(load_scenario_data(name)["schedule"]["terms"])


def mirrored(schedule: PulseSchedule, axis: float) -> PulseSchedule:
    """Original terms plus their time-reflection about ``axis``, sorted by delay.

    Reflecting a transfer sequence reverses it, so appending the mirror of a
    forward transfer yields a there-and-back schedule.
    """
    cfg = schedule.to_config()
    terms = []
    for env in cfg:
        both = env + [{**t, "delay_us": 2.0 * axis - t["delay_us"]} for t in env]
        terms.append(sorted(both, key=lambda t: t["delay_us"]))
    return PulseSchedule.from_config(terms)
