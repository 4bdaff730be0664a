"""Scenario and sweep configuration files (YAML).

All frequencies are entered as ``value/2pi`` with the unit in the key name
(``_mhz_over_2pi`` / ``_khz_over_2pi``); qubit sites are 1-based.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .analysis import named_state
from .evolution import CHANNEL_KINDS, CollapseChannel, TimeGrid, discussion_preset
from .hamiltonian import HamiltonianModel, couplings_from_mhz
from .pulses import TWO_PI, PulseSchedule, builtin_schedule, load_scenario_data, mirrored
from .statespace import DEFAULT_MAX_DIM, StateSpace, labels_from_strings

KHZ = 1e-3  # kHz in MHz


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class TermConfig(_Strict):
    amp_mhz_over_2pi: float = Field(ge=0)
    delay_us: float
    width_ns: float = Field(gt=0)


class ScheduleConfig(_Strict):
    builtin: Optional[Literal["qst-fig2", "wstate-fig4"]] = None
    terms: Optional[list[list[TermConfig]]] = None
    mirror_about_us: Optional[float] = None

    @model_validator(mode="after")
    def _one_source(self):
        if (self.builtin is None) == (self.terms is None):
            raise ValueError("give exactly one of 'builtin' or 'terms'")
        return self


class GridConfig(_Strict):
    t_start_us: float = 0.0
    t_end_us: float
    dt_ns: float = Field(0.1, gt=0)
    record_stride: int = Field(10, ge=1)

    @model_validator(mode="after")
    def _ordered(self):
        if not self.t_end_us > self.t_start_us:
            raise ValueError("t_end_us must exceed t_start_us")
        return self


class ChannelConfig(_Strict):
    kind: Literal[CHANNEL_KINDS]  # type: ignore[valid-type]
    site: Union[int, Literal["all", "cavity"]] = "cavity"
    rate_khz_over_2pi: float = Field(ge=0)


class PresetConfig(_Strict):
    kappa_khz_over_2pi: float = Field(ge=0)
    gamma_khz_over_2pi: float = Field(ge=0)


class DecoherenceConfig(_Strict):
    preset: Optional[PresetConfig] = None
    channels: Optional[list[ChannelConfig]] = None

    @model_validator(mode="after")
    def _one_source(self):
        if (self.preset is None) == (self.channels is None):
            raise ValueError("give exactly one of 'preset' or 'channels'")
        return self


class WaypointConfig(_Strict):
    state: str
    window_us: tuple[float, float]


class OptimizeConfig(_Strict):
    n_starts: int = Field(8, ge=1)
    seed: int = 0
    max_evals: int = Field(800, ge=1)
    xtol: float = Field(1e-6, gt=0)
    initial_step: float = Field(0.1, gt=0)
    dt_ns: Optional[float] = Field(None, gt=0)
    time_penalty: float = Field(0.0, ge=0)
    seed_from_schedule: bool = True
    waypoints: Optional[list[WaypointConfig]] = None


class ScenarioConfig(_Strict):
    name: str
    n_qubits: int = Field(ge=1)
    photon_cutoff: int = Field(1, ge=0)
    g_mhz_over_2pi: Union[float, list[float]]
    initial: str
    target: str
    readout: Literal["final", "max_after"] = "final"
    readout_after_us: Optional[float] = None
    fidelity_floor: Optional[float] = Field(None, ge=0, le=1)
    grid: GridConfig
    schedule: ScheduleConfig
    decoherence: Optional[DecoherenceConfig] = None
    optimize: Optional[OptimizeConfig] = None
    tracked: Optional[list[str]] = None

    @field_validator("g_mhz_over_2pi")
    @classmethod
    def _finite(cls, v):
        vals = np.atleast_1d(np.asarray(v, dtype=float))
        if not np.all(np.isfinite(vals)):
            raise ValueError("couplings must be finite")
        return v

    @model_validator(mode="after")
    def _consistent(self):
        g = np.atleast_1d(np.asarray(self.g_mhz_over_2pi, dtype=float))
        if g.size not in (1, self.n_qubits):
            raise ValueError(f"g_mhz_over_2pi needs 1 or {self.n_qubits} entries")
        if self.schedule.terms is not None and len(self.schedule.terms) != self.n_qubits:
            raise ValueError(f"schedule.terms needs one list per qubit ({self.n_qubits})")
        if self.readout == "max_after" and self.readout_after_us is None:
            raise ValueError("readout 'max_after' needs readout_after_us")
        return self


class SweepSpecConfig(_Strict):
    base: str
    kappa_khz_over_2pi: tuple[float, float] = (0.0, 100.0)
    gamma_khz_over_2pi: tuple[float, float] = (0.0, 100.0)
    n_kappa: int = Field(11, ge=2)
    n_gamma: int = Field(11, ge=2)
    dt_ns: Optional[float] = Field(0.25, gt=0)

    @field_validator("kappa_khz_over_2pi", "gamma_khz_over_2pi")
    @classmethod
    def _range(cls, v):
        lo, hi = v
        if lo < 0 or hi < lo:
            raise ValueError("range must satisfy 0 <= low <= high")
        return v


class SweepConfig(_Strict):
    sweep: SweepSpecConfig


class ConfigError(ValueError):
    """Config failed validation; ``problems`` lists ``(field path, message)``."""

    def __init__(self, problems: list[tuple[str, str]]):
        self.problems = problems
        super().__init__("; ".join(f"{p}: {m}" for p, m in problems))


def _problems(exc: ValidationError) -> list[tuple[str, str]]:
    return [(".".join(str(x) for x in e["loc"]) or "<root>", e["msg"]) for e in exc.errors()]


def read_raw(source: Union[str, Path]) -> tuple[dict, Optional[Path]]:
    """Load YAML from a path, or a builtin scenario by name."""
    path = Path(source)
    if path.is_file():
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
        if not isinstance(data, dict):
            raise ConfigError([("<root>", "config must be a mapping")])
        return data, path
    try:
        return load_scenario_data(str(source)), None
    except KeyError:
        raise ConfigError([("<root>", f"no such file or builtin scenario: {source}")]) from None


def parse_scenario(data: dict) -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_problems(exc)) from None


def parse_sweep(data: dict) -> SweepConfig:
    try:
        return SweepConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_problems(exc)) from None


def load_scenario(source) -> ScenarioConfig:
    return parse_scenario(read_raw(source)[0])


# -- resolution into numerical objects ---------------------------------------


@dataclass
class Scenario:
    config: ScenarioConfig
    space: StateSpace
    model: HamiltonianModel
    initial: np.ndarray
    target: np.ndarray
    grid: TimeGrid
    channels: list[CollapseChannel]
    tracked: list

    @property
    def is_open(self) -> bool:
        return self.config.decoherence is not None


def schedule_from_config(cfg: ScheduleConfig) -> PulseSchedule:
    if cfg.builtin is not None:
        sched = builtin_schedule(cfg.builtin)
    else:
        sched = PulseSchedule.from_config([[t.model_dump() for t in q] for q in cfg.terms])
    if cfg.mirror_about_us is not None:
        sched = mirrored(sched, cfg.mirror_about_us)
    return sched


def channels_from_config(cfg: Optional[DecoherenceConfig], n_qubits: int) -> list[CollapseChannel]:
    if cfg is None:
        return []
    if cfg.preset is not None:
        return discussion_preset(
            TWO_PI * cfg.preset.kappa_khz_over_2pi * KHZ,
            TWO_PI * cfg.preset.gamma_khz_over_2pi * KHZ,
            n_qubits,
        )
    out = []
    for i, ch in enumerate(cfg.channels):
        rate = TWO_PI * ch.rate_khz_over_2pi * KHZ
        if ch.kind == "cavity_decay":
            if ch.site != "cavity":
                raise ConfigError([(f"decoherence.channels.{i}.site", "cavity_decay acts on the cavity")])
            out.append(CollapseChannel(ch.kind, rate))
            continue
        if ch.site == "cavity":
            raise ConfigError([(f"decoherence.channels.{i}.site", f"{ch.kind} needs a qubit (1..{n_qubits}) or 'all'")])
        sites = range(n_qubits) if ch.site == "all" else [ch.site - 1]
        for s in sites:
            if not 0 <= s < n_qubits:
                raise ConfigError([(f"decoherence.channels.{i}.site", f"qubit {s + 1} out of range 1..{n_qubits}")])
            out.append(CollapseChannel(ch.kind, rate, s))
    return out


def build_scenario(cfg: ScenarioConfig, dt_ns: Optional[float] = None) -> Scenario:
    """Resolve a validated config into space, model, states and grid."""
    try:
        space = StateSpace(cfg.n_qubits, cfg.photon_cutoff, max_dim=DEFAULT_MAX_DIM)
    except ValueError as exc:
        raise ConfigError([("n_qubits", str(exc))]) from None
    sched = schedule_from_config(cfg.schedule)
    if sched.n_qubits != cfg.n_qubits:
        raise ConfigError([("schedule", f"schedule drives {sched.n_qubits} qubits, scenario has {cfg.n_qubits}")])
    model = HamiltonianModel(space, couplings_from_mhz(cfg.g_mhz_over_2pi, cfg.n_qubits), sched)
    problems = []
    states = {}
    for key in ("initial", "target"):
        try:
            states[key] = named_state(space, getattr(cfg, key))
        except ValueError as exc:
            problems.append((key, str(exc)))
    tracked = None
    try:
        tracked = labels_from_strings(space, cfg.tracked) if cfg.tracked else space.single_excitation_basis()
    except ValueError as exc:
        problems.append(("tracked", str(exc)))
    if problems:
        raise ConfigError(problems)
    g = cfg.grid
    grid = TimeGrid.from_dt(g.t_start_us, g.t_end_us, (dt_ns or g.dt_ns) * 1e-3, g.record_stride)
    return Scenario(
        cfg, space, model, states["initial"], states["target"], grid,
        channels_from_config(cfg.decoherence, cfg.n_qubits), tracked,
    )


def dump_yaml(data: dict, path: Union[str, Path]) -> None:
    Path(path).write_text(yaml.safe_dump(data, sort_keys=False), encoding="utf-8")

