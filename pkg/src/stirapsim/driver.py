"""Scenario runs, decoherence sweeps and pulse optimisation with file output."""

from __future__ import annotations

import copy
import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .analysis import TrajectoryRecord, build_record, fidelity, named_state
from .config import (
    ConfigError,
    Scenario,
    ScenarioConfig,
    build_scenario,
    dump_yaml,
    parse_scenario,
    parse_sweep,
    read_raw,
)
from .evolution import IntegrationError, TimeGrid, discussion_preset, evolve_lindblad, evolve_schrodinger
from .hamiltonian import dark_state, dark_state_residual
from .optimize import Objective, ParamLayout, Waypoint, multi_start
from .pulses import TWO_PI

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_BELOW_FLOOR = 1
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3

DARK_RESIDUAL_TOL = 1e-10


def _rho(psi: np.ndarray) -> np.ndarray:
    return np.outer(psi, psi.conj())


def simulate(scn: Scenario):
    """Closed or open evolution of a resolved scenario."""
    if scn.is_open:
        return evolve_lindblad(scn.model, _rho(scn.initial), scn.channels, scn.grid)
    return evolve_schrodinger(scn.model, scn.initial, scn.grid)


def summarize(scn: Scenario, traj, record: TrajectoryRecord) -> dict:
    cfg = scn.config
    after = cfg.readout_after_us if cfg.readout == "max_after" else None
    max_f, t_max = record.max_fidelity(after)
    final_f = float(record.fidelity[-1])
    readout = final_f if cfg.readout == "final" else max_f
    passed = None if cfg.fidelity_floor is None else bool(readout >= cfg.fidelity_floor)
    return {
        "schema_version": SCHEMA_VERSION,
        "scenario": cfg.name,
        "mode": "open" if scn.is_open else "closed",
        "dt_ns": scn.grid.dt * 1e3,
        "final_fidelity": final_f,
        "max_fidelity": max_f,
        "t_of_max_us": t_max,
        "readout": cfg.readout,
        "readout_fidelity": readout,
        "fidelity_floor": cfg.fidelity_floor,
        "passed": passed,
        "norm_drift": float(traj.drift),
        "ne_drift": float(np.max(np.abs(record.ne_expectation - record.ne_expectation[0]))),
    }


@dataclass
class RunResult:
    record: TrajectoryRecord
    summary: dict
    paths: dict = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        return EXIT_BELOW_FLOOR if self.summary["passed"] is False else EXIT_OK


def run_config(cfg: ScenarioConfig, out_dir: Optional[Path] = None, dt_ns: Optional[float] = None) -> RunResult:
    scn = build_scenario(cfg, dt_ns)
    traj = simulate(scn)
    record = build_record(traj, scn.space, scn.target, scn.tracked)
    summary = summarize(scn, traj, record)
    paths = {}
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths["trajectory"] = out_dir / f"{cfg.name}_trajectory.csv"
        paths["summary"] = out_dir / f"{cfg.name}_summary.json"
        record.write_csv(paths["trajectory"])
        paths["summary"].write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    return RunResult(record, summary, paths)


def run_scenario(source: Union[str, Path], out_dir: Optional[Path] = None, dt_ns: Optional[float] = None) -> RunResult:
    """Run a scenario file (or builtin name); writes CSV + JSON when ``out_dir`` is set."""
    data, _ = read_raw(source)
    return run_config(parse_scenario(data), out_dir, dt_ns)


# -- validation --------------------------------------------------------------


@dataclass
class Diagnostics:
    errors: list[tuple[str, str]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    info: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.errors

    def lines(self) -> list[str]:
        out = [f"error: {p}: {m}" for p, m in self.errors]
        out += [f"warning: {w}" for w in self.warnings]
        out += [f"{k}: {v}" for k, v in self.info.items()]
        return out


def validate_data(data: dict, seed: int = 0) -> Diagnostics:
    """Schema and unit checks, dimension estimate and a dark-state self-test."""
    diag = Diagnostics()
    if isinstance(data, dict) and "sweep" in data:
        try:
            sw = parse_sweep(data)
            base, _ = read_raw(sw.sweep.base)
            inner = validate_data(base, seed)
            diag.errors += [(f"sweep.base.{p}", m) for p, m in inner.errors]
            diag.info["cells"] = sw.sweep.n_kappa * sw.sweep.n_gamma
        except ConfigError as exc:
            diag.errors += exc.problems
        return diag
    try:
        cfg = parse_scenario(data)
        scn = build_scenario(cfg)
    except ConfigError as exc:
        diag.errors += exc.problems
        return diag

    diag.info["dim"] = scn.space.dim
    diag.info["steps"] = scn.grid.n_steps
    diag.info["mode"] = "open" if scn.is_open else "closed"
    if scn.is_open:
        diag.info["density_matrix_bytes"] = scn.space.dim**2 * 16
    g = np.atleast_1d(np.asarray(cfg.g_mhz_over_2pi, dtype=float))
    if np.any(g > 1e4):
        diag.warnings.append("g_mhz_over_2pi above 10 GHz; value entered in rad/us?")
    for q, env in enumerate(scn.model.schedule.to_config()):
        for j, t in enumerate(env):
            if t["amp_mhz_over_2pi"] > 1e4:
                diag.warnings.append(f"schedule qubit {q + 1} term {j + 1}: amplitude above 10 GHz/2pi")
            if t["width_ns"] < 1:
                diag.warnings.append(f"schedule qubit {q + 1} term {j + 1}: width below 1 ns")

    if scn.space.photon_cutoff >= 1:
        rng = np.random.default_rng(seed)
        rabi = rng.uniform(0.1, 1.0, scn.space.n_qubits) * max(1.0, float(np.max(scn.model.couplings)))
        psi = dark_state(scn.space, scn.model.couplings, rabi)
        res = dark_state_residual(scn.model.from_rabi(rabi), psi)
        diag.info["dark_state_residual"] = res
        if res > DARK_RESIDUAL_TOL:
            diag.errors.append(("g_mhz_over_2pi", f"dark-state self-test failed (residual {res:.2e})"))
    return diag


def validate(source: Union[str, Path]) -> Diagnostics:
    try:
        data, _ = read_raw(source)
    except ConfigError as exc:
        return Diagnostics(errors=exc.problems)
    return validate_data(data)


# -- decoherence sweep -------------------------------------------------------


@dataclass
class SweepResult:
    kappa_khz: np.ndarray
    gamma_khz: np.ndarray
    fidelity: np.ndarray  # (n_kappa, n_gamma)
    path: Optional[Path] = None


def _sweep_cell(args):
    cfg, dt_ns, kappa_khz, gamma_khz = args
    scn = build_scenario(cfg, dt_ns)
    channels = discussion_preset(TWO_PI * kappa_khz * 1e-3, TWO_PI * gamma_khz * 1e-3, scn.space.n_qubits)
    try:
        traj = evolve_lindblad(scn.model, _rho(scn.initial), channels, scn.grid)
    except IntegrationError as exc:
        log.error("sweep cell kappa=%g kHz gamma=%g kHz failed: %s", kappa_khz, gamma_khz, exc)
        return float("nan")
    return fidelity(traj.final, scn.target)


def write_grid_csv(result: SweepResult, path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["kappa_khz_over_2pi\\gamma_khz_over_2pi"] + [f"{g:.6f}" for g in result.gamma_khz])
        for k, row in zip(result.kappa_khz, result.fidelity):
            w.writerow([f"{k:.6f}"] + [f"{v:.10f}" for v in row])


def run_sweep(
    source: Union[str, Path],
    out_dir: Optional[Path] = None,
    dt_ns: Optional[float] = None,
    workers: int = 1,
) -> SweepResult:
    """End-time fidelity on a (kappa, gamma) grid with the one-parameter rate preset."""
    data, path = read_raw(source)
    sw = parse_sweep(data).sweep
    base_src = sw.base
    if path is not None and not Path(base_src).is_file() and (path.parent / base_src).is_file():
        base_src = str(path.parent / base_src)
    base_cfg = parse_scenario(read_raw(base_src)[0])
    base_cfg = base_cfg.model_copy(update={"decoherence": None})
    dt = dt_ns or sw.dt_ns
    kappas = np.linspace(*sw.kappa_khz_over_2pi, sw.n_kappa)
    gammas = np.linspace(*sw.gamma_khz_over_2pi, sw.n_gamma)
    jobs = [(base_cfg, dt, k, g) for k in kappas for g in gammas]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(_sweep_cell, jobs))
    else:
        values = [_sweep_cell(j) for j in jobs]
    result = SweepResult(kappas, gammas, np.array(values).reshape(len(kappas), len(gammas)))
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        result.path = out_dir / f"{base_cfg.name}_sweep.csv"
        write_grid_csv(result, result.path)
    return result


# -- optimisation ------------------------------------------------------------


@dataclass
class OptimizationRun:
    best_params: np.ndarray
    best_value: float
    scenario: dict  # emitted plain scenario, reloadable
    verification: RunResult
    runs: list
    paths: dict = field(default_factory=dict)

    @property
    def exhausted(self) -> bool:
        return not any(r.converged for r in self.runs)


def build_objective(scn: Scenario, dt_ns: Optional[float] = None) -> tuple[Objective, Optional[np.ndarray]]:
    cfg = scn.config
    opt = cfg.optimize
    g = cfg.grid
    grid = TimeGrid.from_dt(g.t_start_us, g.t_end_us, (dt_ns or opt.dt_ns or g.dt_ns) * 1e-3, g.record_stride)
    if opt.waypoints:
        wps = tuple(
            Waypoint(named_state(scn.space, w.state), float(w.window_us[0]), float(w.window_us[1]))
            for w in opt.waypoints
        )
    elif cfg.readout == "max_after":
        wps = (Waypoint(scn.target, cfg.readout_after_us, g.t_end_us),)
    else:
        wps = (Waypoint(scn.target, g.t_end_us, g.t_end_us),)
    sched = scn.model.schedule
    layout = ParamLayout.default(tuple(len(e) for e in sched.envelopes), g.t_end_us, g.t_start_us)
    x0 = layout.from_schedule(sched) if opt.seed_from_schedule else None
    return Objective(scn.model, scn.initial, wps, grid, layout, opt.time_penalty), x0


def run_optimize(
    source: Union[str, Path],
    out_dir: Optional[Path] = None,
    seed: Optional[int] = None,
    workers: int = 1,
    dt_ns: Optional[float] = None,
) -> OptimizationRun:
    """Multi-start search, then a full-resolution run of the emitted schedule."""
    data, _ = read_raw(source)
    cfg = parse_scenario(data)
    if cfg.optimize is None:
        raise ConfigError([("optimize", "section required for optimisation")])
    scn = build_scenario(cfg)
    objective, x0 = build_objective(scn, dt_ns)
    opt = cfg.optimize
    best, runs = multi_start(
        objective,
        opt.n_starts,
        opt.seed if seed is None else seed,
        x0,
        workers=workers,
        max_evals=opt.max_evals,
        xtol=opt.xtol,
        initial_step=opt.initial_step,
    )
    if not best.converged:
        log.warning("optimizer stopped without converging: %s", best.message)

    emitted = copy.deepcopy(data)
    emitted.pop("optimize", None)
    emitted["name"] = f"{cfg.name}-optimized"
    emitted["schedule"] = {"terms": objective.layout.to_schedule(best.x).to_config()}
    verification = run_config(parse_scenario(emitted), out_dir)

    result = OptimizationRun(best.x, best.value, emitted, verification, runs)
    if out_dir is not None:
        out_dir = Path(out_dir)
        result.paths["scenario"] = out_dir / f"{emitted['name']}.yaml"
        dump_yaml(emitted, result.paths["scenario"])
        result.paths["history"] = out_dir / f"{cfg.name}_optimize_history.csv"
        names = objective.layout.names()
        with open(result.paths["history"], "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["eval_index", "value"] + names)
            i = 0
            for run in runs:
                for _, v, x in run.history:
                    w.writerow([i, repr(float(v))] + [repr(float(p)) for p in x])
                    i += 1
        result.paths["best"] = out_dir / f"{cfg.name}_optimize_best.json"
        best_json = {
            "schema_version": SCHEMA_VERSION,
            "scenario": cfg.name,
            "best_value": best.value,
            "start_value": best.start_value,
            "params": dict(zip(names, map(float, best.x))),
            "n_evals": best.n_evals,
            "converged": best.converged,
            "message": best.message,
            "n_starts": len(runs),
            "verified_readout_fidelity": verification.summary["readout_fidelity"],
            "emitted_scenario": str(result.paths["scenario"].name),
        }
        result.paths["best"].write_text(json.dumps(best_json, indent=2) + "\n", encoding="utf-8")
    return result
