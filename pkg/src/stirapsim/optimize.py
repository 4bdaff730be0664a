"""Derivative-free pulse-parameter search.

Parameters live in config units, three per Gaussian term:
``(amp_mhz_over_2pi, delay_us, width_ns)``, qubit by qubit. Keeping the
optimizer in those units means an emitted schedule reloads to exactly the
terms that were evaluated.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import qmc

from .analysis import fidelity_series
from .evolution import IntegrationError, TimeGrid, evolve_schrodinger
from .hamiltonian import HamiltonianModel
from .pulses import PulseSchedule

log = logging.getLogger(__name__)

AMP_BOUNDS = (0.0, 500.0)
WIDTH_BOUNDS = (5.0, 200.0)


@dataclass(frozen=True, eq=False)
class ParamLayout:
    """Flat parameter vector <-> PulseSchedule, with box bounds."""

    terms_per_qubit: tuple[int, ...]
    lower: np.ndarray
    upper: np.ndarray

    @classmethod
    def default(cls, terms_per_qubit: Sequence[int], t_end: float, t_start: float = 0.0) -> "ParamLayout":
        n = sum(terms_per_qubit)
        lo = np.tile([AMP_BOUNDS[0], t_start, WIDTH_BOUNDS[0]], n).astype(float)
        hi = np.tile([AMP_BOUNDS[1], t_end, WIDTH_BOUNDS[1]], n).astype(float)
        return cls(tuple(int(k) for k in terms_per_qubit), lo, hi)

    @property
    def size(self) -> int:
        return 3 * sum(self.terms_per_qubit)

    def names(self) -> list[str]:
        out = []
        for q, k in enumerate(self.terms_per_qubit):
            for j in range(k):
                out += [f"q{q + 1}t{j + 1}_amp_mhz_over_2pi", f"q{q + 1}t{j + 1}_delay_us", f"q{q + 1}t{j + 1}_width_ns"]
        return out

    def clip(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)

    def in_bounds(self, x: np.ndarray) -> bool:
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def to_schedule(self, x: np.ndarray) -> PulseSchedule:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.size,):
            raise ValueError(f"expected {self.size} parameters, got {x.shape}")
        triples = x.reshape(-1, 3)
        terms, pos = [], 0
        for k in self.terms_per_qubit:
            terms.append(
                [{"amp_mhz_over_2pi": a, "delay_us": d, "width_ns": w} for a, d, w in triples[pos : pos + k]]
            )
            pos += k
        return PulseSchedule.from_config(terms)

    def from_schedule(self, schedule: PulseSchedule) -> np.ndarray:
        cfg = schedule.to_config()
        if tuple(len(e) for e in cfg) != self.terms_per_qubit:
            raise ValueError("schedule shape does not match layout")
        return np.array(
            [v for env in cfg for t in env for v in (t["amp_mhz_over_2pi"], t["delay_us"], t["width_ns"])],
            dtype=float,
        )


@dataclass(frozen=True, eq=False)
class Waypoint:
    """Target state to be reached somewhere in ``[t_from, t_to]`` (us)."""

    target: np.ndarray
    t_from: float
    t_to: float


@dataclass(frozen=True, eq=False)
class Objective:
    """Closed-system figure of merit for a parameterised schedule.

    The value is ``-prod_k max_{t in window_k} F_k(t)`` plus
    ``time_penalty * t`` where ``t`` is when the last waypoint peaks.
    Evolution runs inside the excitation sectors touched by ``initial``,
    which is exact because the Hamiltonian conserves N_e.
    """

    model: HamiltonianModel
    initial: np.ndarray
    waypoints: tuple[Waypoint, ...]
    grid: TimeGrid
    layout: ParamLayout
    time_penalty: float = 0.0

    def __post_init__(self):
        if not self.waypoints:
            raise ValueError("objective needs at least one waypoint")
        support = np.flatnonzero(np.abs(self.initial) > 0)
        sectors = set(self.model.space.excitation_numbers[support].tolist())
        ix = self.model.sector_indices(sectors)
        object.__setattr__(self, "_indices", ix)
        object.__setattr__(self, "_sub", self.model.restrict(ix))

    def trajectory(self, x: np.ndarray):
        sub = self._sub.with_schedule(self.layout.to_schedule(x))
        return evolve_schrodinger(sub, self.initial[self._indices], self.grid)

    def scores(self, x: np.ndarray) -> list[tuple[float, float]]:
        """``(max fidelity, time of max)`` per waypoint."""
        traj = self.trajectory(x)
        out = []
        for wp in self.waypoints:
            fid = fidelity_series(traj.states, wp.target[self._indices])
            mask = (traj.times >= wp.t_from - 1e-12) & (traj.times <= wp.t_to + 1e-12)
            if not mask.any():
                raise ValueError(f"waypoint window [{wp.t_from}, {wp.t_to}] has no recorded times")
            i = np.flatnonzero(mask)[np.argmax(fid[mask])]
            out.append((float(fid[i]), float(traj.times[i])))
        return out


def evaluate(objective: Objective, params: np.ndarray) -> float:
    """Lower is better. Integration failures propagate as IntegrationError."""
    x = np.asarray(params, dtype=float)
    if not objective.layout.in_bounds(x):
        raise ValueError("parameters outside bounds")
    scores = objective.scores(x)
    value = -float(np.prod([f for f, _ in scores]))
    if objective.time_penalty:
        value += objective.time_penalty * scores[-1][1]
    return value


@dataclass
class OptimizeResult:
    x: np.ndarray
    value: float
    n_evals: int
    converged: bool
    message: str
    history: list[tuple[int, float, np.ndarray]] = field(default_factory=list)
    start: np.ndarray | None = None
    start_value: float | None = None


def _safe(fun: Callable[[np.ndarray], float]) -> Callable[[np.ndarray], float]:
    def wrapped(x):
        try:
            return float(fun(x))
        except IntegrationError as exc:
            log.info("integration failed at trial point: %s", exc)
            return np.inf

    return wrapped


def nelder_mead(
    fun: Callable[[np.ndarray], float],
    x0: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    *,
    initial_step: float = 0.1,
    xtol: float = 1e-8,
    ftol: float = 0.0,
    max_evals: int = 1000,
) -> OptimizeResult:
    """Bounded Nelder-Mead with trial points clipped into the box.

    ``xtol`` applies to the simplex diameter measured in box-normalised
    coordinates; ``ftol`` (optional) to the spread of vertex values. Vertices
    are ordered by ``(value, insertion index)`` so ties resolve
    deterministically.
    """
    lower = np.asarray(lower, float)
    upper = np.asarray(upper, float)
    x0 = np.asarray(x0, float)
    if np.any(x0 < lower) or np.any(x0 > upper):
        raise ValueError("x0 outside bounds")
    if initial_step <= 0:
        raise ValueError("initial_step must be positive")
    span = np.where(upper > lower, upper - lower, 1.0)
    n = x0.size
    history: list[tuple[int, float, np.ndarray]] = []
    counter = 0

    def f(x):
        nonlocal counter
        x = np.clip(x, lower, upper)
        v = fun(x)
        history.append((len(history), v, x.copy()))
        counter += 1
        return x, v, counter

    simplex = [f(x0)]
    start_value = simplex[0][1]
    for i in range(n):
        x = x0.copy()
        step = initial_step * span[i]
        x[i] = x[i] + step if x[i] + step <= upper[i] else x[i] - step
        simplex.append(f(x))

    converged, message = False, "maximum evaluations reached"
    while True:
        simplex.sort(key=lambda v: (v[1], v[2]))
        pts = np.array([v[0] for v in simplex])
        vals = np.array([v[1] for v in simplex])
        diam = np.max(np.linalg.norm((pts[1:] - pts[0]) / span, axis=1))
        if diam < xtol or (ftol > 0 and np.isfinite(vals).all() and vals[-1] - vals[0] < ftol):
            converged, message = True, "simplex converged"
            break
        if len(history) >= max_evals:
            break

        best, worst, second = simplex[0], simplex[-1], simplex[-2]
        centroid = pts[:-1].mean(axis=0)
        xr = f(centroid + (centroid - worst[0]))
        if xr[1] < best[1]:
            xe = f(centroid + 2.0 * (centroid - worst[0]))
            simplex[-1] = xe if xe[1] < xr[1] else xr
        elif xr[1] < second[1]:
            simplex[-1] = xr
        else:
            if xr[1] < worst[1]:
                xc = f(centroid + 0.5 * (xr[0] - centroid))
                accept = xc[1] <= xr[1]
            else:
                xc = f(centroid + 0.5 * (worst[0] - centroid))
                accept = xc[1] < worst[1]
            if accept:
                simplex[-1] = xc
            else:
                simplex = [best] + [f(best[0] + 0.5 * (v[0] - best[0])) for v in simplex[1:]]

    simplex.sort(key=lambda v: (v[1], v[2]))
    return OptimizeResult(
        x=simplex[0][0].copy(),
        value=float(simplex[0][1]),
        n_evals=len(history),
        converged=converged,
        message=message,
        history=history,
        start=x0.copy(),
        start_value=float(start_value),
    )


def optimize_objective(objective: Objective, x0: np.ndarray, **options) -> OptimizeResult:
    fun = _safe(lambda x: evaluate(objective, x))
    return nelder_mead(fun, objective.layout.clip(np.asarray(x0, float)), objective.layout.lower, objective.layout.upper, **options)


def _run_start(args):
    objective, x0, options = args
    return optimize_objective(objective, x0, **options)


def latin_starts(layout: ParamLayout, n: int, seed: int) -> np.ndarray:
    if n <= 0:
        return np.empty((0, layout.size))
    sampler = qmc.LatinHypercube(d=layout.size, seed=np.random.default_rng(seed))
    return qmc.scale(sampler.random(n), layout.lower, layout.upper)


def multi_start(
    objective: Objective,
    n_starts: int,
    seed: int,
    x0: np.ndarray | None = None,
    *,
    workers: int = 1,
    **options,
) -> tuple[OptimizeResult, list[OptimizeResult]]:
    """Nelder-Mead from several starts; returns the best run and all runs.

    Starts are ``x0`` (if given) followed by Latin-hypercube samples drawn
    from ``seed``; with ``n_starts == 1`` and no ``x0`` this is a single run
    from the first seeded sample. Ties go to the earlier start.
    """
    if n_starts < 1:
        raise ValueError("n_starts must be >= 1")
    starts = []
    if x0 is not None:
        starts.append(objective.layout.clip(np.asarray(x0, float)))
    starts += list(latin_starts(objective.layout, n_starts - len(starts), seed))
    jobs = [(objective, s, options) for s in starts]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_run_start, jobs))
    else:
        runs = [_run_start(j) for j in jobs]
    best = min(range(len(runs)), key=lambda i: (runs[i].value, i))
    return runs[best], runs
