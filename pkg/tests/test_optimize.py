import numpy as np
import pytest

from stirapsim.config import OptimizeConfig, build_scenario, load_scenario
from stirapsim.driver import build_objective
from stirapsim.evolution import IntegrationError
from stirapsim.optimize import (
    ParamLayout,
    evaluate,
    latin_starts,
    multi_start,
    nelder_mead,
    optimize_objective,
)
from stirapsim.pulses import builtin_schedule

LO, HI = -np.ones(3), np.ones(3)
X_STAR = np.array([0.3, -0.2, 0.55])


def bowl(x):
    return float(np.sum(np.array([1.0, 3.0, 0.5]) * (x - X_STAR) ** 2))


@pytest.fixture(scope="module")
def w_objective():
    scn = build_scenario(load_scenario("wstate-optimize"))
    return build_objective(scn)


@pytest.fixture(scope="module")
def qst_objective():
    scn = build_scenario(load_scenario("qst-fig2").model_copy(update={"optimize": OptimizeConfig()}))
    return build_objective(scn)


def test_bowl_converges():
    res = nelder_mead(bowl, np.array([-0.8, 0.7, -0.9]), LO, HI, initial_step=0.2, xtol=1e-9, max_evals=500)
    assert res.n_evals <= 500
    assert np.abs(res.x - X_STAR).max() <= 1e-6
    assert res.converged


def test_restart_is_fixed_point():
    res = nelder_mead(bowl, np.array([-0.8, 0.7, -0.9]), LO, HI, initial_step=0.2, xtol=1e-9, max_evals=500)
    again = nelder_mead(bowl, res.x, LO, HI, initial_step=1e-4, xtol=1e-9, max_evals=500)
    assert abs(again.value - res.value) < 1e-8


def test_never_worse_than_start():
    x0 = np.array([0.1, 0.1, 0.1])
    res = nelder_mead(bowl, x0, LO, HI, max_evals=20)
    assert res.value <= bowl(x0) == res.start_value


def test_bounded_minimum_on_face():
    target = np.array([2.0, 0.0, 0.0])
    res = nelder_mead(lambda x: float(np.sum((x - target) ** 2)), np.zeros(3), LO, HI, xtol=1e-10, max_evals=800)
    assert np.allclose(res.x, [1.0, 0.0, 0.0], atol=1e-6)


def test_history_within_bounds_and_deterministic():
    a = nelder_mead(bowl, np.array([0.9, 0.9, 0.9]), LO, HI, initial_step=0.5, max_evals=200)
    b = nelder_mead(bowl, np.array([0.9, 0.9, 0.9]), LO, HI, initial_step=0.5, max_evals=200)
    assert all(np.all(x >= LO) and np.all(x <= HI) for _, _, x in a.history)
    assert [v for _, v, _ in a.history] == [v for _, v, _ in b.history]
    assert np.array_equal(a.x, b.x)


def test_budget_exhaustion_reported():
    res = nelder_mead(bowl, np.zeros(3), LO, HI, max_evals=10, xtol=1e-12)
    assert not res.converged
    assert res.n_evals <= 10 + 3  # a shrink step may finish its sweep


def test_rejects_bad_start():
    with pytest.raises(ValueError):
        nelder_mead(bowl, np.array([2.0, 0, 0]), LO, HI)


def test_infinite_values_are_avoided():
    def f(x):
        return np.inf if x[0] > 0.5 else bowl(x)

    res = nelder_mead(f, np.array([0.0, 0.0, 0.0]), LO, HI, xtol=1e-9, max_evals=600)
    assert np.abs(res.x - X_STAR).max() <= 1e-5


def test_layout_roundtrip():
    sched = builtin_schedule("qst-fig2")
    layout = ParamLayout.default((2, 2, 2), 0.9)
    x = layout.from_schedule(sched)
    assert x.size == layout.size == 18
    assert layout.in_bounds(x)
    assert layout.to_schedule(x).envelopes == sched.envelopes
    assert layout.names()[:3] == ["q1t1_amp_mhz_over_2pi", "q1t1_delay_us", "q1t1_width_ns"]


def test_latin_starts_reproducible():
    layout = ParamLayout.default((1, 1, 1), 0.4)
    a, b = latin_starts(layout, 5, 7), latin_starts(layout, 5, 7)
    assert np.array_equal(a, b)
    assert all(layout.in_bounds(x) for x in a)
    assert not np.array_equal(a, latin_starts(layout, 5, 8))


def test_evaluate_reference_transfer(qst_objective):
    objective, x0 = qst_objective
    assert evaluate(objective, x0) <= -0.98
    assert evaluate(objective, x0) == evaluate(objective, x0)


def test_evaluate_zero_amplitude(qst_objective):
    objective, x0 = qst_objective
    x = x0.copy()
    x[0::3] = 0.0
    assert evaluate(objective, x) == 0.0


def test_evaluate_rejects_out_of_bounds(qst_objective):
    objective, x0 = qst_objective
    x = x0.copy()
    x[2] = 0.0
    with pytest.raises(ValueError):
        evaluate(objective, x)


def test_evaluate_propagates_integration_failure(qst_objective):
    objective, x0 = qst_objective
    x = x0.copy()
    x[0::3] = 500.0
    x[2::3] = 5.0
    with pytest.raises(IntegrationError):
        evaluate(objective, x)


def test_multi_start_single_equals_nelder_mead(w_objective):
    objective, _ = w_objective
    best, runs = multi_start(objective, 1, seed=3, max_evals=40)
    x0 = latin_starts(objective.layout, 1, 3)[0]
    direct = optimize_objective(objective, x0, max_evals=40)
    assert len(runs) == 1
    assert np.array_equal(best.x, direct.x) and best.value == direct.value


def test_multi_start_deterministic(w_objective):
    objective, x0 = w_objective
    a, _ = multi_start(objective, 3, seed=11, x0=x0, max_evals=40)
    b, _ = multi_start(objective, 3, seed=11, x0=x0, max_evals=40)
    assert np.array_equal(a.x, b.x) and a.value == b.value


def test_w_state_eight_starts(w_objective):
    objective, x0 = w_objective
    best, runs = multi_start(objective, 8, seed=0, x0=x0, max_evals=800, xtol=1e-6)
    assert len(runs) == 8
    assert -best.value >= 0.99
    assert best.value <= runs[0].start_value
