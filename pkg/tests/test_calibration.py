import itertools

import numpy as np
import pytest

from helpers import START, TRUTH, synthetic_market, synthetic_problem
from pdvol.calibration import (CalibrationProblem, best_so_far, calibrate, lse_objective, nelder_mead_box)
from pdvol.errors import AllPathsDiscarded, ValidationError
from pdvol.market import PriceSeries
from pdvol.simulator import EulerConfig
from pdvol.vix import VixConfig


@pytest.fixture(scope="module")
def problem():
    return synthetic_problem(budget=200)


def test_self_comparison_is_zero(problem):
    assert lse_objective(problem, TRUTH) == 0.0
    assert len(problem.dates) == 10


def test_degenerate_family_closed_form():
    spx, market, cfg = synthetic_market()
    flat = PriceSeries(market.dates, np.full(len(market), 100 * 1.2 / 2.0))
    prob = CalibrationProblem(flat, spx, 180.0, (1.2, 2.0, 0.5), cfg, bounds=((0.01, 20), (0.1, 12), (1e-9, 20)))
    # gamma at its lower bound is numerically indistinguishable from the constant model
    prob0 = CalibrationProblem(flat, spx, 180.0, (1.2, 2.0, 1e-9), cfg, bounds=((0.01, 20), (0.1, 12), (1e-9, 20)))
    assert lse_objective(prob0, (1.2, 2.0, 1e-9)) < 1e-10
    c = 25.0
    other = CalibrationProblem(PriceSeries(market.dates, np.full(len(market), c)), spx, 180.0,
                               (1.2, 2.0, 1e-9), cfg, bounds=((0.01, 20), (0.1, 12), (1e-9, 20)))
    np.testing.assert_allclose(lse_objective(other, (1.2, 2.0, 1e-9)), 10 * (c - 60.0) ** 2, rtol=1e-7)
    assert lse_objective(prob, (1.2, 2.0, 0.5)) > 0


def test_alpha_perturbation_increases_lse(problem):
    a, b, g = TRUTH
    assert lse_objective(problem, (1.1 * a, b, g)) > lse_objective(problem, TRUTH)


def test_objective_deterministic(problem):
    p = (1.05, 1.35, 0.95)
    assert lse_objective(problem, p) == lse_objective(problem, p)


def test_problem_validation():
    spx, market, cfg = synthetic_market()
    with pytest.raises(ValidationError):
        CalibrationProblem(market, spx, 180.0, START, cfg, bounds=((2, 1), (0.1, 12), (0.01, 20)))
    with pytest.raises(ValidationError):
        CalibrationProblem(market, spx, 180.0, START, cfg, bounds=((0, 1), (0.1, 12), (0.01, 20)))
    with pytest.raises(ValidationError):
        CalibrationProblem(market, spx, 180.0, (30.0, 1.4, 0.9), cfg)
    with pytest.raises(ValidationError):
        CalibrationProblem(market, spx, 180.0, START, cfg, budget=0)
    with pytest.raises(ValidationError):
        lse_objective(CalibrationProblem(market, spx, 180.0, START, cfg), (0.001, 1, 1))


def test_discard_policy():
    spx, market, _ = synthetic_market()
    # two inner paths and D = 0.7 below every calibration-date Y: two dates lose both paths
    cfg = VixConfig(100, 2, 30.0, EulerConfig(seed=1, threshold_d=0.7))
    hard = CalibrationProblem(market, spx, 180.0, (5.0, 6.0, 1.7), cfg)
    model = hard.model_vix((5.0, 6.0, 1.7))
    assert np.isnan(model).sum() == 2
    with pytest.raises(AllPathsDiscarded):
        lse_objective(hard, (5.0, 6.0, 1.7))
    soft = CalibrationProblem(market, spx, 180.0, (5.0, 6.0, 1.7), cfg, policy="skip")
    ok = ~np.isnan(model)
    np.testing.assert_allclose(lse_objective(soft, (5.0, 6.0, 1.7)),
                               np.sum((market.values[ok] - model[ok]) ** 2), rtol=1e-12)


def test_nelder_mead_quadratic_in_box():
    f = lambda p: (p[0] - 1) ** 2 + 10 * (p[1] + 2) ** 2  # noqa: E731
    x, fx, trace, exhausted, conv = nelder_mead_box(f, [3.0, 3.0], [0, 0], [5, 5], 500, xrtol=1e-8)
    np.testing.assert_allclose(x, [1.0, 0.0], atol=1e-6)  # constrained optimum on the box face
    assert conv and not exhausted
    assert all(0 <= p[0] <= 5 and 0 <= p[1] <= 5 for p, _ in trace)
    assert len(trace) <= 500


def test_budget_one_returns_start():
    prob = synthetic_problem(budget=1)
    res = calibrate(prob)
    assert res.optimum == START and res.evaluations == 1 and res.budget_exhausted


def test_fixed_point_at_optimum():
    prob = synthetic_problem(start=TRUTH, budget=60)
    res = calibrate(prob)
    assert res.optimum == TRUTH and res.lse == 0.0


@pytest.mark.slow
def test_recovery_trace_and_grid_oracle(problem):
    res = calibrate(problem)
    np.testing.assert_allclose(res.optimum, TRUTH, atol=0.05)
    assert res.lse <= lse_objective(problem, START)
    best = best_so_far(res.trace)
    assert np.all(np.diff(best) <= 0)
    grid = [(0.8, 0.95, 1.1), (1.3, 1.45, 1.6), (0.7, 0.85, 1.0)]
    grid_min = min(lse_objective(problem, p) for p in itertools.product(*grid))
    assert res.lse <= grid_min
    again = calibrate(synthetic_problem(budget=200))
    assert again.trace == res.trace
    d = res.to_json()
    assert set(d) >= {"optimum", "lse", "evaluations", "trace"}
