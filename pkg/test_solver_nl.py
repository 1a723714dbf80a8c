"""Checks for the nonconvex-linear shuffling solver and its parameter calculator"""
import logging
import sys
from dataclasses import replace

import numpy as np
import pytest

from minimax.data import generate_synthetic
from minimax.errors import NumericalAbort, ParameterError
from minimax.experiment import LEARNING_RATE_GRID
from minimax.linalg import LinearOperator, norm
from minimax.problem import (CompositeProblem, ConstantsNL, build_affine_composite, build_model_selection,
                             derive_constants_nl, full_grad_phi_gamma)
from minimax.prox import l1_ball_indicator, l2_squared, smoothing_spec
from minimax.solver_nl import (ConfigNL, auto_params_nl, compositional_sgd_baseline, decreasing_gamma,
                               descent_bound_nl, solve_nl, rate_step_and_epochs)


def test_rate_step_and_epochs():
    assert rate_step_and_epochs(1.0, 2.0, 1.0, 0.1) == (0.05, 22627, False)


def test_zero_variance_uses_the_capped_step():
    eta, T, capped = rate_step_and_epochs(1.0, 0.0, 1.0, 0.1)
    assert eta == 0.125 and T == 6400 and capped


def test_large_epsilon_is_capped():
    eta, _, capped = rate_step_and_epochs(1.0, 0.01, 1.0, 1.0)
    assert capped and eta == 0.125


def test_auto_params_random_mode_scales_with_n():
    prob = build_affine_composite(p=2, m=3, n=4, seed=0)
    spec = smoothing_spec(0.5, prob.h, prob.q)
    deterministic = auto_params_nl(prob, spec, 0.01, "deterministic")
    shuffled = auto_params_nl(prob, spec, 0.01, "random")
    assert shuffled.A > deterministic.A
    assert deterministic.T >= 1 and shuffled.T >= 1
    assert deterministic.gap >= spec.gamma * spec.b_sup
    with pytest.raises(ParameterError):
        auto_params_nl(prob, spec, 0.0)


def test_evaluation_counts():
    prob = build_affine_composite(p=2, m=3, n=3, seed=1)
    n = prob.n
    first = solve_nl(prob, np.zeros(2), ConfigNL(eta=0.1, T=4, option=1))
    assert [r.f_evals for r in first.trace] == [2 * n * t for t in range(5)]
    assert [r.jac_evals for r in first.trace] == [n * t for t in range(5)]
    second = solve_nl(prob, np.zeros(2), ConfigNL(eta=0.1, T=4, option=2))
    assert [r.f_evals for r in second.trace] == [n * t for t in range(5)]
    baseline = compositional_sgd_baseline(prob, np.zeros(2), ConfigNL(eta=0.1, T=4))
    assert [r.f_evals for r in baseline.trace] == [n * t for t in range(5)]
    assert [r.jac_evals for r in baseline.trace] == [n * t for t in range(5)]


def test_runs_are_reproducible():
    prob = build_affine_composite(p=3, m=3, n=5, seed=2)
    cfg = ConfigNL(eta=0.05, T=10, seed=7)
    first, second = solve_nl(prob, np.ones(3), cfg), solve_nl(prob, np.ones(3), cfg)
    assert np.array_equal(first.w_final, second.w_final)
    assert [r.grad_map_norm for r in first.trace] == [r.grad_map_norm for r in second.trace]


def test_zero_epochs_records_the_start():
    prob = build_affine_composite(seed=0)
    result = solve_nl(prob, np.ones(2), ConfigNL(eta=0.1, T=0))
    assert len(result.trace) == 1 and result.selected == 0
    assert np.array_equal(result.w_selected, np.ones(2))


def test_zero_step_keeps_the_iterate():
    prob = build_affine_composite(seed=0)
    result = solve_nl(prob, np.ones(2), ConfigNL(eta=0.0, T=3))
    assert np.array_equal(result.w_final, np.ones(2))


def test_auto_parameters_reach_epsilon():
    prob = build_affine_composite(p=2, m=3, n=3, seed=0)
    epsilon = 0.5
    cfg = ConfigNL(epsilon=epsilon, permutation_mode="identity", stop_tolerance=epsilon)
    result = solve_nl(prob, np.zeros(2), cfg)
    assert result.params is not None and result.eta <= 1.0 / (8.0 * result.params.Q_gamma)
    assert min(r.grad_map_norm for r in result.trace) <= epsilon
    assert result.trace[result.selected].grad_map_norm <= epsilon


def test_estimator_check_reports_slack():
    prob = build_affine_composite(p=2, m=3, n=4, seed=3)
    result = solve_nl(prob, np.zeros(2), ConfigNL(eta=0.05, T=3, check_estimator=True))
    assert all(r.estimator_slack >= -1e-10 for r in result.trace[1:])


def test_decreasing_smoothing_schedule():
    assert decreasing_gamma(0) == 0.5
    assert decreasing_gamma(7) == pytest.approx(0.25)
    prob = build_affine_composite(seed=0)
    result = solve_nl(prob, np.zeros(2), ConfigNL(eta=0.1, T=3, gamma_schedule="decreasing"))
    assert [r.gamma for r in result.trace] == [decreasing_gamma(t) for t in range(4)]


def test_model_selection_run():
    data = generate_synthetic(40, 5, seed=1, margin_noise=0.1)
    prob = build_model_selection(data, 1e-3, k_b=4)
    result = solve_nl(prob, np.zeros(5), ConfigNL(eta=0.5, T=15, seed=0))
    assert result.status == "completed"
    assert len(result.trace) == 16
    assert all(np.isfinite(r.psi_gamma) and np.isfinite(r.grad_map_norm) for r in result.trace)


def test_invalid_configuration_is_rejected():
    prob = build_affine_composite(seed=0)
    with pytest.raises(ParameterError):
        solve_nl(prob, np.zeros(2), ConfigNL(eta=0.1, T=1, option=3))
    with pytest.raises(ParameterError):
        solve_nl(prob, np.zeros(2), ConfigNL(eta=0.1, T=1, permutation_mode="sorted"))
    with pytest.raises(ParameterError):
        solve_nl(prob, np.zeros(2), ConfigNL(eta=0.1, T=1, gamma=0.0))


def _exact_epochs(prob, T):
    spec = smoothing_spec(0.5, prob.h, prob.q)
    eta = auto_params_nl(prob, spec, 0.1, "deterministic").eta
    cfg = ConfigNL(eta=eta, T=T, option=2, permutation_mode="identity")
    return spec, eta, solve_nl(prob, np.ones(prob.p), cfg)


def test_non_finite_estimate_aborts_with_partial_trace():
    constants = ConstantsNL(M_F=1.0, L_F=0.0, sigma_J=0.0, Lambda0=2.0, Lambda1=0.0, Psi0_lower_bound=0.0)
    prob = CompositeProblem(
        F=[lambda w: np.array([w[0]]), lambda w: np.array([w[0] if w[0] >= 1.0 else np.nan])],
        Jt_vec=[lambda w, y: y, lambda w, y: y],
        p=1, m=1, K=LinearOperator.identity(1), f=l2_squared(0.01), h=l1_ball_indicator(1.0),
        constants=constants,
    )
    # the first inner step lands on w = 0, where the second component is undefined
    cfg = ConfigNL(eta=4.0, T=3, option=1, permutation_mode="identity")
    with pytest.raises(NumericalAbort) as info:
        solve_nl(prob, np.array([2.0]), cfg)
    assert info.value.epoch == 1
    assert len(info.value.trace) == 1


def test_objective_meets_the_epoch_descent_bound():
    prob = build_affine_composite(p=2, m=3, n=3, seed=0)
    spec, eta, result = _exact_epochs(prob, 30)
    derived = derive_constants_nl(prob, spec.gamma)
    c = prob.constants
    for prev, record in zip(result.trace, result.trace[1:]):
        bound = descent_bound_nl(prev.psi_gamma, prev.grad_map_norm, eta, derived, c.sigma_J, c.Lambda1)
        assert record.psi_gamma <= bound + 1e-12


def test_gradient_mapping_bound_is_recorded():
    prob = build_affine_composite(p=2, m=3, n=3, seed=0)
    spec, _, result = _exact_epochs(prob, 10)
    c = prob.constants
    last = result.trace[-1]
    grad = full_grad_phi_gamma(prob, result.w_final, spec)
    expected = c.Lambda0 * last.grad_map_norm ** 2 + c.Lambda1 - norm(grad) ** 2
    assert last.gradient_bound_slack == pytest.approx(expected, rel=1e-9, abs=1e-12)
    assert all(r.gradient_bound_slack >= 0.0 for r in result.trace)


def test_misdeclared_gradient_bound_warns_once(caplog):
    prob = build_affine_composite(p=2, m=3, n=3, seed=0)
    # G vanishes at the stationary point while grad Phi = -lam w does not
    prob = prob.with_constants(replace(prob.constants, Lambda0=1.0, Lambda1=0.0))
    cfg = ConfigNL(eta=0.05, T=2000, option=2, permutation_mode="identity")
    with caplog.at_level(logging.WARNING, logger="minimax.metrics"):
        result = solve_nl(prob, np.ones(2), cfg)
    assert result.trace[-1].gradient_bound_slack < 0.0
    warnings = [r for r in caplog.records if "gradient-mapping bound violated" in r.getMessage()]
    assert len(warnings) == 1


def test_model_selection_with_tuned_step():
    ratios, drops = [], []
    for seed in range(3):
        data = generate_synthetic(200, 10, seed=seed, margin_noise=0.1)
        prob = build_model_selection(data, 1e-4, k_b=16)
        best = None
        for eta in [g for g in LEARNING_RATE_GRID if 0.01 <= g <= 10.0]:
            cfg = ConfigNL(eta=eta, T=200, gamma_schedule="decreasing", seed=seed)
            try:
                result = solve_nl(prob, np.zeros(10), cfg)
            except NumericalAbort:
                continue
            if best is None or result.trace[-1].psi_gamma < best.trace[-1].psi_gamma:
                best = result
        norms = [r.grad_map_norm for r in best.trace]
        ratios.append(min(norms[1:]) / norms[1])
        drops.append(best.trace[1].psi_gamma - best.trace[-1].psi_gamma)
    assert np.median(ratios) <= 0.2
    assert np.median(drops) > 0.0


def test_single_component_is_proximal_gradient():
    data = generate_synthetic(30, 4, seed=2, margin_noise=0.1)
    prob = build_model_selection(data, 1e-3, k_b=1)
    spec = smoothing_spec(0.5, prob.h, prob.q)
    eta = 0.5
    for option in (1, 2):
        result = solve_nl(prob, np.zeros(4), ConfigNL(eta=eta, T=5, option=option))
        w = np.zeros(4)
        for _ in range(5):
            w = prob.f.prox(w - eta * full_grad_phi_gamma(prob, w, spec), eta)
        assert np.allclose(result.w_final, w, rtol=1e-12, atol=1e-14)


def test_baseline_ends_near_the_shuffling_solver():
    data = generate_synthetic(160, 5, seed=3, margin_noise=0.1)
    prob = build_model_selection(data, 1e-3, k_b=8)
    cfg = ConfigNL(eta=0.5, T=100, seed=3)
    shuffled = solve_nl(prob, np.zeros(5), cfg)
    baseline = compositional_sgd_baseline(prob, np.zeros(5), cfg)
    assert shuffled.trace[-1].psi_gamma > 0.0
    assert baseline.trace[-1].psi_gamma <= 2.0 * shuffled.trace[-1].psi_gamma


def test_average_gradient_mapping_never_increases():
    prob = build_affine_composite(p=2, m=3, n=3, seed=4)
    _, _, result = _exact_epochs(prob, 50)
    norms = np.array([r.grad_map_norm for r in result.trace])
    averages = np.cumsum(norms) / np.arange(1, len(norms) + 1)
    assert np.all(np.diff(averages) <= 1e-12)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
