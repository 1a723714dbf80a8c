"""Checks for the strongly concave solver, its inner routines and the parameter regimes"""
import math
import sys
from dataclasses import replace

import numpy as np
import pytest

from minimax.errors import NumericalAbort, ParameterError, UnsatisfiableParameters
from minimax.linalg import norm
from minimax.metrics import kkt_residual_nc
from minimax.problem import ConstantsNC, build_quadratic_minimax, derive_constants_nc, grad_phi_zero_nc, u_star
from minimax.solver_nc import (ConfigNC, auto_params_nc, coupled_eta_hat, epochs_for_average,
                               full_inner_epochs, gradient_ascent_bound, inner_gradient_ascent,
                               inner_shuffling_ascent, semi_inner_epochs, shuffling_ascent_bound, solve_nc)

UNIT = ConstantsNC(L_w=1.0, L_u=1.0, mu_H=1.0, Theta_w=0.0, sigma_w=0.0, Theta_u=0.0, sigma_u=0.0,
                   Lambda0=1.0, Lambda1=0.0, Lambda0_hat=1.0, Lambda1_hat=0.0, L_f=0.0,
                   Psi0_lower_bound=0.0)


def test_inner_epoch_counts():
    assert full_inner_epochs(1.0, 0.1) == 12
    assert full_inner_epochs(10.0, 1.0) == 1
    assert semi_inner_epochs(0.1, 0.01, 1.0, UNIT, 0.0, 1.0) == 25
    with pytest.raises(UnsatisfiableParameters):
        full_inner_epochs(0.0, 0.1)


def test_coupled_step_and_epoch_count():
    assert coupled_eta_hat(2.0, 0.001) == pytest.approx(0.06)
    assert coupled_eta_hat(2.0, 0.001, multiplier=60.0) == pytest.approx(0.24)
    assert epochs_for_average(8.0, 0.5, 1.0, 0.5) == 31
    with pytest.raises(UnsatisfiableParameters):
        epochs_for_average(8.0, 0.5, 1.0, 1.0)


def test_regime_resolution():
    prob = build_quadratic_minimax(3, 3, 4, seed=0)
    assert ConfigNC(variant="semi").resolved_regime(prob) == "semi"
    assert ConfigNC(variant="full").resolved_regime(prob) == "full-muH"
    assert ConfigNC(variant="full", S=1).resolved_regime(prob) == "full-S1"
    assert ConfigNC(variant="oracle", eta=0.1, T=1).resolved_regime(prob) is None
    flat = prob.with_constants(replace(prob.constants, mu_H=0.0))
    with pytest.raises(UnsatisfiableParameters):
        ConfigNC(variant="full").resolved_regime(flat)
    with pytest.raises(UnsatisfiableParameters):
        auto_params_nc(flat, ConfigNC(variant="semi"))


def test_single_epoch_semi_regime():
    prob = build_quadratic_minimax(4, 4, 6, seed=1)
    params = auto_params_nc(prob, ConfigNC(variant="semi", regime="semi-one-epoch"))
    assert params.S == 1
    assert params.omega == pytest.approx(1.0 / params.notes["B0"])
    assert params.eta <= 0.9 * params.eta_bar


def test_automatic_parameters_per_regime():
    prob = build_quadratic_minimax(4, 4, 6, seed=2)
    full = auto_params_nc(prob, ConfigNC(variant="full"))
    assert full.regime == "full-muH"
    assert full.S == full_inner_epochs(prob.constants.mu_H, full.eta_hat)
    assert full.eta_hat <= 1.0 / prob.constants.L_u
    single = auto_params_nc(prob, ConfigNC(variant="full", regime="full-S1", S=1))
    kappa = derive_constants_nc(prob).kappa
    assert single.S == 1
    assert single.eta_hat == pytest.approx(coupled_eta_hat(kappa, single.eta))
    explicit = auto_params_nc(prob, ConfigNC(variant="semi", eta=0.001, S=2))
    assert explicit.eta == 0.001 and explicit.S == 2 and explicit.T >= 1


def test_gradient_ascent_contracts():
    for seed in range(20):
        prob = build_quadratic_minimax(3, 4, 5, seed)
        c = prob.constants
        rng = np.random.default_rng(seed)
        w, u0 = rng.standard_normal(3), rng.standard_normal(4)
        target, _ = u_star(prob, w)
        eta_hat = 2.0 / (c.L_u + c.mu_H)
        u = inner_gradient_ascent(prob, w, u0, eta_hat, 5)
        bound = gradient_ascent_bound(c, 0.0, eta_hat, 5, norm(u0 - target) ** 2)
        assert norm(u - target) ** 2 <= bound + 1e-12


def test_shuffled_ascent_within_its_bound():
    for seed in range(20):
        prob = build_quadratic_minimax(3, 4, 8, seed, heterogeneity=0.0)
        c = prob.constants
        rng = np.random.default_rng(seed)
        w, u0 = rng.standard_normal(3), rng.standard_normal(4)
        target, _ = u_star(prob, w)
        u = inner_shuffling_ascent(prob, w, u0, 0.5, 3, rng)
        bound = shuffling_ascent_bound(c, 0.0, prob.n, 0.5, 3, norm(u0 - target) ** 2,
                                       norm(grad_phi_zero_nc(prob, w)))
        assert norm(u - target) ** 2 <= bound + 1e-12


def test_single_component_shuffling_is_gradient_ascent():
    prob = build_quadratic_minimax(3, 3, 1, seed=4)
    c = prob.constants
    eta_hat = 1.0 / (c.L_u + c.mu_H)
    w, u0 = np.ones(3), np.zeros(3)
    shuffled = inner_shuffling_ascent(prob, w, u0, eta_hat, 4, np.random.default_rng(0))
    assert np.allclose(shuffled, inner_gradient_ascent(prob, w, u0, eta_hat, 4))


def test_inner_routines_keep_the_maximizer():
    prob = build_quadratic_minimax(3, 3, 5, seed=5)
    w = np.array([0.3, -0.2, 0.1])
    target, _ = u_star(prob, w)
    eta_hat = 2.0 / (prob.constants.L_u + prob.constants.mu_H)
    assert np.allclose(inner_gradient_ascent(prob, w, target, eta_hat, 10), target)
    untouched = inner_gradient_ascent(prob, w, target, eta_hat, 0)
    assert np.array_equal(untouched, target) and untouched is not target
    with pytest.raises(ParameterError):
        inner_gradient_ascent(prob, w, target, 2.5 * eta_hat, 1)
    with pytest.raises(ParameterError):
        inner_shuffling_ascent(prob, w, target, eta_hat, 0, np.random.default_rng(0))


def test_oracle_counts_per_epoch():
    prob = build_quadratic_minimax(3, 3, 8, seed=0)
    cfg = ConfigNC(variant="semi", eta=0.01, eta_hat=0.1, S=3, T=4)
    result = solve_nc(prob, np.zeros(3), np.zeros(3), cfg)
    assert [r.gradu_evals for r in result.trace] == [3 * 8 * t for t in range(5)]
    assert [r.gradw_evals for r in result.trace] == [8 * t for t in range(5)]
    assert result.params is None and result.status == "completed"


def test_full_variant_is_reproducible():
    prob = build_quadratic_minimax(3, 3, 6, seed=1)
    cfg = ConfigNC(variant="full", eta=0.01, eta_hat=0.05, S=2, T=5, seed=3)
    first = solve_nc(prob, np.zeros(3), np.zeros(3), cfg)
    second = solve_nc(prob, np.zeros(3), np.zeros(3), cfg)
    assert np.array_equal(first.w_final, second.w_final)
    assert np.array_equal(first.u_final, second.u_final)


def test_oracle_variant_tracks_the_maximizer():
    prob = build_quadratic_minimax(3, 3, 4, seed=2)
    cfg = ConfigNC(variant="oracle", eta=0.05, eta_hat=0.0, S=0, T=5)
    result = solve_nc(prob, np.zeros(3), np.zeros(3), cfg)
    assert all(r.u_gap == 0.0 for r in result.trace[1:])
    assert all(r.objective_kind == "psi0" for r in result.trace)
    with pytest.raises(ParameterError):
        solve_nc(prob, np.zeros(3), np.zeros(3), ConfigNC(variant="oracle"))


def test_constrained_problem_records_the_surrogate():
    prob = build_quadratic_minimax(3, 3, 4, seed=3, constrained=True)
    cfg = ConfigNC(variant="semi", eta=0.01, eta_hat=0.1, S=2, T=2)
    result = solve_nc(prob, np.zeros(3), np.zeros(3), cfg)
    assert all(r.objective_kind == "surrogate" for r in result.trace)
    assert all(math.isnan(r.u_gap) for r in result.trace)
    assert np.abs(result.u_final).sum() <= 1.0 + 1e-9


def test_divergent_step_aborts_with_partial_trace():
    prob = build_quadratic_minimax(3, 3, 4, seed=0, lam=0.0)
    cfg = ConfigNC(variant="oracle", eta=1e6, eta_hat=0.0, S=0, T=200)
    with np.errstate(all="ignore"):
        with pytest.raises(NumericalAbort) as excinfo:
            solve_nc(prob, np.ones(3), np.zeros(3), cfg)
    assert excinfo.value.epoch >= 1
    assert excinfo.value.trace[0].t == 0


@pytest.mark.parametrize("variant,regime,S,heterogeneity", [
    ("full", "full-S1", 1, 0.0),
    ("full", None, "auto", 0.0),
    ("semi", None, "auto", 0.0),
    ("semi", None, "auto", 0.01),
])
def test_reaches_epsilon_stationarity(variant, regime, S, heterogeneity):
    epsilon = 0.05
    prob = build_quadratic_minimax(5, 5, 8, seed=0, heterogeneity=heterogeneity)
    cfg = ConfigNC(variant=variant, regime=regime, S=S, epsilon=epsilon, stop_tolerance=epsilon)
    result = solve_nc(prob, np.zeros(5), np.zeros(5), cfg)
    assert result.params is not None
    assert result.status == "stopped-early"
    selected = result.trace[result.selected]
    assert selected.grad_map_norm <= epsilon
    residual = kkt_residual_nc(prob, result.w_selected, result.eta)
    assert residual.within_bounds
    lipschitz = derive_constants_nc(prob).L_Phi0
    assert norm(residual.r_w) <= (1.0 + result.eta * lipschitz) * epsilon + 1e-12


def test_single_inner_epoch_potential_decrease():
    prob = build_quadratic_minimax(3, 3, 4, seed=0, heterogeneity=0.0)
    cfg = ConfigNC(variant="full", regime="full-S1", S=1, T=20, epsilon=0.05,
                   permutation_mode="identity", record_potential=True)
    result = solve_nc(prob, np.zeros(3), np.zeros(3), cfg)
    assert result.params.regime == "full-S1"
    assert all(r.potential >= -1e-12 for r in result.trace)
    assert result.trace[0].potential_slack is None
    assert all(r.potential_slack >= -1e-10 for r in result.trace[1:])


def test_potential_needs_the_oracle():
    prob = build_quadratic_minimax(3, 3, 4, seed=3, constrained=True)
    cfg = ConfigNC(variant="semi", eta=0.01, eta_hat=0.1, S=2, T=2, record_potential=True)
    with pytest.raises(ParameterError):
        solve_nc(prob, np.zeros(3), np.zeros(3), cfg)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
