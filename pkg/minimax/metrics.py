"""Stationarity and KKT diagnostics shared by both solvers."""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from minimax.errors import OracleUnavailable, ParameterError
from minimax.linalg import norm
from minimax.problem import (ProblemNC, ProblemNL, derive_constants_nc, derive_constants_nl,
                             full_F, full_grad_phi_gamma, full_gradu, full_gradw, full_Jt_vec,
                             lagrangian, psi_zero_nc, u_star)
from minimax.prox import ProxFn, SmoothingSpec, smoothed_argmax

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class GradMappingReport:
    g_w: np.ndarray
    norm_w: float
    eta_used: float
    g_u: Optional[np.ndarray] = None
    norm_u: Optional[float] = None
    label: str = "phi_gamma"


@dataclass(frozen=True, eq=False)
class KKTResidual:
    r_w: np.ndarray
    r_u: np.ndarray
    joint_norm: float
    w_bar: np.ndarray
    u_bar: np.ndarray
    bound_w: float
    bound_u: float
    exact_inner: bool = True

    @property
    def within_bounds(self) -> bool:
        slack = 1e-9 * max(1.0, self.bound_w)
        return norm(self.r_w) <= self.bound_w + slack and norm(self.r_u) <= self.bound_u + 1e-12


def _check_eta(eta: float):
    if not eta > 0:
        raise ParameterError(f"eta must be positive, got {eta}")


def grad_mapping_w(w, grad_phi, f: ProxFn, eta: float) -> np.ndarray:
    """G_eta(w) = (w - prox_{eta f}(w - eta grad_phi)) / eta"""
    _check_eta(eta)
    w = np.asarray(w, dtype=np.float64)
    return (w - f.prox(w - eta * np.asarray(grad_phi), eta)) / eta


def grad_mapping_u(u, grad_u, h: ProxFn, eta: float) -> np.ndarray:
    """Gradient mapping of the inner maximization; equals -grad_u when h = 0"""
    _check_eta(eta)
    u = np.asarray(u, dtype=np.float64)
    return (u - h.prox(u + eta * np.asarray(grad_u), eta)) / eta


def grad_mapping_report(w, grad_phi, f: ProxFn, eta: float, u=None, grad_u=None,
                        h: Optional[ProxFn] = None, eta_u: Optional[float] = None,
                        label: str = "phi_gamma") -> GradMappingReport:
    g_w = grad_mapping_w(w, grad_phi, f, eta)
    g_u = None
    if u is not None:
        g_u = grad_mapping_u(u, grad_u, h, eta_u if eta_u is not None else eta)
    return GradMappingReport(g_w=g_w, norm_w=norm(g_w), eta_used=eta,
                             g_u=g_u, norm_u=None if g_u is None else norm(g_u), label=label)


def _log_bounds(residual: KKTResidual, setting: str) -> KKTResidual:
    if residual.exact_inner and not residual.within_bounds:
        logger.warning("%s KKT residual (%.3g, %.3g) exceeds its bounds (%.3g, %.3g)", setting,
                       norm(residual.r_w), norm(residual.r_u), residual.bound_w, residual.bound_u)
    return residual


def kkt_residual_nl(prob: ProblemNL, w_hat, s: SmoothingSpec, eta: float) -> KKTResidual:
    """KKT pair built from one proximal gradient step on the smoothed problem"""
    _check_eta(eta)
    w_hat = np.asarray(w_hat, dtype=np.float64)
    grad_hat = full_grad_phi_gamma(prob, w_hat, s)
    w_bar = prob.f.prox(w_hat - eta * grad_hat, eta)
    u_bar = smoothed_argmax(full_F(prob, w_bar), prob.K, prob.h, s)
    grad_bar = full_Jt_vec(prob, w_bar, prob.K.matvec(u_bar))
    mapping = (w_hat - w_bar) / eta
    r_w = mapping + grad_bar - grad_hat
    r_u = -s.gamma * (u_bar - s.anchor_u)
    lipschitz = derive_constants_nl(prob, s.gamma).L_Phi_gamma
    residual = KKTResidual(
        r_w=r_w, r_u=r_u, joint_norm=float(np.sqrt(norm(r_w) ** 2 + norm(r_u) ** 2)),
        w_bar=w_bar, u_bar=u_bar,
        bound_w=(1.0 + eta * lipschitz) * norm(mapping), bound_u=s.gamma * s.grad_b_sup,
    )
    return _log_bounds(residual, "NL")


def kkt_residual_nc(prob: ProblemNC, w_hat, eta: float, inner_tol: Optional[float] = None) -> KKTResidual:
    """
    KKT pair for the strongly concave setting. Uses the u* oracle when the problem has one,
    otherwise inner solves to inner_tol; then r_u is the inner gradient-mapping residual.
    """
    _check_eta(eta)
    if prob.exact_u_star is None and inner_tol is None:
        raise OracleUnavailable("kkt_residual_nc needs a u* oracle or an inner tolerance")
    w_hat = np.asarray(w_hat, dtype=np.float64)
    u_hat, _ = u_star(prob, w_hat, inner_tol)
    grad_hat = full_gradw(prob, w_hat, u_hat)
    w_bar = prob.f.prox(w_hat - eta * grad_hat, eta)
    u_tilde, exact = u_star(prob, w_bar, inner_tol)
    if exact:
        u_bar, r_u = u_tilde, np.zeros(prob.q)
    else:
        c = prob.constants
        step = 2.0 / (c.L_u + c.mu_H + prob.h.strong_convexity)
        g_tilde = full_gradu(prob, w_bar, u_tilde)
        u_bar = prob.h.prox(u_tilde + step * g_tilde, step)
        r_u = (u_tilde - u_bar) / step + g_tilde - full_gradu(prob, w_bar, u_bar)
    mapping = (w_hat - w_bar) / eta
    r_w = mapping - grad_hat + full_gradw(prob, w_bar, u_bar)
    lipschitz = derive_constants_nc(prob).L_Phi0
    residual = KKTResidual(
        r_w=r_w, r_u=r_u, joint_norm=float(np.sqrt(norm(r_w) ** 2 + norm(r_u) ** 2)),
        w_bar=w_bar, u_bar=u_bar,
        bound_w=(1.0 + eta * lipschitz) * norm(mapping), bound_u=0.0, exact_inner=exact,
    )
    return _log_bounds(residual, "NC")


def select_output(trace: Sequence, rule: str = "argmin", rng: Optional[np.random.Generator] = None) -> int:
    """Index of the output epoch: earliest minimum of grad_map_norm, or uniform at random"""
    if len(trace) == 0:
        raise ParameterError("cannot select an output from an empty trace")
    norms = np.array([getattr(record, 'grad_map_norm', record) for record in trace], dtype=np.float64)
    if rule == "argmin":
        return int(np.argmin(np.where(np.isnan(norms), np.inf, norms)))
    if rule == "uniform":
        if rng is None:
            raise ParameterError("uniform output selection needs a random stream")
        return int(rng.integers(len(trace)))
    raise ParameterError(f"unknown output rule {rule!r}")


def potential_diag(prob: ProblemNC, w, u, lam: float) -> float:
    """V_lambda(w, u) = lambda (Psi_0(w) - Psi_0*) + Psi_0(w) - L(w, u)"""
    if prob.exact_u_star is None:
        raise OracleUnavailable("the potential diagnostic needs the u* oracle")
    psi = psi_zero_nc(prob, w)
    return lam * (psi - prob.constants.Psi0_lower_bound) + psi - lagrangian(prob, w, u)


def potential_drop_bound(eta: float, eta_hat: float, grad_map_norm: float, C_w: float, C_u: float) -> float:
    """Guaranteed decrease of V per single-inner-epoch iteration"""
    return eta / 8.0 * grad_map_norm ** 2 - C_w * eta ** 3 - C_u * eta_hat ** 3


def gradient_bound_slack(grad_phi_norm: float, grad_map_norm: float, Lambda0: float, Lambda1: float,
                      warn: bool = True) -> float:
    """Lambda0 ||G||^2 + Lambda1 - ||grad Phi||^2; negative means misdeclared constants"""
    slack = Lambda0 * grad_map_norm ** 2 + Lambda1 - grad_phi_norm ** 2
    if warn and slack < -1e-9 * max(1.0, grad_phi_norm ** 2):
        logger.warning("gradient-mapping bound violated: ||grad Phi||^2 = %.4g exceeds %.4g",
                       grad_phi_norm ** 2, Lambda0 * grad_map_norm ** 2 + Lambda1)
    return slack
