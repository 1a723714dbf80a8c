"""
Alternating shuffling proximal gradient method for the strongly concave setting

    min_w max_u  f(w) + (1/n) sum_i H_i(w, u) - h(u)

Every epoch first refreshes the dual estimate with S inner epochs (gradient ascent for the
semi-shuffling variant, shuffled ascent for the full variant) and then takes one shuffled
descent epoch on w followed by prox_{eta f}.
"""
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Union

import numpy as np

from minimax.errors import NumericalAbort, ParameterError, UnsatisfiableParameters
from minimax.estimators import PermutationMode, StreamFactory, hyper_gradient_nc, sample_permutations
from minimax.linalg import as_dense, norm
from minimax.metrics import (grad_mapping_u, grad_mapping_w, potential_diag, potential_drop_bound,
                             select_output)
from minimax.problem import (ConstantsNC, ProblemNC, derive_constants_nc, full_gradu, full_gradw,
                             lagrangian, psi_zero_nc, u_star)

logger = logging.getLogger(__name__)

VARIANTS = ("semi", "full", "oracle")
REGIMES = ("semi", "semi-one-epoch", "full-muH", "full-muh", "full-S1")
SEMI_REGIMES = ("semi", "semi-one-epoch")
FULL_REGIMES = ("full-muH", "full-muh", "full-S1")
LN_SEVEN_HALVES = math.log(3.5)
STEP_SLACK = 1e-12


@dataclass
class ConfigNC:
    variant: str = "semi"
    regime: Optional[str] = None
    eta: Union[float, str] = "auto"
    eta_hat: Union[float, str] = "auto"
    S: Union[int, str] = "auto"
    T: Union[int, str] = "auto"
    epsilon: float = 0.05
    permutation_mode: str = PermutationMode.RANDOM_INDEPENDENT.value
    seed: int = 0
    omega: float = 1.0
    s: float = 0.9
    eta_hat_multiplier: float = 15.0
    output_rule: str = "argmin"
    stop_tolerance: Optional[float] = None
    inner_tol: float = 1e-10
    record_objective: bool = True
    fixed_permutations: Optional[tuple] = None
    record_potential: bool = False
    potential_weight: float = 3.0

    def resolved_regime(self, prob: ProblemNC) -> Optional[str]:
        """Explicit regime, or the one implied by the variant, S and the available moduli"""
        if self.variant == "oracle":
            return None
        if self.regime is not None:
            return self.regime
        if self.variant == "semi":
            return "semi"
        if self.S == 1:
            return "full-S1"
        if prob.constants.mu_H > 0:
            return "full-muH"
        if prob.h.strong_convexity > 0:
            return "full-muh"
        raise UnsatisfiableParameters("no strongly concave component: mu_H and mu_h are both zero")

    def validate(self, prob: ProblemNC):
        errors = []
        if self.variant not in VARIANTS:
            errors.append(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.regime is not None:
            if self.regime not in REGIMES:
                errors.append(f"regime must be one of {REGIMES}, got {self.regime!r}")
            elif self.variant == "semi" and self.regime not in SEMI_REGIMES:
                errors.append(f"regime {self.regime} does not belong to the semi variant")
            elif self.variant == "full" and self.regime not in FULL_REGIMES:
                errors.append(f"regime {self.regime} does not belong to the full variant")
        for name in ("eta", "eta_hat"):
            value = getattr(self, name)
            if value != "auto" and not (isinstance(value, (int, float)) and value >= 0):
                errors.append(f"{name} must be non-negative or 'auto', got {value!r}")
        if self.S != "auto" and not (isinstance(self.S, int) and self.S >= 0):
            errors.append(f"S must be a non-negative integer or 'auto', got {self.S!r}")
        if self.T != "auto" and not (isinstance(self.T, int) and self.T >= 0):
            errors.append(f"T must be a non-negative integer or 'auto', got {self.T!r}")
        if "auto" in (self.eta, self.eta_hat, self.S, self.T):
            if self.variant == "oracle":
                errors.append("the oracle variant needs explicit eta and T")
            if not self.epsilon > 0:
                errors.append("auto parameters need epsilon > 0")
        if self.regime == "full-S1" and self.S not in ("auto", 1):
            errors.append("regime full-S1 runs exactly one inner epoch")
        if self.variant == "oracle" and prob.exact_u_star is None:
            errors.append(f"{prob.name} has no u* oracle for the oracle variant")
        if not self.omega > 0:
            errors.append("omega must be positive")
        if not 0.0 < self.s < 1.0:
            errors.append("s must lie in (0, 1)")
        if not self.eta_hat_multiplier > 0:
            errors.append("eta_hat_multiplier must be positive")
        if self.record_potential:
            if not self.potential_weight >= 0:
                errors.append("potential_weight must be non-negative")
            if prob.exact_u_star is None:
                errors.append(f"{prob.name} has no u* oracle for the potential")
        if self.output_rule not in ("argmin", "uniform"):
            errors.append("output_rule must be 'argmin' or 'uniform'")
        try:
            PermutationMode(self.permutation_mode)
        except ValueError:
            errors.append(f"unknown permutation mode {self.permutation_mode!r}")
        c = prob.constants
        if self.regime == "full-S1" or (self.variant == "full" and self.S == 1):
            if not all(math.isfinite(v) for v in (c.Lambda0_hat, c.Lambda1_hat, c.L_f)):
                errors.append("single-epoch full shuffling needs Lambda0_hat, Lambda1_hat and L_f")
        if errors:
            raise ParameterError("; ".join(errors))


@dataclass
class EpochRecordNC:
    t: int
    objective: float
    objective_kind: str
    grad_map_norm_w: float
    grad_map_norm_u: float
    u_gap: float
    gradw_evals: int
    gradu_evals: int
    wall_time: float
    potential: Optional[float] = None
    potential_slack: Optional[float] = None

    @property
    def grad_map_norm(self) -> float:
        return self.grad_map_norm_w


@dataclass
class NCParams:
    eta: float
    eta_hat: float
    S: int
    T: int
    regime: str
    omega: float
    C_w: float
    C_u: float
    eta_bar: float
    gap: float
    inner_gap_sq: float
    gap_is_upper_estimate: bool
    notes: dict = field(default_factory=dict)


@dataclass
class NCResult:
    w_final: np.ndarray
    u_final: np.ndarray
    trace: List[EpochRecordNC]
    selected: int
    w_selected: np.ndarray
    eta: float
    eta_hat: float
    S: int
    T: int
    params: Optional[NCParams] = None
    status: str = "completed"


def _finite_dual(u: np.ndarray, prob: ProblemNC, epoch: int) -> np.ndarray:
    if not np.all(np.isfinite(u)):
        logger.error("non-finite dual iterate in epoch %d of %s", epoch, prob.name)
        raise NumericalAbort("non-finite dual iterate", epoch, [])
    return u


def inner_gradient_ascent(prob: ProblemNC, w, u0, eta_hat: float, S: int, epoch: int = 0) -> np.ndarray:
    """S steps of u <- prox_{eta_hat h}(u + eta_hat grad_u H(w, u))"""
    c = prob.constants
    limit = 2.0 / (c.L_u + c.mu_H)
    if not 0.0 < eta_hat <= limit * (1.0 + STEP_SLACK):
        raise ParameterError(f"gradient ascent needs 0 < eta_hat <= 2/(L_u + mu_H) = {limit:.6g}, got {eta_hat}")
    if S < 0:
        raise ParameterError(f"S must be non-negative, got {S}")
    w = as_dense(w, prob.p, "w")
    u = as_dense(u0, prob.q, "u0").copy()
    for _ in range(S):
        u = prob.h.prox(_finite_dual(u + eta_hat * full_gradu(prob, w, u), prob, epoch), eta_hat)
    return u


def inner_shuffling_ascent(prob: ProblemNC, w, u0, eta_hat: float, S: int,
                           rng: np.random.Generator, epoch: int = 0) -> np.ndarray:
    """
    S shuffled ascent epochs. Each draws a fresh permutation from rng, steps through the
    components with eta_hat / n and ends with prox_{eta_hat h}.
    """
    if eta_hat < 0:
        raise ParameterError(f"eta_hat must be non-negative, got {eta_hat}")
    if S < 1:
        raise ParameterError(f"shuffled ascent needs S >= 1, got {S}")
    w = as_dense(w, prob.p, "w")
    u = as_dense(u0, prob.q, "u0").copy()
    n = prob.n
    for _ in range(S):
        for i in rng.permutation(n):
            u = u + (eta_hat / n) * prob.eval_gradu_H_i(int(i), w, u)
        u = prob.h.prox(_finite_dual(u, prob, epoch), eta_hat)
    return u


def gradient_ascent_bound(constants: ConstantsNC, mu_h: float, eta_hat: float, S: int,
                          dist0_sq: float) -> float:
    """Right-hand side of ||u_S - u*||^2 <= rho^S ||u_0 - u*||^2 for gradient ascent"""
    L_u, mu_H = constants.L_u, constants.mu_H
    rho = (1.0 - 2.0 * L_u * mu_H * eta_hat / (L_u + mu_H)) / (1.0 + 2.0 * mu_h * eta_hat)
    return rho ** S * dist0_sq


def shuffling_ascent_bound(constants: ConstantsNC, mu_h: float, n: int, eta_hat: float, S: int,
                           dist0_sq: float, grad_phi_norm: float) -> float:
    """Geometric contraction plus the O(eta_hat^3) shuffling noise after S inner epochs"""
    a = 1.0 / (1.0 + 2.0 * mu_h * eta_hat)
    b = 1.0 - constants.mu_H * eta_hat / n
    inner = sum(a * b ** j for j in range(n))
    outer = sum(a ** s * b ** (n * s) for s in range(S))
    noise = ((constants.Theta_u + 1.0) * grad_phi_norm ** 2 + constants.sigma_u ** 2)
    return a ** S * b ** (n * S) * dist0_sq + 2.0 * constants.L_u / n * inner * outer * eta_hat ** 3 * noise


def semi_inner_epochs(eta: float, eta_hat: float, omega: float, constants: ConstantsNC,
                      mu_h: float, kappa: float) -> int:
    """S = floor(M_omega(eta) / (2 eta_hat) / (mu_h + 4 mu_H L_u / (L_u + mu_H))), at least 1"""
    L_u, L_w, mu_H = constants.L_u, constants.L_w, constants.mu_H
    M = 1.0 / omega + (omega * L_u ** 2 * kappa ** 2 + 2.0 * L_w ** 2 / omega) * eta ** 2
    rate = mu_h + 4.0 * mu_H * L_u / (L_u + mu_H)
    if rate <= 0:
        raise UnsatisfiableParameters("no strongly concave component: mu_H and mu_h are both zero")
    return max(1, math.floor(M / (2.0 * eta_hat) / rate))


def full_inner_epochs(mu: float, eta_hat: float) -> int:
    """S = floor(ln(7/2) / (mu eta_hat)), at least 1"""
    if not mu > 0:
        raise UnsatisfiableParameters("no strongly concave component for the inner epoch count")
    return max(1, math.floor(LN_SEVEN_HALVES / (mu * eta_hat)))


def coupled_eta_hat(kappa: float, eta: float, multiplier: float = 15.0) -> float:
    return multiplier * kappa ** 2 * eta


def epochs_for_average(lead: float, eta: float, epsilon: float, noise: float) -> int:
    """Smallest T with lead / (eta (T+1)) + noise <= epsilon^2"""
    room = epsilon ** 2 - noise
    if room <= 0:
        raise UnsatisfiableParameters(f"step noise {noise:.4g} leaves no room below epsilon^2 = {epsilon ** 2:.4g}")
    if eta <= 0:
        raise UnsatisfiableParameters("the epoch count needs a positive step")
    return max(1, math.ceil(lead / (eta * room)) - 1)


def _step_for_epsilon(bound: float, s: float, epsilon: float, C: float) -> float:
    """min(0.9 bound, s eps / (4 sqrt(C)))"""
    eta = 0.9 * bound
    if C > 0:
        eta = min(eta, s * epsilon / (4.0 * math.sqrt(C)))
    return eta


def _explicit(value, cast):
    return None if value == "auto" else cast(value)


def auto_params_nc(prob: ProblemNC, cfg: ConfigNC, w0=None, u0=None) -> NCParams:
    """
    Step sizes, inner epochs and outer epochs for the configured regime. Explicit values in
    cfg are kept and the remaining ones are derived around them.
    """
    if not cfg.epsilon > 0:
        raise ParameterError(f"epsilon must be positive, got {cfg.epsilon}")
    regime = cfg.resolved_regime(prob)
    if regime is None:
        raise ParameterError("the oracle variant has no automatic parameters")
    c = prob.constants
    derived = derive_constants_nc(prob)
    kappa, L_Phi0 = derived.kappa, derived.L_Phi0
    mu_h, mu_H = prob.h.strong_convexity, c.mu_H
    L_u, L_w = c.L_u, c.L_w
    eps, s = cfg.epsilon, cfg.s

    w0 = np.zeros(prob.p) if w0 is None else as_dense(w0, prob.p, "w0")
    u0 = np.zeros(prob.q) if u0 is None else as_dense(u0, prob.q, "u0")
    u_start, exact = u_star(prob, w0, cfg.inner_tol)
    psi_start = psi_zero_nc(prob, w0, cfg.inner_tol)
    gap = max(psi_start - c.Psi0_lower_bound, 0.0)
    inner_gap_sq = norm(u0 - u_start) ** 2
    upper_estimate = not (c.Psi0_bound_is_exact and exact)
    if upper_estimate:
        logger.info("Psi_0* is a declared lower bound, so T is an upper estimate")

    eta_in = _explicit(cfg.eta, float)
    eta_hat_in = _explicit(cfg.eta_hat, float)
    S_in = _explicit(cfg.S, int)
    omega = cfg.omega
    notes = {}

    if regime in SEMI_REGIMES:
        eta_hat = eta_hat_in if eta_hat_in is not None else 2.0 / (L_u + mu_H)
        C0 = 2.0 * c.Lambda0 * L_w ** 2 * (3.0 * c.Theta_w + 1.0)
        C_w = L_w ** 2 * (3.0 * c.Theta_w + 1.0) * c.Lambda1 + 3.0 * L_w ** 2 * c.sigma_w ** 2
        C_u = 0.0
        if regime == "semi-one-epoch":
            B0 = eta_hat * (mu_h + 4.0 * mu_H * L_u / (L_u + mu_H))
            omega = 1.0 / B0
            eta_bar = min(1.0 / (2.0 * math.sqrt(C0)), 1.0 / (4.0 * L_Phi0),
                          B0 / math.sqrt(L_u ** 2 * kappa ** 2 + 2.0 * B0 ** 2 * L_w ** 2))
            notes["B0"] = B0
        else:
            eta_bar = min(1.0 / (2.0 * math.sqrt(C0)), 1.0 / (4.0 * L_Phi0),
                          1.0 / (2.0 * omega * L_u * kappa))
        eta = eta_in if eta_in is not None else _step_for_epsilon(eta_bar, s, eps, C_w)
        S = S_in if S_in is not None else semi_inner_epochs(eta, eta_hat, omega, c, mu_h, kappa)
        lead = 4.0 * (2.0 * gap + omega * L_u ** 2 * eta * inner_gap_sq)
        noise = 8.0 * C_w * eta ** 2
        notes["C0"] = C0
    elif regime in ("full-muH", "full-muh"):
        mu = mu_H if regime == "full-muH" else mu_h
        if not mu > 0:
            raise UnsatisfiableParameters(f"regime {regime} needs a positive modulus")
        eta_hat_bar = math.sqrt(mu) / (2.0 * math.sqrt(14.0 * c.Lambda0 * L_u ** 3 * (c.Theta_u + 1.0)))
        eta_hat = eta_hat_in if eta_hat_in is not None else min(eta_hat_bar, 1.0 / L_u)
        eta_bar = min(1.0 / (4.0 * L_w * math.sqrt(2.0 * c.Lambda0 * (c.Theta_w + 1.0))),
                      1.0 / (4.0 * L_Phi0), 1.0 / (2.0 * L_w), 1.0 / (2.0 * L_u * kappa))
        C_w = L_w ** 2 * ((3.0 * c.Theta_w + 1.0) * c.Lambda1 + 3.0 * c.sigma_w ** 2)
        C_u = 7.0 * L_u ** 3 / (2.0 * mu) * (c.Lambda1 * (c.Theta_u + 1.0) + c.sigma_u ** 2)
        eta = eta_in if eta_in is not None else _step_for_epsilon(eta_bar, s, eps, C_w + C_u)
        S = S_in if S_in is not None else full_inner_epochs(mu, eta_hat)
        lead = 4.0 * (2.0 * gap + L_u ** 2 * eta * inner_gap_sq)
        noise = 8.0 * (C_w + C_u) * eta ** 2
        notes["eta_hat_bar"] = eta_hat_bar
    else:
        m = cfg.eta_hat_multiplier
        mu_psi = mu_H + mu_h
        eta_bar = min(
            1.0 / (4.0 * m * kappa ** 2 * L_u),
            1.0 / math.sqrt(10.0 * c.Lambda0 * L_w ** 2 * (3.0 * c.Theta_w + 1.0)),
            2.0 * math.sqrt(L_u) / (kappa * math.sqrt(m * (4.0 * L_u ** 2 + mu_psi ** 2))),
            math.sqrt(L_u) / (m * kappa * math.sqrt(
                2.0 * L_u ** 3 * c.Lambda0_hat * (3.0 * c.Theta_u + 2.0) + mu_psi ** 2)),
            1.0 / (4.0 * L_Phi0 + L_w + c.L_f),
        )
        C_w = 5.0 * L_w ** 2 * (c.Lambda1 * (3.0 * c.Theta_w + 1.0) + 3.0 * c.sigma_w ** 2)
        C_u = L_u ** 2 / 2.0 * (c.Lambda1_hat * (3.0 * c.Theta_u + 2.0) + 3.0 * c.sigma_u ** 2)
        coupling = C_w + C_u * (m * kappa ** 2) ** 3
        eta = eta_in if eta_in is not None else _step_for_epsilon(eta_bar, s, eps, coupling)
        eta_hat = eta_hat_in if eta_hat_in is not None else coupled_eta_hat(kappa, eta, m)
        S = 1
        dual_gap = max(psi_start - lagrangian(prob, w0, u0), 0.0)
        lead = 24.0 * gap + 8.0 * dual_gap
        noise = 8.0 * C_w * eta ** 2 + (8.0 * C_u * eta_hat ** 3 / eta if eta > 0 else math.inf)
        notes["dual_gap"] = dual_gap

    if eta_in is None and eta < 0.9 * eta_bar:
        logger.info("epsilon %.3g binds the step: eta = %.4g below 0.9 eta_bar = %.4g", eps, eta, 0.9 * eta_bar)
    T = _explicit(cfg.T, int)
    if T is None:
        T = epochs_for_average(lead, eta, eps, noise)
    logger.info("regime %s: eta=%.4g eta_hat=%.4g S=%d T=%d", regime, eta, eta_hat, S, T)
    return NCParams(eta=eta, eta_hat=eta_hat, S=S, T=T, regime=regime, omega=omega, C_w=C_w, C_u=C_u,
                    eta_bar=eta_bar, gap=gap, inner_gap_sq=inner_gap_sq,
                    gap_is_upper_estimate=upper_estimate, notes=notes)


class _EpochLogNC:
    def __init__(self, prob: ProblemNC, cfg: ConfigNC, eta: float, eta_hat: float,
                 on_epoch: Optional[Callable], params: Optional[NCParams] = None):
        self.prob = prob
        self.cfg = cfg
        self.eta = eta
        self.eta_hat = eta_hat
        self.params = params
        self.metric_eta = eta if eta > 0 else 1.0
        self.metric_eta_hat = eta_hat if eta_hat > 0 else 1.0
        self.on_epoch = on_epoch
        self.trace: List[EpochRecordNC] = []
        self.iterates: List[np.ndarray] = []
        self.gradw_evals = 0
        self.gradu_evals = 0

    def guard(self, x: np.ndarray, t: int):
        if not np.all(np.isfinite(x)):
            logger.error("non-finite iterate in epoch %d of %s", t, self.prob.name)
            raise NumericalAbort("non-finite iterate", t, self.trace)

    def _potential(self, t: int, w: np.ndarray, u: np.ndarray):
        """V at (w_t, u_t) and, for single-inner-epoch full shuffling, its drop minus the guaranteed drop"""
        if not self.cfg.record_potential:
            return None, None
        potential = potential_diag(self.prob, w, u, self.cfg.potential_weight)
        params = self.params
        if params is None or params.regime != "full-S1" or not self.trace:
            return potential, None
        prev = self.trace[-1]
        guaranteed = potential_drop_bound(self.eta, self.eta_hat, prev.grad_map_norm_w, params.C_w, params.C_u)
        slack = (prev.potential - potential) - guaranteed
        if slack < -1e-10 * max(1.0, abs(prev.potential)):
            logger.warning("potential drop %.4g in epoch %d is below the guaranteed %.4g",
                           prev.potential - potential, t, guaranteed)
        return potential, slack

    def record(self, t: int, w: np.ndarray, u: np.ndarray, u_gap: float, started: float) -> EpochRecordNC:
        prob = self.prob
        try:
            u_w, exact = u_star(prob, w, self.cfg.inner_tol)
            grad_map = norm(grad_mapping_w(w, full_gradw(prob, w, u_w), prob.f, self.metric_eta))
            grad_map_u = norm(grad_mapping_u(u, full_gradu(prob, w, u), prob.h, self.metric_eta_hat))
        except ParameterError as e:
            # overflow reached a prox input
            raise NumericalAbort(str(e), t, self.trace) from e
        if not self.cfg.record_objective:
            objective, kind = math.nan, "none"
        elif exact:
            objective, kind = psi_zero_nc(prob, w), "psi0"
        else:
            objective, kind = lagrangian(prob, w, u), "surrogate"
        if not math.isfinite(grad_map):
            raise NumericalAbort("non-finite gradient mapping", t, self.trace)
        potential, slack = self._potential(t, w, u)
        record = EpochRecordNC(t=t, objective=objective, objective_kind=kind, grad_map_norm_w=grad_map,
                               grad_map_norm_u=grad_map_u, u_gap=u_gap, gradw_evals=self.gradw_evals,
                               gradu_evals=self.gradu_evals, wall_time=time.perf_counter() - started,
                               potential=potential, potential_slack=slack)
        self.trace.append(record)
        self.iterates.append(w.copy())
        if self.on_epoch is not None:
            self.on_epoch(record)
        return record


def _resolve_params_nc(prob: ProblemNC, w0, u0, cfg: ConfigNC):
    if "auto" in (cfg.eta, cfg.eta_hat, cfg.S, cfg.T):
        params = auto_params_nc(prob, cfg, w0, u0)
        return params.eta, params.eta_hat, params.S, params.T, params
    return float(cfg.eta), float(cfg.eta_hat), int(cfg.S), int(cfg.T), None


def _oracle_gap(prob: ProblemNC, u: np.ndarray, w: np.ndarray) -> float:
    if prob.exact_u_star is None:
        return math.nan
    return norm(u - np.asarray(prob.exact_u_star(w), dtype=np.float64))


def solve_nc(prob: ProblemNC, w0, u0, cfg: ConfigNC, on_epoch: Optional[Callable] = None) -> NCResult:
    """
    Run T epochs of the alternating method.

    Epoch t computes u_t from u_{t-1} at w_{t-1} with the configured inner routine, then takes n
    shuffled steps w <- w - (eta/n) grad_w H_{pi_hat(i)}(w, u_t) and applies prox_{eta f}.
    The oracle variant replaces the inner routine with the closed-form maximizer.
    Epoch 0 of the trace is the starting point.
    """
    cfg.validate(prob)
    w = as_dense(w0, prob.p, "w0").copy()
    u = as_dense(u0, prob.q, "u0").copy()
    streams = StreamFactory(cfg.seed)
    eta, eta_hat, S, T, params = _resolve_params_nc(prob, w, u, cfg)
    if cfg.variant == "full" and S < 1:
        raise ParameterError("the full variant needs at least one inner epoch")
    n = prob.n
    log = _EpochLogNC(prob, cfg, eta, eta_hat, on_epoch, params)
    log.record(0, w, u, _oracle_gap(prob, u, w), time.perf_counter())
    stopped = False

    for t in range(1, T + 1):
        started = time.perf_counter()
        try:
            if cfg.variant == "semi":
                u_next = inner_gradient_ascent(prob, w, u, eta_hat, S, t)
                log.gradu_evals += S * n
            elif cfg.variant == "full":
                u_next = inner_shuffling_ascent(prob, w, u, eta_hat, S, streams.stream('inner', t), t)
                log.gradu_evals += S * n
            else:
                u_next = np.asarray(prob.exact_u_star(w), dtype=np.float64)
        except NumericalAbort as e:
            raise NumericalAbort("non-finite dual iterate", t, log.trace) from e
        log.guard(u_next, t)
        u_gap = _oracle_gap(prob, u_next, w)
        u = u_next

        perms = sample_permutations(n, cfg.permutation_mode, streams, t, cfg.fixed_permutations)
        for i in perms.pi_hat:
            w = w - (eta / n) * hyper_gradient_nc(prob, int(i), w, u)
            log.gradw_evals += 1
            log.guard(w, t)
        w = prob.f.prox(w, eta)
        log.guard(w, t)

        record = log.record(t, w, u, u_gap, started)
        if cfg.stop_tolerance is not None and record.grad_map_norm_w <= cfg.stop_tolerance:
            stopped = True
            break

    selected = select_output(log.trace, cfg.output_rule, streams.stream('output'))
    return NCResult(w_final=w, u_final=u, trace=log.trace, selected=selected,
                    w_selected=log.iterates[selected], eta=eta, eta_hat=eta_hat, S=S, T=T,
                    params=params, status="stopped-early" if stopped else "completed")
