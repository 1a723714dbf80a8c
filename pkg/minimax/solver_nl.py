"""
Shuffling proximal gradient method for the smoothed nonconvex-linear problem

    min_w  phi_gamma(F(w)) + f(w)

plus the compositional SGD baseline and the step-size / epoch calculator.
"""
import logging
import math
import time
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, List, Optional, Union

import numpy as np

from minimax.errors import NumericalAbort, ParameterError, UnsatisfiableParameters
from minimax.estimators import (Option1State, PermutationMode, StreamFactory, estimate_F_option1,
                                estimate_F_option2, estimator_bound_slack, hyper_gradient_nl,
                                sample_permutations)
from minimax.linalg import as_dense, norm
from minimax.metrics import grad_mapping_w, gradient_bound_slack, select_output
from minimax.problem import (DerivedConstants, ProblemNL, derive_constants_nl, full_grad_phi_gamma,
                             psi_gamma, psi_zero)
from minimax.prox import SmoothingSpec, smoothed_conjugate_grad, smoothing_spec

logger = logging.getLogger(__name__)

GAMMA_SCHEDULES = ("constant", "decreasing")


def decreasing_gamma(t: int) -> float:
    return 1.0 / (2.0 * (t + 1) ** (1.0 / 3.0))


@dataclass
class ConfigNL:
    eta: Union[float, str] = "auto"
    T: Union[int, str] = "auto"
    epsilon: float = 0.1
    gamma: float = 0.5
    gamma_schedule: str = "constant"
    option: int = 1
    permutation_mode: str = PermutationMode.RANDOM_INDEPENDENT.value
    seed: int = 0
    record_objective: bool = True
    output_rule: str = "argmin"
    fixed_permutations: Optional[tuple] = None
    check_estimator: bool = False
    stop_tolerance: Optional[float] = None
    tracking_weight: float = 0.5

    def validate(self, prob: ProblemNL):
        errors = []
        if self.eta != "auto" and not (isinstance(self.eta, (int, float)) and self.eta >= 0):
            errors.append(f"eta must be non-negative or 'auto', got {self.eta!r}")
        if self.T != "auto" and not (isinstance(self.T, int) and self.T >= 0):
            errors.append(f"T must be a non-negative integer or 'auto', got {self.T!r}")
        if "auto" in (self.eta, self.T) and not self.epsilon > 0:
            errors.append("auto parameters need epsilon > 0")
        if self.gamma_schedule not in GAMMA_SCHEDULES:
            errors.append(f"gamma_schedule must be one of {GAMMA_SCHEDULES}")
        if self.gamma_schedule == "constant" and self.gamma <= 0 and prob.h.strong_convexity <= 0:
            errors.append("h is not strongly convex, so gamma must be positive")
        if self.option not in (1, 2):
            errors.append("option must be 1 or 2")
        if self.output_rule not in ("argmin", "uniform"):
            errors.append("output_rule must be 'argmin' or 'uniform'")
        if not 0.0 < self.tracking_weight <= 1.0:
            errors.append("tracking_weight must be in (0, 1]")
        try:
            PermutationMode(self.permutation_mode)
        except ValueError:
            errors.append(f"unknown permutation mode {self.permutation_mode!r}")
        if errors:
            raise ParameterError("; ".join(errors))

    def gamma_at(self, t: int) -> float:
        return decreasing_gamma(t) if self.gamma_schedule == "decreasing" else self.gamma


@dataclass
class EpochRecordNL:
    t: int
    gamma: float
    psi_gamma: float
    grad_map_norm: float
    f_evals: int
    jac_evals: int
    wall_time: float
    estimator_slack: Optional[float] = None
    gradient_bound_slack: Optional[float] = None


@dataclass
class NLParams:
    eta: float
    T: int
    capped: bool
    A: float
    gap: float
    Q_gamma: float
    gap_is_upper_estimate: bool


@dataclass
class NLResult:
    w_final: np.ndarray
    trace: List[EpochRecordNL]
    selected: int
    w_selected: np.ndarray
    eta: float
    T: int
    params: Optional[NLParams] = None
    status: str = "completed"


def rate_step_and_epochs(Q: float, A: float, gap: float, epsilon: float, scale: float = 1.0):
    """
    eta = scale * eps / sqrt(2 Q A) capped at 1/(8Q), and
    T = floor(16 max{sqrt(Q A) / (scale eps^3), 4Q / eps^2} gap).

    A = 0 leaves only the eps^-2 branch with the capped step. Returns (eta, T, capped).
    """
    cap = 1.0 / (8.0 * Q)
    if A == 0:
        eta, capped = cap, True
    else:
        eta = scale * epsilon / math.sqrt(2.0 * Q * A)
        capped = eta > cap
        if capped:
            logger.warning("epsilon %.3g gives eta %.4g above 1/(8Q) = %.4g; capping", epsilon, eta, cap)
            eta = cap
    rate = max(math.sqrt(Q * A) / (scale * epsilon ** 3), 4.0 * Q / epsilon ** 2)
    # absorb representation error of decimal epsilons before flooring
    return eta, max(1, math.floor(16.0 * rate * gap * (1.0 + 1e-12))), capped


def auto_params_nl(prob: ProblemNL, s: SmoothingSpec, epsilon: float, mode: str = "deterministic",
                   w0=None) -> NLParams:
    """
    Step size and epoch count that drive the averaged squared gradient mapping below epsilon^2.

    mode "random" applies to independently reshuffled permutations and gains the sqrt(n) factors.
    """
    if not epsilon > 0:
        raise ParameterError(f"epsilon must be positive, got {epsilon}")
    if mode not in ("deterministic", "random"):
        raise ParameterError(f"mode must be 'deterministic' or 'random', got {mode!r}")
    c = prob.constants
    derived = derive_constants_nl(prob, s.gamma)
    Q = derived.Q_gamma
    K = prob.K.norm_bound
    M_h = prob.h.domain_bound
    if M_h is None and c.sigma_J > 0:
        raise UnsatisfiableParameters("auto parameters need a bounded dom h when sigma_J > 0")
    variance = 0.0 if c.sigma_J == 0 else 4.0 * M_h ** 2 * K ** 2 * c.sigma_J ** 2
    n = prob.n
    scale = math.sqrt(n) if mode == "random" else 1.0
    A = variance + (n * c.Lambda1 if mode == "random" else c.Lambda1)

    w0 = np.zeros(prob.p) if w0 is None else as_dense(w0, prob.p, "w0")
    start = psi_zero(prob, w0)
    upper_estimate = not c.Psi0_bound_is_exact
    if not math.isfinite(start):
        start = psi_gamma(prob, w0, s) + s.gamma * s.b_sup
        upper_estimate = True
    gap = max(start - c.Psi0_lower_bound, 0.0) + s.gamma * s.b_sup
    if upper_estimate:
        logger.info("Psi_0* is a declared lower bound, so T = epochs is an upper estimate")

    eta, T, capped = rate_step_and_epochs(Q, A, gap, epsilon, scale)
    return NLParams(eta=eta, T=T, capped=capped, A=A, gap=gap, Q_gamma=Q,
                    gap_is_upper_estimate=upper_estimate)


def descent_bound_nl(psi_prev: float, grad_map_prev: float, eta: float, derived: DerivedConstants,
                     sigma_J: float, Lambda1: float) -> float:
    """Upper bound on Psi_gamma after one epoch with the rate-derived step size"""
    noise = 2.0 * derived.L_Psi * (2.0 * derived.C2 * sigma_J ** 2 + Lambda1) * eta ** 3
    return psi_prev - eta / 4.0 * grad_map_prev ** 2 + noise


class _EpochLog:
    """Shared bookkeeping: records, iterates, oracle counters and the abort guard"""

    def __init__(self, prob: ProblemNL, cfg: ConfigNL, spec: SmoothingSpec, eta: float,
                 on_epoch: Optional[Callable]):
        self.prob = prob
        self.cfg = cfg
        self.spec = spec
        self.metric_eta = eta if eta > 0 else 1.0
        self.on_epoch = on_epoch
        self.trace: List[EpochRecordNL] = []
        self.iterates: List[np.ndarray] = []
        self.f_evals = 0
        self.jac_evals = 0
        self.bound_warned = False

    def guard(self, w: np.ndarray, t: int):
        if not np.all(np.isfinite(w)):
            logger.error("non-finite iterate in epoch %d of %s", t, self.prob.name)
            raise NumericalAbort("non-finite iterate", t, self.trace)

    @contextmanager
    def overflow_guard(self, t: int):
        try:
            yield
        except ParameterError as e:
            # overflow reached a prox or conjugate input
            raise NumericalAbort(str(e), t, self.trace) from e

    def record(self, t: int, w: np.ndarray, started: float, slack: Optional[float] = None) -> EpochRecordNL:
        spec = self.spec.with_gamma(self.cfg.gamma_at(t))
        with self.overflow_guard(t):
            grad = full_grad_phi_gamma(self.prob, w, spec)
            grad_map = norm(grad_mapping_w(w, grad, self.prob.f, self.metric_eta))
            objective = psi_gamma(self.prob, w, spec) if self.cfg.record_objective else math.nan
        if not math.isfinite(grad_map):
            raise NumericalAbort("non-finite gradient mapping", t, self.trace)
        c = self.prob.constants
        bound_slack = gradient_bound_slack(norm(grad), grad_map, c.Lambda0, c.Lambda1, warn=not self.bound_warned)
        # one warning per run
        self.bound_warned = self.bound_warned or bound_slack < 0
        record = EpochRecordNL(t=t, gamma=spec.gamma, psi_gamma=objective, grad_map_norm=grad_map,
                               f_evals=self.f_evals, jac_evals=self.jac_evals,
                               wall_time=time.perf_counter() - started, estimator_slack=slack,
                               gradient_bound_slack=bound_slack)
        self.trace.append(record)
        self.iterates.append(w.copy())
        if self.on_epoch is not None:
            self.on_epoch(record)
        return record

    def should_stop(self, record: EpochRecordNL) -> bool:
        tol = self.cfg.stop_tolerance
        return tol is not None and record.grad_map_norm <= tol

    def result(self, w, streams: StreamFactory, eta, T, params, stopped) -> NLResult:
        selected = select_output(self.trace, self.cfg.output_rule, streams.stream('output'))
        return NLResult(w_final=w, trace=self.trace, selected=selected,
                        w_selected=self.iterates[selected], eta=eta, T=T, params=params,
                        status="stopped-early" if stopped else "completed")


def _resolve_params(prob, w0, cfg: ConfigNL, spec: SmoothingSpec):
    params = None
    if "auto" in (cfg.eta, cfg.T):
        random_mode = cfg.permutation_mode in (PermutationMode.RANDOM_INDEPENDENT.value,
                                               PermutationMode.RANDOM_SHARED.value)
        params = auto_params_nl(prob, spec, cfg.epsilon, "random" if random_mode else "deterministic", w0)
    eta = params.eta if cfg.eta == "auto" else float(cfg.eta)
    T = params.T if cfg.T == "auto" else int(cfg.T)
    return eta, T, params


def solve_nl(prob: ProblemNL, w0, cfg: ConfigNL, on_epoch: Optional[Callable] = None) -> NLResult:
    """
    Run T epochs of shuffled proximal gradient steps on the smoothed problem.

    Each epoch estimates F along the permutation pi (Option 1: running prefix/suffix sums,
    Option 2: F(w_0) once), takes n hyper-gradient steps ordered by pi_hat with step eta/n
    and finishes with prox_{eta f}. Epoch 0 of the trace is the starting point.
    """
    cfg.validate(prob)
    w = as_dense(w0, prob.p, "w0").copy()
    streams = StreamFactory(cfg.seed)
    spec = smoothing_spec(cfg.gamma_at(0), prob.h, prob.q)
    eta, T, params = _resolve_params(prob, w, cfg, spec)
    n = prob.n
    log = _EpochLog(prob, cfg, spec, eta, on_epoch)
    log.record(0, w, time.perf_counter())
    stopped = False

    for t in range(1, T + 1):
        started = time.perf_counter()
        epoch_spec = spec.with_gamma(cfg.gamma_at(t))
        w_start = w.copy()
        perms = sample_permutations(n, cfg.permutation_mode, streams, t, cfg.fixed_permutations)
        trajectory = []
        with log.overflow_guard(t):
            if cfg.option == 1:
                state = Option1State.start(prob, w_start, perms.pi)
            else:
                F_fixed = estimate_F_option2(prob, w_start)
            log.f_evals += n

            for i in range(n):
                if cfg.option == 1:
                    F_est = estimate_F_option1(state, prob.eval_F_i(int(perms.pi[i]), w))
                    log.f_evals += 1
                else:
                    F_est = F_fixed
                if cfg.check_estimator:
                    trajectory.append(w.copy())
                step = hyper_gradient_nl(prob, int(perms.pi_hat[i]), w, F_est, epoch_spec)
                log.jac_evals += 1
                w = w - (eta / n) * step
                log.guard(w, t)

            w = prob.f.prox(w, eta)
        log.guard(w, t)
        slack = None
        if cfg.check_estimator:
            slack = estimator_bound_slack(prob, w_start, trajectory, perms.pi)
            if slack < -1e-10:
                logger.warning("estimator bound violated in epoch %d (slack %.3g)", t, slack)
        record = log.record(t, w, started, slack)
        if log.should_stop(record):
            stopped = True
            break

    return log.result(w, streams, eta, T, params, stopped)


def compositional_sgd_baseline(prob: ProblemNL, w0, cfg: ConfigNL,
                               on_epoch: Optional[Callable] = None) -> NLResult:
    """
    Two-timescale compositional SGD: i.i.d. component draws, an exponentially averaged
    estimate y of F(w) with weight cfg.tracking_weight, and steps along
    grad F_j(w)^T K u*_gamma(y). Same epoch structure and trace schema as solve_nl.
    """
    cfg.validate(prob)
    w = as_dense(w0, prob.p, "w0").copy()
    streams = StreamFactory(cfg.seed)
    spec = smoothing_spec(cfg.gamma_at(0), prob.h, prob.q)
    eta, T, params = _resolve_params(prob, w, cfg, spec)
    n = prob.n
    beta = cfg.tracking_weight
    log = _EpochLog(prob, cfg, spec, eta, on_epoch)
    log.record(0, w, time.perf_counter())
    tracked = None
    stopped = False

    for t in range(1, T + 1):
        started = time.perf_counter()
        epoch_spec = spec.with_gamma(cfg.gamma_at(t))
        draws = streams.stream('baseline', t).integers(n, size=(n, 2))
        with log.overflow_guard(t):
            for i, j in draws:
                sample = prob.eval_F_i(int(i), w)
                log.f_evals += 1
                tracked = sample if tracked is None else (1.0 - beta) * tracked + beta * sample
                direction = smoothed_conjugate_grad(tracked, prob.K, prob.h, epoch_spec)
                w = w - (eta / n) * prob.eval_Jt_vec_i(int(j), w, direction)
                log.jac_evals += 1
                log.guard(w, t)
            w = prob.f.prox(w, eta)
        log.guard(w, t)
        record = log.record(t, w, started)
        if log.should_stop(record):
            stopped = True
            break

    return log.result(w, streams, eta, T, params, stopped)
