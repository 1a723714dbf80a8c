"""
Problem interfaces for the two minimax settings and the benchmark instances.

Nonconvex-linear (NL):
    min_w max_u  f(w) + (1/n) sum_i <F_i(w), K u> - h(u)

Nonconvex-strongly-concave (NC):
    min_w max_u  f(w) + (1/n) sum_i H_i(w, u) - h(u)

Components are indexed 0..n-1. Every instance carries the assumption constants the
step-size calculators consume; benchmark constructors compute them from the
generated data over a declared region radius, which is logged.
"""
import copy
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from minimax import prox as proxlib
from minimax.data import SparseDataset, partition_blocks
from minimax.errors import (DimensionError, OracleUnavailable, ParameterError,
                            UnsatisfiableParameters)
from minimax.linalg import LinearOperator, as_dense, norm
from minimax.prox import ProxFn, SmoothingSpec

logger = logging.getLogger(__name__)

DEFAULT_REGION_RADIUS = 10.0
INNER_SOLVE_MAX_STEPS = 200_000
EXP_CLAMP = 30.0

# Suprema over z of |d/dz| and |d2/dz2| for the four model-selection losses
# (1 - tanh, shifted logistic difference, squared sigmoid, logistic).
_LOSS_SLOPE_SUP = np.array([1.0, 0.25, 8.0 / 27.0, 1.0])
_LOSS_CURVATURE_SUP = np.array([4.0 / (3.0 * math.sqrt(3.0)), 0.25, 0.16, 0.25])


@dataclass(frozen=True)
class ConstantsNL:
    M_F: float
    L_F: float
    sigma_J: float
    Lambda0: float
    Lambda1: float
    Psi0_lower_bound: float
    Psi0_bound_is_exact: bool = False
    region_radius: Optional[float] = None

    def __post_init__(self):
        problems = []
        if not self.M_F > 0:
            problems.append("M_F must be positive")
        if not self.L_F >= 0:
            problems.append("L_F must be non-negative")
        if not self.sigma_J >= 0:
            problems.append("sigma_J must be non-negative")
        if not self.Lambda0 >= 1:
            problems.append("Lambda0 must be at least 1")
        if not self.Lambda1 >= 0:
            problems.append("Lambda1 must be non-negative")
        if problems:
            raise ParameterError("; ".join(problems))


@dataclass(frozen=True)
class ConstantsNC:
    L_w: float
    L_u: float
    mu_H: float
    Theta_w: float
    sigma_w: float
    Theta_u: float
    sigma_u: float
    Lambda0: float
    Lambda1: float
    Lambda0_hat: float
    Lambda1_hat: float
    L_f: float
    Psi0_lower_bound: float
    Psi0_bound_is_exact: bool = False
    region_radius: Optional[float] = None

    def __post_init__(self):
        problems = []
        if not (self.L_w > 0 and self.L_u > 0):
            problems.append("L_w and L_u must be positive")
        for name in ("mu_H", "Theta_w", "sigma_w", "Theta_u", "sigma_u", "Lambda1", "Lambda1_hat", "L_f"):
            if not getattr(self, name) >= 0:
                problems.append(f"{name} must be non-negative")
        if not (self.Lambda0 >= 1 and self.Lambda0_hat >= 1):
            problems.append("Lambda0 and Lambda0_hat must be at least 1")
        if problems:
            raise ParameterError("; ".join(problems))


@dataclass(frozen=True)
class DerivedConstants:
    kappa: float
    L_Phi0: float
    L_Phi_gamma: float
    Q_gamma: float
    L_Psi: float = math.nan
    C2: float = math.nan


class ProblemNL:
    """Finite-sum map F = (1/n) sum F_i with Jacobian-transpose products"""

    def __init__(self, n: int, p: int, m: int, K: LinearOperator, f: ProxFn, h: ProxFn,
                 constants: ConstantsNL, name: str = "problem-nl"):
        if min(n, p, m) < 1:
            raise DimensionError("n, p and m must be positive")
        if K.rows != m:
            raise DimensionError(f"K must map into R^{m}, maps into R^{K.rows}")
        self.n = n
        self.p = p
        self.m = m
        self.q = K.cols
        self.K = K
        self.f = f
        self.h = h
        self.constants = constants
        self.name = name

    def eval_F_i(self, i: int, w: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def eval_Jt_vec_i(self, i: int, w: np.ndarray, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jacobian_i(self, i: int, w: np.ndarray) -> np.ndarray:
        """Dense (m, p) Jacobian assembled row by row; diagnostics only"""
        eye = np.eye(self.m)
        return np.vstack([self.eval_Jt_vec_i(i, w, eye[j]) for j in range(self.m)])

    def with_constants(self, constants: ConstantsNL) -> "ProblemNL":
        clone = copy.copy(self)
        clone.constants = constants
        return clone


class CompositeProblem(ProblemNL):
    """ProblemNL assembled from per-component callables"""

    def __init__(self, F: Sequence[Callable], Jt_vec: Sequence[Callable], p: int, m: int,
                 K: LinearOperator, f: ProxFn, h: ProxFn, constants: ConstantsNL,
                 name: str = "composite"):
        if len(F) != len(Jt_vec):
            raise DimensionError("F and Jt_vec must list the same number of components")
        super().__init__(len(F), p, m, K, f, h, constants, name)
        self._F = list(F)
        self._Jt = list(Jt_vec)

    def eval_F_i(self, i, w):
        return np.asarray(self._F[i](w), dtype=np.float64)

    def eval_Jt_vec_i(self, i, w, y):
        return np.asarray(self._Jt[i](w, y), dtype=np.float64)


def _loss_values(z: np.ndarray) -> np.ndarray:
    """(rows, 4) loss matrix for clamped margins z"""
    return np.column_stack([
        1.0 - np.tanh(z),
        np.logaddexp(0.0, -z) - np.logaddexp(0.0, -z - 1.0),
        expit(-z) ** 2,
        np.logaddexp(0.0, -z),
    ])


def _loss_slopes(z: np.ndarray) -> np.ndarray:
    tanh = np.tanh(z)
    sig_neg = expit(-z)
    return np.column_stack([
        -(1.0 - tanh * tanh),
        expit(-z - 1.0) - sig_neg,
        -2.0 * sig_neg * sig_neg * expit(z),
        -sig_neg,
    ])


class ModelSelectionProblem(ProblemNL):
    """
    Four nonconvex classification losses F_i = (F_i1, ..., F_i4) averaged over a block of
    rows; the max over the l1 ball picks the worst mixture of losses.
    """

    def __init__(self, data: SparseDataset, lam: float, blocks: Optional[List[range]] = None,
                 region_radius: float = DEFAULT_REGION_RADIUS):
        if data.n == 0:
            raise ParameterError("empty dataset")
        bad = ~np.isin(data.labels, (-1.0, 1.0))
        if np.any(bad):
            raise ParameterError(f"labels must be -1 or +1; row {int(np.argmax(bad))} is not")
        blocks = blocks if blocks is not None else [range(r, r + 1) for r in range(data.n)]
        X = data.to_csr()
        self._blocks_X = [X[b.start:b.stop] for b in blocks]
        self._blocks_b = [data.labels[b.start:b.stop] for b in blocks]

        row_norms = np.sqrt(np.asarray(X.multiply(X).sum(axis=1)).ravel())
        a_max = float(row_norms.max()) if row_norms.size else 0.0
        M_F = max(float(np.linalg.norm(_LOSS_SLOPE_SUP)) * a_max, 1e-12)
        M_f = lam * region_radius
        constants = ConstantsNL(
            M_F=M_F,
            L_F=float(np.linalg.norm(_LOSS_CURVATURE_SUP)) * a_max ** 2,
            sigma_J=M_F,
            Lambda0=2.0,
            Lambda1=2.0 * M_f ** 2,
            Psi0_lower_bound=0.0,
            region_radius=region_radius,
        )
        logger.info("model-selection constants declared over region radius %g", region_radius)
        super().__init__(len(blocks), data.p, 4, LinearOperator.identity(4),
                         proxlib.l2_squared(lam), proxlib.l1_ball_indicator(1.0),
                         constants, name="model-selection")
        self.data = data
        self.lam = lam

    def _margins(self, i, w):
        raw = self._blocks_b[i] * (self._blocks_X[i] @ w)
        return raw, np.clip(raw, -EXP_CLAMP, EXP_CLAMP)

    def eval_F_i(self, i, w):
        _, z = self._margins(i, w)
        return _loss_values(z).mean(axis=0)

    def eval_Jt_vec_i(self, i, w, y):
        raw, z = self._margins(i, w)
        coef = (_loss_slopes(z) @ y) * (np.abs(raw) < EXP_CLAMP)
        X = self._blocks_X[i]
        return np.asarray(X.T @ (coef * self._blocks_b[i])).ravel() / X.shape[0]


def build_model_selection(data: SparseDataset, lam: float, k_b: Optional[int] = None,
                          region_radius: float = DEFAULT_REGION_RADIUS) -> ModelSelectionProblem:
    if not lam > 0:
        raise ParameterError(f"lambda must be positive, got {lam}")
    blocks = partition_blocks(data, k_b) if k_b is not None else None
    return ModelSelectionProblem(data, lam, blocks, region_radius)


def build_affine_composite(p: int = 2, m: int = 3, n: int = 3, seed: int = 0, lam: float = 0.1,
                           radius: float = 1.0, region_radius: float = DEFAULT_REGION_RADIUS) -> CompositeProblem:
    """F_i(w) = A_i w + c_i under an l1-ball max; smooth, with a unique smoothed stationary point"""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, m, p))
    c = rng.standard_normal((n, m))
    A_bar = A.mean(axis=0)
    constants = ConstantsNL(
        M_F=float(max(np.linalg.norm(A[i], 2) for i in range(n))),
        L_F=0.0,
        sigma_J=float(np.sqrt(np.mean([np.sum((A[i] - A_bar) ** 2) for i in range(n)]))),
        Lambda0=2.0,
        Lambda1=2.0 * (lam * region_radius) ** 2,
        Psi0_lower_bound=0.0,
        region_radius=region_radius,
    )
    problem = CompositeProblem(
        F=[lambda w, i=i: A[i] @ w + c[i] for i in range(n)],
        Jt_vec=[lambda w, y, i=i: A[i].T @ y for i in range(n)],
        p=p, m=m, K=LinearOperator.identity(m),
        f=proxlib.l2_squared(lam), h=proxlib.l1_ball_indicator(radius),
        constants=constants, name="affine-composite",
    )
    problem.A, problem.c = A, c
    return problem


def full_F(prob: ProblemNL, w) -> np.ndarray:
    w = as_dense(w, prob.p, "w")
    total = np.zeros(prob.m)
    for i in range(prob.n):
        total = total + prob.eval_F_i(i, w)
    return total / prob.n


def full_Jt_vec(prob: ProblemNL, w, y) -> np.ndarray:
    total = np.zeros(prob.p)
    for i in range(prob.n):
        total = total + prob.eval_Jt_vec_i(i, w, y)
    return total / prob.n


def full_grad_phi_gamma(prob: ProblemNL, w, s: SmoothingSpec) -> np.ndarray:
    """grad Phi_gamma(w) = grad F(w)^T K u*_gamma(F(w))"""
    y = proxlib.smoothed_conjugate_grad(full_F(prob, w), prob.K, prob.h, s)
    return full_Jt_vec(prob, w, y)


def psi_gamma(prob: ProblemNL, w, s: SmoothingSpec) -> float:
    value, _ = proxlib.smoothed_conjugate(full_F(prob, w), prob.K, prob.h, s)
    return value + prob.f.value(w)


def psi_zero(prob: ProblemNL, w) -> float:
    """Unsmoothed objective; +inf when h* is infinite at K^T F(w)"""
    return proxlib.unsmoothed_conjugate(full_F(prob, w), prob.K, prob.h) + prob.f.value(w)


def derive_constants_nl(prob: ProblemNL, gamma: float) -> DerivedConstants:
    c = prob.constants
    mu_h = prob.h.strong_convexity
    if mu_h + gamma <= 0:
        raise UnsatisfiableParameters("gamma must be positive when h is not strongly convex")
    K = prob.K.norm_bound
    M_h = prob.h.domain_bound if prob.h.domain_bound is not None else math.inf
    curvature_term = 0.0 if c.L_F == 0 else M_h * K * c.L_F
    Q = c.M_F ** 2 * K ** 2 / (mu_h + gamma) + curvature_term
    L_Phi0 = curvature_term + c.M_F ** 2 * K ** 2 / mu_h if mu_h > 0 else math.inf
    L_Psi = 2.0 * c.M_F ** 4 * K ** 4 / (mu_h + gamma) ** 2 + 4.0 * curvature_term ** 2
    return DerivedConstants(kappa=math.nan, L_Phi0=L_Phi0, L_Phi_gamma=Q, Q_gamma=Q,
                            L_Psi=L_Psi, C2=2.0 * M_h ** 2 * K ** 2)


class ProblemNC:
    """Finite-sum coupling H = (1/n) sum H_i with partial gradients"""

    def __init__(self, n: int, p: int, q: int, f: ProxFn, h: ProxFn, constants: ConstantsNC,
                 exact_u_star: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                 name: str = "problem-nc"):
        if min(n, p, q) < 1:
            raise DimensionError("n, p and q must be positive")
        self.n = n
        self.p = p
        self.q = q
        self.f = f
        self.h = h
        self.constants = constants
        self.exact_u_star = exact_u_star
        self.name = name

    def eval_H_i(self, i, w, u) -> float:
        raise NotImplementedError

    def eval_gradw_H_i(self, i, w, u) -> np.ndarray:
        raise NotImplementedError

    def eval_gradu_H_i(self, i, w, u) -> np.ndarray:
        raise NotImplementedError

    def with_constants(self, constants: ConstantsNC) -> "ProblemNC":
        clone = copy.copy(self)
        clone.constants = constants
        return clone


class QuadraticMinimaxProblem(ProblemNC):
    """H_i(w,u) = <A_i w, u> - 0.5 u^T D_i u + <c_i, u> + 0.5 w^T P_i w with diagonal D_i"""

    def __init__(self, A, D, c, P, f, h, constants, exact_u_star=None, name="quadratic-minimax"):
        n, q, p = A.shape
        super().__init__(n, p, q, f, h, constants, exact_u_star, name)
        self.A, self.D, self.c, self.P = A, D, c, P

    def eval_H_i(self, i, w, u):
        return float(u @ (self.A[i] @ w) - 0.5 * u @ (self.D[i] * u) + self.c[i] @ u
                     + 0.5 * w @ (self.P[i] @ w))

    def eval_gradw_H_i(self, i, w, u):
        return self.A[i].T @ u + self.P[i] @ w

    def eval_gradu_H_i(self, i, w, u):
        return self.A[i] @ w - self.D[i] * u + self.c[i]


def _centered(rng, heterogeneity, shape):
    noise = rng.standard_normal(shape)
    return heterogeneity * (noise - noise.mean(axis=0))


def build_quadratic_minimax(p: int, q: int, n: int, seed: int, lam: float = 0.01,
                            heterogeneity: float = 0.1, constrained: bool = False,
                            radius: float = 1.0, min_curvature: float = 0.5) -> QuadraticMinimaxProblem:
    """
    Oracle benchmark with a closed-form inner maximizer u*(w) = Dbar^{-1}(Abar w + cbar).

    The averaged w-Hessian of Psi_0 is shifted to be at least min_curvature so the saddle
    point is unique; individual P_i stay indefinite. With constrained=True, h is the
    l1-ball indicator and no closed-form oracle is attached.
    """
    if min(p, q, n) < 1:
        raise ParameterError("p, q and n must be at least 1")
    rng = np.random.default_rng(seed)
    A_bar = 0.5 * rng.standard_normal((q, p)) / math.sqrt(p)
    A = A_bar + _centered(rng, heterogeneity, (n, q, p))
    D = np.maximum(1.0 + rng.uniform(0.0, 1.0, q) + _centered(rng, heterogeneity, (n, q)), 0.1)
    c = rng.standard_normal(q) + _centered(rng, heterogeneity, (n, q))
    G = 0.3 * rng.standard_normal((p, p)) / math.sqrt(p)
    P0 = 0.5 * (G + G.T)
    S = _centered(rng, heterogeneity, (n, p, p))
    S = 0.5 * (S + np.transpose(S, (0, 2, 1)))

    A_bar, D_bar, c_bar = A.mean(axis=0), D.mean(axis=0), c.mean(axis=0)
    coupling = A_bar.T @ (A_bar / D_bar[:, None])
    lowest = float(np.linalg.eigvalsh(coupling + P0 + lam * np.eye(p)).min())
    if lowest < min_curvature:
        P0 = P0 + (min_curvature - lowest) * np.eye(p)
    P = P0 + S
    P_bar = P.mean(axis=0)

    f = proxlib.l2_squared(lam) if lam > 0 else proxlib.zero()
    h = proxlib.l1_ball_indicator(radius) if constrained else proxlib.zero()

    hessian = coupling + P_bar + lam * np.eye(p)
    w_star = np.linalg.solve(hessian, -A_bar.T @ (c_bar / D_bar))
    u_at_star = (A_bar @ w_star + c_bar) / D_bar
    region = 3.0 * max(norm(w_star), norm(u_at_star), 1.0)

    blocks = [np.block([[P[i], A[i].T], [A[i], -np.diag(D[i])]]) for i in range(n)]
    L = float(max(np.linalg.norm(B, 2) for B in blocks))
    spread_A = np.array([np.linalg.norm(A[i] - A_bar, 2) for i in range(n)])
    spread_P = np.array([np.linalg.norm(P[i] - P_bar, 2) for i in range(n)])
    spread_D = np.array([np.abs(D[i] - D_bar).max() for i in range(n)])
    spread_c = np.array([np.linalg.norm(c[i] - c_bar) for i in range(n)])
    sigma_w = math.sqrt(float(np.mean(((spread_A + spread_P) * region) ** 2)))
    sigma_u = math.sqrt(float(np.mean(((spread_A + spread_D) * region + spread_c) ** 2)))

    if constrained:
        grad_u_sup = np.linalg.norm(A_bar, 2) * region + D_bar.max() * radius + norm(c_bar)
        Lambda0_hat, Lambda1_hat = 1.0, float(grad_u_sup ** 2)
        curvature = float(min(np.linalg.eigvalsh(P_bar + lam * np.eye(p)).min(), 0.0))
        psi_lower, exact = 0.5 * curvature * region ** 2, False
        oracle = None
    else:
        Lambda0_hat, Lambda1_hat = 1.0, 0.0
        psi_lower = float(0.5 * w_star @ hessian @ w_star + w_star @ (A_bar.T @ (c_bar / D_bar))
                          + 0.5 * c_bar @ (c_bar / D_bar))
        exact = True

        def oracle(w):
            return (A_bar @ w + c_bar) / D_bar

    constants = ConstantsNC(
        L_w=L, L_u=L, mu_H=float(D.min()),
        Theta_w=0.0, sigma_w=sigma_w, Theta_u=0.0, sigma_u=sigma_u,
        Lambda0=2.0 if lam > 0 else 1.0,
        Lambda1=2.0 * (lam * region) ** 2,
        Lambda0_hat=Lambda0_hat, Lambda1_hat=Lambda1_hat,
        L_f=lam, Psi0_lower_bound=psi_lower, Psi0_bound_is_exact=exact,
        region_radius=region,
    )
    logger.info("quadratic minimax constants declared over region radius %.4g", region)
    problem = QuadraticMinimaxProblem(A, D, c, P, f, h, constants, oracle,
                                      name="quadratic-minimax-l1" if constrained else "quadratic-minimax")
    problem.w_star = None if constrained else w_star
    return problem


def full_H(prob: ProblemNC, w, u) -> float:
    return sum(prob.eval_H_i(i, w, u) for i in range(prob.n)) / prob.n


def full_gradw(prob: ProblemNC, w, u) -> np.ndarray:
    total = np.zeros(prob.p)
    for i in range(prob.n):
        total = total + prob.eval_gradw_H_i(i, w, u)
    return total / prob.n


def full_gradu(prob: ProblemNC, w, u) -> np.ndarray:
    total = np.zeros(prob.q)
    for i in range(prob.n):
        total = total + prob.eval_gradu_H_i(i, w, u)
    return total / prob.n


def lagrangian(prob: ProblemNC, w, u) -> float:
    """L(w, u) = f(w) + H(w, u) - h(u)"""
    return prob.f.value(w) + full_H(prob, w, u) - prob.h.value(u)


def solve_inner(prob: ProblemNC, w, tol: float, u0=None) -> np.ndarray:
    """Proximal gradient ascent on u until the gradient mapping drops below tol"""
    c = prob.constants
    step = 2.0 / (c.L_u + c.mu_H + prob.h.strong_convexity)
    u = np.zeros(prob.q) if u0 is None else as_dense(u0, prob.q, "u0")
    for _ in range(INNER_SOLVE_MAX_STEPS):
        u_next = prob.h.prox(u + step * full_gradu(prob, w, u), step)
        if norm(u - u_next) / step <= tol:
            return u_next
        u = u_next
    logger.warning("inner solve stopped after %d steps above tolerance %g", INNER_SOLVE_MAX_STEPS, tol)
    return u


def u_star(prob: ProblemNC, w, tol: Optional[float] = None) -> Tuple[np.ndarray, bool]:
    """Return (u*(w), exact) from the oracle, else from an inner solve to tol"""
    if prob.exact_u_star is not None:
        return np.asarray(prob.exact_u_star(w), dtype=np.float64), True
    if tol is None:
        raise OracleUnavailable(f"{prob.name} has no u* oracle and no inner tolerance was given")
    return solve_inner(prob, w, tol), False


def phi_zero_nc(prob: ProblemNC, w, tol: Optional[float] = None) -> float:
    u, _ = u_star(prob, w, tol)
    return full_H(prob, w, u) - prob.h.value(u)


def psi_zero_nc(prob: ProblemNC, w, tol: Optional[float] = None) -> float:
    return phi_zero_nc(prob, w, tol) + prob.f.value(w)


def grad_phi_zero_nc(prob: ProblemNC, w, tol: Optional[float] = None) -> np.ndarray:
    """Danskin: grad Phi_0(w) = grad_w H(w, u*(w))"""
    u, _ = u_star(prob, w, tol)
    return full_gradw(prob, w, u)


def derive_constants_nc(prob: ProblemNC) -> DerivedConstants:
    c = prob.constants
    modulus = c.mu_H + prob.h.strong_convexity
    if modulus <= 0:
        raise UnsatisfiableParameters("no strongly concave component: mu_H + mu_h must be positive")
    kappa = c.L_u / modulus
    L_Phi0 = (1.0 + kappa) * c.L_w
    return DerivedConstants(kappa=kappa, L_Phi0=L_Phi0, L_Phi_gamma=L_Phi0, Q_gamma=math.nan)


@dataclass(frozen=True)
class ConstantCheck:
    name: str
    declared: float
    worst_ratio: float
    samples: int

    @property
    def ok(self) -> bool:
        return self.worst_ratio <= 1.0 + 1e-9


@dataclass
class AuditReport:
    problem: str
    seed: int
    checks: List[ConstantCheck] = field(default_factory=list)

    @property
    def violations(self) -> List[ConstantCheck]:
        return [check for check in self.checks if not check.ok]

    def as_dict(self) -> dict:
        return {
            'problem': self.problem,
            'seed': self.seed,
            'checks': [{'name': c.name, 'declared': c.declared, 'worst_ratio': c.worst_ratio,
                        'samples': c.samples, 'ok': c.ok} for c in self.checks],
        }


def _ratio(measured: float, declared: float) -> float:
    if declared > 0:
        return measured / declared
    return 0.0 if measured <= 1e-12 else math.inf


def _sample_ball(rng, dim, radius):
    direction = rng.standard_normal(dim)
    return radius * rng.uniform() ** (1.0 / dim) * direction / np.linalg.norm(direction)


def audit_constants(prob, samples: int = 100, seed: int = 0) -> AuditReport:
    """Empirical worst-case ratio measured/declared for every audited constant"""
    rng = np.random.default_rng(seed)
    if isinstance(prob, ProblemNL):
        checks = _audit_nl(prob, samples, rng)
    else:
        checks = _audit_nc(prob, samples, rng)
    report = AuditReport(prob.name, seed, checks)
    for check in report.violations:
        logger.warning("declared %s = %.6g is violated by a factor %.4g", check.name,
                       check.declared, check.worst_ratio)
    return report


def _audit_nl(prob: ProblemNL, samples, rng) -> List[ConstantCheck]:
    c = prob.constants
    radius = c.region_radius or DEFAULT_REGION_RADIUS
    worst_M = worst_L = worst_var = 0.0
    for _ in range(samples):
        i = int(rng.integers(prob.n))
        w, w2 = _sample_ball(rng, prob.p, radius), _sample_ball(rng, prob.p, radius)
        gap = norm(w - w2)
        worst_M = max(worst_M, norm(prob.eval_F_i(i, w) - prob.eval_F_i(i, w2)) / gap)
        worst_L = max(worst_L, np.linalg.norm(prob.jacobian_i(i, w) - prob.jacobian_i(i, w2)) / gap)
        jacobians = [prob.jacobian_i(j, w) for j in range(prob.n)]
        mean = sum(jacobians) / prob.n
        variance = float(np.mean([np.sum((J - mean) ** 2) for J in jacobians]))
        worst_var = max(worst_var, math.sqrt(variance))
    return [
        ConstantCheck("M_F", c.M_F, _ratio(worst_M, c.M_F), samples),
        ConstantCheck("L_F", c.L_F, _ratio(worst_L, c.L_F), samples),
        ConstantCheck("sigma_J", c.sigma_J, _ratio(worst_var, c.sigma_J), samples),
    ]


def _stack_grad(prob, i, w, u):
    return np.concatenate([prob.eval_gradw_H_i(i, w, u), prob.eval_gradu_H_i(i, w, u)])


def _audit_nc(prob: ProblemNC, samples, rng) -> List[ConstantCheck]:
    c = prob.constants
    radius = c.region_radius or DEFAULT_REGION_RADIUS
    p = prob.p
    worst_L = worst_mu = worst_w = worst_u = 0.0
    for _ in range(samples):
        i = int(rng.integers(prob.n))
        w, u = _sample_ball(rng, p, radius), _sample_ball(rng, prob.q, radius)
        base = _stack_grad(prob, i, w, u)

        def respond(v):
            scale = np.linalg.norm(v)
            if scale == 0.0:
                return np.zeros_like(v)
            unit = v / scale
            return (_stack_grad(prob, i, w + unit[:p], u + unit[p:]) - base) * scale

        # power iteration for the largest ||B W^-1 z|| / ||z||, W = diag(L_w, L_u)
        weights = np.concatenate([np.full(p, c.L_w), np.full(prob.q, c.L_u)])
        z = rng.standard_normal(p + prob.q)
        for _ in range(30):
            z /= np.linalg.norm(z)
            response = respond(z / weights)
            worst_L = max(worst_L, float(np.linalg.norm(response)))
            z = respond(response) / weights
            if not np.any(z):
                break

        d = rng.standard_normal(prob.q)
        d /= np.linalg.norm(d)
        t = 0.1
        second = (prob.eval_H_i(i, w, u + t * d) - 2.0 * prob.eval_H_i(i, w, u)
                  + prob.eval_H_i(i, w, u - t * d)) / t ** 2
        worst_mu = max(worst_mu, math.inf if second >= 0 else c.mu_H / -second)

        gw = [prob.eval_gradw_H_i(j, w, u) for j in range(prob.n)]
        gu = [prob.eval_gradu_H_i(j, w, u) for j in range(prob.n)]
        for grads, theta, sink in ((gw, c.Theta_w, 'w'), (gu, c.Theta_u, 'u')):
            mean = sum(grads) / prob.n
            excess = float(np.mean([np.sum((g - mean) ** 2) for g in grads])) - theta * float(mean @ mean)
            spread = math.sqrt(max(excess, 0.0))
            if sink == 'w':
                worst_w = max(worst_w, spread)
            else:
                worst_u = max(worst_u, spread)
    return [
        ConstantCheck("L_w/L_u", max(c.L_w, c.L_u), worst_L, samples),
        ConstantCheck("mu_H", c.mu_H, worst_mu, samples),
        ConstantCheck("sigma_w", c.sigma_w, _ratio(worst_w, c.sigma_w), samples),
        ConstantCheck("sigma_u", c.sigma_u, _ratio(worst_u, c.sigma_u), samples),
    ]
