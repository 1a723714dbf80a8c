"""
Proximal operators, projections and the smoothed conjugate

    phi_gamma(v) = max_u <v, K u> - h(u) - gamma * b(u),   b(u) = 0.5 * ||u - anchor||^2

whose maximizer u*_gamma(v) = prox_{h/gamma}(anchor + K^T v / gamma) drives every
hyper-gradient in the nonconvex-linear solver.
"""
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Tuple

import numpy as np

from minimax.errors import ParameterError, SmoothingError
from minimax.linalg import LinearOperator, as_dense, dot, norm

DOMAIN_TOL = 1e-9


def _check_eta(eta: float, allow_zero: bool = False):
    if not math.isfinite(eta) or eta < 0 or (eta == 0 and not allow_zero):
        raise ParameterError(f"step size must be positive, got {eta}")


def prox_l2_squared(x, eta: float, lam: float) -> np.ndarray:
    _check_eta(eta)
    if lam < 0:
        raise ParameterError(f"lambda must be non-negative, got {lam}")
    return as_dense(x) / (1.0 + eta * lam)


def soft_threshold(x, tau: float) -> np.ndarray:
    x = as_dense(x)
    return np.sign(x) * np.maximum(np.abs(x) - tau, 0.0)


def project_l1_ball(v, radius: float = 1.0) -> np.ndarray:
    """Euclidean projection onto {u : ||u||_1 <= radius} (sort-based, exact)"""
    if not radius > 0:
        raise ParameterError(f"radius must be positive, got {radius}")
    v = as_dense(v)
    magnitudes = np.abs(v)
    if magnitudes.sum() <= radius:
        return v.copy()
    ordered = np.sort(magnitudes)[::-1]
    shifted = ordered - (np.cumsum(ordered) - radius) / np.arange(1, v.size + 1)
    rho = int(np.nonzero(shifted > 0)[0].max()) + 1
    theta = (ordered[:rho].sum() - radius) / rho
    return np.sign(v) * np.maximum(magnitudes - theta, 0.0)


def project_box(v, lower, upper) -> np.ndarray:
    return np.clip(as_dense(v), lower, upper)


@dataclass(frozen=True)
class ProxFn:
    """
    A closed convex function known through its value, prox and conjugate.

    Indicator functions report value 0 and expose membership through in_domain;
    +inf never appears as a float. prox(x, 0) is the identity.
    """
    name: str
    value: Callable[[np.ndarray], float] = field(repr=False)
    prox_map: Callable[[np.ndarray, float], np.ndarray] = field(repr=False)
    in_domain: Callable[[np.ndarray], bool] = field(repr=False)
    conjugate: Callable[[np.ndarray], float] = field(repr=False)
    strong_convexity: float = 0.0
    domain_bound: Optional[float] = None
    lipschitz_const: Optional[float] = None
    is_indicator: bool = False
    # argmax_u <z, u> - g(u); only for strongly convex g
    argmax_linear: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False)

    def prox(self, x, eta: float) -> np.ndarray:
        _check_eta(eta, allow_zero=True)
        x = as_dense(x)
        if eta == 0:
            return x.copy()
        return self.prox_map(x, eta)


def zero() -> ProxFn:
    return ProxFn(
        name="zero",
        value=lambda x: 0.0,
        prox_map=lambda x, eta: x.copy(),
        in_domain=lambda x: True,
        conjugate=lambda z: 0.0 if not np.any(z) else math.inf,
        lipschitz_const=0.0,
    )


def l2_squared(lam: float) -> ProxFn:
    """(lam/2)||x||^2"""
    if not lam > 0:
        raise ParameterError(f"lambda must be positive, got {lam}")
    return ProxFn(
        name=f"l2_squared({lam:g})",
        value=lambda x: 0.5 * lam * dot(x, x),
        prox_map=lambda x, eta: x / (1.0 + eta * lam),
        in_domain=lambda x: True,
        conjugate=lambda z: dot(z, z) / (2.0 * lam),
        strong_convexity=lam,
        argmax_linear=lambda z: np.asarray(z, dtype=np.float64) / lam,
    )


def l1_norm(lam: float, dim: Optional[int] = None) -> ProxFn:
    """lam * ||x||_1; Lipschitz constant lam * sqrt(dim) in the Euclidean norm"""
    if not lam > 0:
        raise ParameterError(f"lambda must be positive, got {lam}")
    return ProxFn(
        name=f"l1_norm({lam:g})",
        value=lambda x: lam * float(np.abs(x).sum()),
        prox_map=lambda x, eta: soft_threshold(x, eta * lam),
        in_domain=lambda x: True,
        conjugate=lambda z: 0.0 if np.max(np.abs(z), initial=0.0) <= lam + DOMAIN_TOL else math.inf,
        lipschitz_const=None if dim is None else lam * math.sqrt(dim),
    )


def l1_ball_indicator(radius: float = 1.0) -> ProxFn:
    if not radius > 0:
        raise ParameterError(f"radius must be positive, got {radius}")
    return ProxFn(
        name=f"l1_ball({radius:g})",
        value=lambda x: 0.0,
        prox_map=lambda x, eta: project_l1_ball(x, radius),
        in_domain=lambda x: float(np.abs(x).sum()) <= radius + DOMAIN_TOL,
        conjugate=lambda z: radius * float(np.max(np.abs(z), initial=0.0)),
        domain_bound=radius,
        is_indicator=True,
    )


def box_indicator(lower, upper) -> ProxFn:
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    if np.any(lower > upper):
        raise ParameterError("box lower bound exceeds upper bound")
    corner = np.maximum(np.abs(lower), np.abs(upper))
    return ProxFn(
        name="box",
        value=lambda x: 0.0,
        prox_map=lambda x, eta: project_box(x, lower, upper),
        in_domain=lambda x: bool(np.all(x >= lower - DOMAIN_TOL) and np.all(x <= upper + DOMAIN_TOL)),
        conjugate=lambda z: float(np.sum(np.maximum(lower * z, upper * z))),
        domain_bound=float(np.linalg.norm(corner)) if np.all(np.isfinite(corner)) else None,
        is_indicator=True,
    )


@dataclass(frozen=True, eq=False)
class SmoothingSpec:
    gamma: float
    anchor_u: np.ndarray
    b_sup: float
    grad_b_sup: float

    def __post_init__(self):
        if not self.gamma >= 0:
            raise ParameterError(f"gamma must be non-negative, got {self.gamma}")
        object.__setattr__(self, "anchor_u", as_dense(self.anchor_u, name="anchor"))

    def with_gamma(self, gamma: float) -> "SmoothingSpec":
        return replace(self, gamma=gamma)


def smoothing_spec(gamma: float, h: ProxFn, dim: int, anchor=None) -> SmoothingSpec:
    """Build the spec for b(u) = 0.5||u - anchor||^2 over dom h"""
    anchor = np.zeros(dim) if anchor is None else as_dense(anchor, dim, "anchor")
    if h.domain_bound is None:
        return SmoothingSpec(gamma, anchor, math.inf, math.inf)
    reach = h.domain_bound + norm(anchor)
    return SmoothingSpec(gamma, anchor, 0.5 * reach * reach, reach)


def smoothed_argmax(v, K: LinearOperator, h: ProxFn, s: SmoothingSpec) -> np.ndarray:
    if s.gamma == 0:
        if h.strong_convexity <= 0 or h.argmax_linear is None:
            raise SmoothingError("non-smooth conjugate: gamma == 0 and h is not strongly convex")
        return np.asarray(h.argmax_linear(K.rmatvec(v)), dtype=np.float64)
    z = K.rmatvec(v)
    return h.prox(s.anchor_u + z / s.gamma, 1.0 / s.gamma)


def smoothed_conjugate(v, K: LinearOperator, h: ProxFn, s: SmoothingSpec) -> Tuple[float, np.ndarray]:
    """Return (phi_gamma(v), u*_gamma(v))"""
    v = as_dense(v, K.rows, "v")
    u_star = smoothed_argmax(v, K, h, s)
    offset = u_star - s.anchor_u
    value = dot(v, K.matvec(u_star)) - h.value(u_star) - 0.5 * s.gamma * dot(offset, offset)
    return value, u_star


def smoothed_conjugate_grad(v, K: LinearOperator, h: ProxFn, s: SmoothingSpec) -> np.ndarray:
    v = as_dense(v, K.rows, "v")
    return K.matvec(smoothed_argmax(v, K, h, s))


def unsmoothed_conjugate(v, K: LinearOperator, h: ProxFn) -> float:
    """phi_0(v) = h*(K^T v), possibly +inf"""
    v = as_dense(v, K.rows, "v")
    return float(h.conjugate(K.rmatvec(v)))


def conjugate_smoothness(K: LinearOperator, h: ProxFn, s: SmoothingSpec) -> float:
    """Lipschitz constant ||K||^2 / (mu_h + gamma) of grad phi_gamma"""
    curvature = h.strong_convexity + s.gamma
    if curvature <= 0:
        raise SmoothingError("non-smooth conjugate: gamma == 0 and h is not strongly convex")
    return K.norm_bound ** 2 / curvature
