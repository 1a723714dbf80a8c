"""
Permutation sampling and the shuffling estimators for F, its Jacobian and the hyper-gradients.

Randomness comes from a counter-based Philox generator. Each (role, epoch, ...) tuple
names an independent sub-stream, so drawing the inner-loop permutation never shifts
the outer one and runs are reproducible from the seed alone.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np

from minimax.errors import DimensionError, ParameterError
from minimax.linalg import norm
from minimax.problem import ProblemNC, ProblemNL, full_F
from minimax.prox import SmoothingSpec, smoothed_conjugate_grad

STREAM_ROLES = {
    'pi': 1,
    'pi_hat': 2,
    'inner': 3,
    'baseline': 4,
    'output': 5,
}


class StreamFactory:
    """Named, counter-addressed random sub-streams derived from one seed"""

    def __init__(self, seed: int):
        if seed < 0:
            raise ParameterError(f"seed must be non-negative, got {seed}")
        self.seed = int(seed)

    def stream(self, role: str, *counters: int) -> np.random.Generator:
        key = (STREAM_ROLES[role],) + tuple(int(c) for c in counters)
        return np.random.Generator(np.random.Philox(np.random.SeedSequence(self.seed, spawn_key=key)))


class PermutationMode(str, Enum):
    IDENTITY = 'identity'
    FIXED = 'fixed-given'
    RANDOM_INDEPENDENT = 'random-independent'
    RANDOM_SHARED = 'random-shared'


def _check_permutation(perm: np.ndarray, n: int, name: str) -> np.ndarray:
    perm = np.asarray(perm, dtype=np.int64)
    if perm.shape != (n,) or not np.array_equal(np.sort(perm), np.arange(n)):
        raise ParameterError(f"{name} is not a permutation of 0..{n - 1}")
    return perm


@dataclass(frozen=True, eq=False)
class PermutationPair:
    """pi orders the F-estimator, pi_hat orders the Jacobian / gradient steps"""
    pi: np.ndarray
    pi_hat: np.ndarray
    mode: PermutationMode

    def __post_init__(self):
        n = len(self.pi)
        object.__setattr__(self, 'pi', _check_permutation(self.pi, n, 'pi'))
        object.__setattr__(self, 'pi_hat', _check_permutation(self.pi_hat, n, 'pi_hat'))
        if self.mode == PermutationMode.RANDOM_SHARED and not np.array_equal(self.pi, self.pi_hat):
            raise ParameterError("shared mode requires pi == pi_hat")


def sample_permutations(n: int, mode, streams: StreamFactory, epoch: int = 0,
                        fixed: Optional[Tuple[Sequence[int], Sequence[int]]] = None) -> PermutationPair:
    if n < 1:
        raise ParameterError(f"n must be at least 1, got {n}")
    mode = PermutationMode(mode)
    if mode == PermutationMode.IDENTITY:
        return PermutationPair(np.arange(n), np.arange(n), mode)
    if mode == PermutationMode.FIXED:
        if fixed is None:
            raise ParameterError("fixed-given mode needs the permutations")
        return PermutationPair(np.asarray(fixed[0]), np.asarray(fixed[1]), mode)
    pi = streams.stream('pi', epoch).permutation(n)
    if mode == PermutationMode.RANDOM_SHARED:
        return PermutationPair(pi, pi.copy(), mode)
    return PermutationPair(pi, streams.stream('pi_hat', epoch).permutation(n), mode)


class Option1State:
    """
    Running F-estimator of one epoch: prefix of fresh evaluations along the trajectory
    plus the suffix of evaluations frozen at w_0.
    """

    def __init__(self, base_evals: np.ndarray):
        self.n, self.m = base_evals.shape
        self.base_evals = base_evals
        # tails[k] = sum_{j >= k} base_evals[j], tails[n] = 0
        tails = np.zeros((self.n + 1, self.m))
        for k in range(self.n - 1, -1, -1):
            tails[k] = tails[k + 1] + base_evals[k]
        self._tails = tails
        self.prefix_sum = np.zeros(self.m)
        self.i = 0

    @classmethod
    def start(cls, prob: ProblemNL, w0: np.ndarray, pi: np.ndarray) -> "Option1State":
        """Evaluate F_{pi(j)}(w_0) for every j; costs n F-evaluations"""
        return cls(np.vstack([prob.eval_F_i(int(j), w0) for j in pi]))

    @property
    def suffix_sum(self) -> np.ndarray:
        return self._tails[self.i]

    @property
    def estimate(self) -> np.ndarray:
        return (self.prefix_sum + self.suffix_sum) / self.n


def estimate_F_option1(state: Option1State, new_eval: np.ndarray) -> np.ndarray:
    if state.i >= state.n:
        raise ParameterError(f"Option 1 estimator already advanced through all {state.n} components")
    new_eval = np.asarray(new_eval, dtype=np.float64)
    if new_eval.shape != (state.m,):
        raise DimensionError(f"expected an evaluation of dimension {state.m}")
    state.prefix_sum = state.prefix_sum + new_eval
    state.i += 1
    return state.estimate


def estimate_F_option2(prob: ProblemNL, w0: np.ndarray) -> np.ndarray:
    return full_F(prob, w0)


def hyper_gradient_nl(prob: ProblemNL, i: int, w_prev: np.ndarray, F_est: np.ndarray,
                      s: SmoothingSpec) -> np.ndarray:
    """grad F_i(w_prev)^T K u*_gamma(F_est) as a single Jacobian-transpose product"""
    y = smoothed_conjugate_grad(F_est, prob.K, prob.h, s)
    return prob.eval_Jt_vec_i(i, w_prev, y)


def hyper_gradient_nc(prob: ProblemNC, i: int, w_prev: np.ndarray, u_tilde: np.ndarray) -> np.ndarray:
    if u_tilde.shape != (prob.q,):
        raise DimensionError(f"u_tilde must have dimension {prob.q}")
    return prob.eval_gradw_H_i(i, w_prev, u_tilde)


def estimator_bound_slack(prob: ProblemNL, w0: np.ndarray, trajectory: Sequence[np.ndarray],
                          pi: np.ndarray) -> float:
    """
    Smallest slack of ||F_i - F(w_0)||^2 <= (M_F^2 / n) sum_j ||w_{j-1} - w_0||^2 over one epoch.

    trajectory lists w_0, ..., w_{n-1}, the points where the fresh evaluations were taken.
    """
    n = prob.n
    if len(trajectory) != n:
        raise DimensionError(f"trajectory must hold {n} iterates")
    reference = full_F(prob, w0)
    drift = sum(norm(w - w0) ** 2 for w in trajectory)
    bound = prob.constants.M_F ** 2 / n * drift
    state = Option1State.start(prob, w0, pi)
    worst = np.inf
    for j in range(n):
        estimate = estimate_F_option1(state, prob.eval_F_i(int(pi[j]), trajectory[j]))
        worst = min(worst, bound - norm(estimate - reference) ** 2)
    return float(worst)
