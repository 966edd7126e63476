"""Damped Levenberg-Marquardt iteration for overdetermined residual systems.

Each step solves the damped normal equations (J'J + eta I) d = -J'Phi and
backtracks a step size omega from 1 until the squared residual shows
sufficient decrease.  The damping eta is divided by eta_decay whenever the
squared residual over the last kappa accepted steps shrinks by less than a
factor tau (slow progress), so the iteration approaches a Gauss-Newton step
near a solution.  A failed backtrack resets eta to its starting value and
skips the step; two consecutive failures abort the run as stalled.

The solver is generic over residual/jacobian callables; see
solve_stationarity for the game-specific entry point.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, NamedTuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .stationarity import BilevelProblem, assemble_jacobian, assemble_residual, pack_point, unpack_point

# eta must stay strictly positive; decay floor well above underflow
_ETA_FLOOR = 1e-300


class SingularSystemError(RuntimeError):
    """Normal equations could not be factorised even under heavy damping."""


class SolveStatus(Enum):
    CONVERGED = "converged"
    MAX_ITER = "max_iter"
    STALLED = "stalled"


@dataclass(frozen=True)
class LmConfig:
    epsilon: float = 1e-8      # stop once ||Phi||^2 <= epsilon
    max_iter: int = 1000
    eta0: float = 1e-3         # initial damping
    kappa: int = 5             # lookback for the slow-progress test
    tau: float = 0.9           # decay eta when ||Phi_k||^2 / ||Phi_{k-kappa}||^2 > tau
    omega_min: float = 1e-100  # backtracking gives up below this step size
    eta_decay: float = 10.0

    def __post_init__(self):
        if min(self.epsilon, self.eta0, self.omega_min) <= 0 or self.eta_decay <= 1:
            raise ValueError("epsilon, eta0, omega_min must be positive and eta_decay > 1")
        if not (0 < self.tau <= 1):
            raise ValueError("tau must lie in (0, 1]")
        if self.kappa < 1 or self.max_iter < 1:
            raise ValueError("kappa and max_iter must be at least 1")


class TraceRecord(NamedTuple):
    iteration: int
    residual_sq: float
    eta: float
    omega: float
    accepted: bool


@dataclass
class SolverState:
    point: np.ndarray
    eta: float
    iterations: int
    residual_sq_history: List[float]
    status: SolveStatus
    trace: List[TraceRecord] = field(default_factory=list)

    @property
    def residual_sq(self) -> float:
        return self.residual_sq_history[-1]


def lm_direction(jac: np.ndarray, residual: np.ndarray, eta: float) -> np.ndarray:
    """Solve (J'J + eta I) d = -J'Phi by Cholesky, bumping eta on failure.

    The damped matrix is positive definite for eta > 0, but badly scaled
    systems can defeat the factorisation in finite precision; eta is then
    multiplied by 10 up to 20 times before giving up.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    jtj = jac.T @ jac
    rhs = -(jac.T @ residual)
    if not (np.all(np.isfinite(jtj)) and np.all(np.isfinite(rhs))):
        raise SingularSystemError("normal equations contain non-finite entries")
    eye = np.eye(jtj.shape[0])
    for _ in range(21):
        try:
            return cho_solve(cho_factor(jtj + eta * eye, lower=True), rhs)
        except np.linalg.LinAlgError:
            eta *= 10.0
    raise SingularSystemError("damped normal equations not factorisable even under heavy damping")


class LineSearchResult(NamedTuple):
    omega: float
    accepted: bool
    point: np.ndarray
    residual: np.ndarray
    residual_sq: float


def line_search(x: np.ndarray, d: np.ndarray, residual_fn: Callable[[np.ndarray], np.ndarray],
                phi_sq: float, slope: float, omega_min: float) -> LineSearchResult:
    """Halve omega from 1 until ||Phi(x + omega d)||^2 < ||Phi(x)||^2 + omega slope.

    slope is (J'Phi).d, nonpositive for a damped-normal-equations direction,
    so the bound tightens toward simple decrease as omega shrinks.  A zero
    direction is accepted in place (the caller then stops on tolerance).
    Returns accepted=False once omega falls below omega_min.
    """
    if not np.any(d):
        return LineSearchResult(1.0, True, x, residual_fn(x), phi_sq)
    omega = 1.0
    while omega >= omega_min:
        cand = x + omega * d
        res = residual_fn(cand)
        res_sq = float(res @ res)
        if res_sq < phi_sq + omega * slope:
            return LineSearchResult(omega, True, cand, res, res_sq)
        omega *= 0.5
    return LineSearchResult(omega, False, x, np.empty(0), phi_sq)


def solve(x0: np.ndarray,
          residual_fn: Callable[[np.ndarray], np.ndarray],
          jacobian_fn: Callable[[np.ndarray], np.ndarray],
          config: LmConfig = LmConfig()) -> SolverState:
    """Run the damped iteration from x0 until tolerance, max_iter, or stall.

    The slow-progress window restarts whenever a backtrack fails (eta was
    just reset, so older residuals no longer reflect the current damping).
    residual_sq_history records the initial value plus one value per
    accepted step and is therefore nonincreasing.
    """
    x = np.asarray(x0, dtype=float).copy()
    eta = config.eta0
    phi = residual_fn(x)
    phi_sq = float(phi @ phi)
    history = [phi_sq]
    window = [phi_sq]
    trace: List[TraceRecord] = []
    failures = 0
    status = None
    k = 0

    while k < config.max_iter:
        if phi_sq <= config.epsilon:
            status = SolveStatus.CONVERGED
            break
        if not (np.all(np.isfinite(phi)) and np.isfinite(phi_sq)):
            status = SolveStatus.STALLED
            break
        jac = jacobian_fn(x)
        if not np.all(np.isfinite(jac)):
            status = SolveStatus.STALLED
            break
        d = lm_direction(jac, phi, eta)
        slope = float((jac.T @ phi) @ d)
        ls = line_search(x, d, residual_fn, phi_sq, slope, config.omega_min)
        k += 1
        if not ls.accepted:
            trace.append(TraceRecord(k, phi_sq, eta, ls.omega, False))
            eta = config.eta0
            window = [phi_sq]
            failures += 1
            if failures >= 2:
                status = SolveStatus.STALLED
                break
            continue
        failures = 0
        x, phi, phi_sq = ls.point, ls.residual, ls.residual_sq
        trace.append(TraceRecord(k, phi_sq, eta, ls.omega, True))
        history.append(phi_sq)
        window.append(phi_sq)
        if len(window) > config.kappa:
            anchor = window[-1 - config.kappa]
            if anchor > 0 and phi_sq / anchor > config.tau:
                eta = max(eta / config.eta_decay, _ETA_FLOOR)

    if status is None:
        status = SolveStatus.CONVERGED if phi_sq <= config.epsilon else SolveStatus.MAX_ITER
    return SolverState(point=x, eta=eta, iterations=k, residual_sq_history=history,
                       status=status, trace=trace)


def solve_stationarity(problem: BilevelProblem, w0, theta0, zeta0: float,
                       config: LmConfig = LmConfig()) -> SolverState:
    """Solve the game's stationarity system from the given starting point."""
    q = problem.q

    def residual_fn(x):
        return assemble_residual(*unpack_point(x, q), problem)

    def jacobian_fn(x):
        return assemble_jacobian(*unpack_point(x, q), problem)

    return solve(pack_point(w0, theta0, zeta0), residual_fn, jacobian_fn, config)
