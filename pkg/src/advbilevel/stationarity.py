"""Necessary-condition system for the pessimistic learner/generator game.

A candidate solution stacks the unknowns x = (w, theta, zeta) in R^{3q+1}.
The residual has 5q rows in three blocks:

    [ grad_w F(w, theta)                                   ]   q rows
    [ grad_theta F(w, theta) - zeta^2 grad_theta f(w, theta)]  2q rows
    [ grad_theta f(w, theta)                               ]   2q rows

where F is the leader objective, f the follower objective, and zeta^2 plays
the role of a nonnegative multiplier coupling the two.  The last block pins
follower stationarity directly, which the multiplier row alone does not
guarantee.  Solving residual = 0 in the least-squares sense is the job of
the damped solver in lm.py; the Jacobian here feeds its normal equations.

Block order inside theta is (alpha_1..alpha_q, beta_1..beta_q).  Jacobian
rows follow the residual blocks and columns follow (w | theta | zeta), so
the dumped matrices of two runs are directly comparable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .generator import GeneratorParams, NoiseMatrix
from .objectives import (
    BowDataset,
    lower_gradients,
    lower_hessians,
    upper_gradients,
    upper_hessians,
)


@dataclass(frozen=True)
class BilevelProblem:
    """Static data, fixed noise, generated-row labels and regularisation."""

    data: BowDataset
    z: NoiseMatrix
    gamma: np.ndarray
    mu: float

    def __post_init__(self):
        gamma = np.asarray(self.gamma, dtype=float)
        if gamma.shape != (self.z.m,):
            raise ValueError(f"gamma has shape {gamma.shape}, expected ({self.z.m},)")
        if self.data.q != self.z.q:
            raise ValueError(f"data has {self.data.q} features, noise has {self.z.q}")
        if self.mu < 0:
            raise ValueError("mu must be nonnegative")
        gamma.setflags(write=False)
        object.__setattr__(self, "gamma", gamma)

    @property
    def q(self) -> int:
        return self.data.q

    @property
    def n(self) -> int:
        return self.data.n

    @property
    def m(self) -> int:
        return self.z.m


def pack_point(w: np.ndarray, theta: np.ndarray, zeta: float) -> np.ndarray:
    return np.concatenate([np.asarray(w, float), np.asarray(theta, float), [float(zeta)]])


def unpack_point(x: np.ndarray, q: int):
    x = np.asarray(x, dtype=float)
    if x.shape != (3 * q + 1,):
        raise ValueError(f"point has shape {x.shape}, expected ({3 * q + 1},)")
    return x[:q], x[q:3 * q], float(x[-1])


def assemble_residual(w, theta, zeta: float, problem: BilevelProblem) -> np.ndarray:
    """Stack the three stationarity blocks into a 5q-vector."""
    params = GeneratorParams.from_theta(np.asarray(theta, dtype=float))
    up = upper_gradients(w, problem.data, problem.z, params, problem.gamma, problem.mu)
    lo = lower_gradients(w, problem.z, params, problem.gamma, problem.mu)
    return np.concatenate([up.g_w, up.g_theta - zeta**2 * lo.g_theta, lo.g_theta])


def assemble_jacobian(w, theta, zeta: float, problem: BilevelProblem) -> np.ndarray:
    """Jacobian of assemble_residual: 5q rows, 3q+1 columns (w | theta | zeta).

    Row blocks differentiate the residual blocks; the only zeta dependence is
    the middle block's -zeta^2 multiplier, so the last column is
    (0, -2 zeta grad_theta f, 0).
    """
    params = GeneratorParams.from_theta(np.asarray(theta, dtype=float))
    q = params.q
    up_h = upper_hessians(w, problem.data, problem.z, params, problem.gamma, problem.mu)
    lo_h = lower_hessians(w, problem.z, params, problem.gamma, problem.mu)
    lo_g = lower_gradients(w, problem.z, params, problem.gamma, problem.mu)

    jac = np.zeros((5 * q, 3 * q + 1))
    jac[:q, :q] = up_h.h_ww
    jac[:q, q:3 * q] = up_h.h_wtheta
    jac[q:3 * q, :q] = up_h.h_wtheta.T - zeta**2 * lo_h.h_wtheta.T
    jac[q:3 * q, q:3 * q] = up_h.h_thetatheta - zeta**2 * lo_h.h_thetatheta
    jac[q:3 * q, -1] = -2.0 * zeta * lo_g.g_theta
    jac[3 * q:, :q] = lo_h.h_wtheta.T
    jac[3 * q:, q:3 * q] = lo_h.h_thetatheta
    return jac


def finite_difference_jacobian(w, theta, zeta: float, problem: BilevelProblem,
                               step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of assemble_residual, one column per unknown."""
    if step <= 0:
        raise ValueError("step must be positive")
    q = problem.q
    x0 = pack_point(w, theta, zeta)
    cols = []
    for i in range(x0.size):
        hi, lo = x0.copy(), x0.copy()
        hi[i] += step
        lo[i] -= step
        r_hi = assemble_residual(*unpack_point(hi, q), problem)
        r_lo = assemble_residual(*unpack_point(lo, q), problem)
        cols.append((r_hi - r_lo) / (2.0 * step))
    return np.column_stack(cols)
