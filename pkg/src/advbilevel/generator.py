"""Stochastic data generator built from smoothed binary inverse CDFs.

Each feature j of a generated sample is t(z_j, alpha_j, beta_j) where
t(v, a, b) = (tanh(a (v - b)) + 1) / 2 is a smooth surrogate for the step
inverse CDF of a Bernoulli feature (0 for v <= b, else 1).  The slope a and
threshold b are the generator's parameters; the uniform draws z are fixed
ahead of time so the generator is a deterministic map of its parameters.

All functions are pure and broadcast over numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Open-interval clamp for the smoothed step: tanh saturates to +/-1 in
# float64 around |u| ~ 19, which would put t exactly on {0, 1}.
_T_LO = np.finfo(float).tiny
_T_HI = np.nextafter(1.0, 0.0)


@dataclass(frozen=True)
class GeneratorParams:
    """Slope and threshold vectors (alpha, beta), one pair per feature."""

    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        if alpha.ndim != 1 or beta.ndim != 1 or alpha.shape != beta.shape:
            raise ValueError(
                f"alpha and beta must be 1-d of equal length, got {alpha.shape} and {beta.shape}"
            )
        if alpha.size < 1:
            raise ValueError("need at least one feature")
        if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(beta))):
            raise ValueError("alpha and beta entries must be finite")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @property
    def q(self) -> int:
        return self.alpha.size

    def as_theta(self) -> np.ndarray:
        """Stacked parameter vector (alpha_1..alpha_q, beta_1..beta_q)."""
        return np.concatenate([self.alpha, self.beta])

    @staticmethod
    def from_theta(theta: np.ndarray) -> "GeneratorParams":
        theta = np.asarray(theta, dtype=float)
        if theta.ndim != 1 or theta.size % 2 != 0:
            raise ValueError(f"theta must be a flat vector of even length, got shape {theta.shape}")
        q = theta.size // 2
        return GeneratorParams(theta[:q], theta[q:])


@dataclass(frozen=True)
class NoiseMatrix:
    """Fixed uniform draws in (0,1), one row per sample to generate."""

    z: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        if z.ndim != 2:
            raise ValueError(f"z must be 2-d (m x q), got shape {z.shape}")
        if z.size and not np.all((z > 0.0) & (z < 1.0)):
            raise ValueError("z entries must lie strictly in (0,1)")
        z.setflags(write=False)
        object.__setattr__(self, "z", z)

    @property
    def m(self) -> int:
        return self.z.shape[0]

    @property
    def q(self) -> int:
        return self.z.shape[1]


def draw_noise(rng: np.random.Generator, m: int, q: int) -> NoiseMatrix:
    """Draw an m x q uniform noise matrix strictly inside (0,1)."""
    z = rng.uniform(0.0, 1.0, size=(m, q))
    # uniform() can return 0.0; nudge off the boundary
    z[z == 0.0] = _T_LO
    return NoiseMatrix(z)


def step_inverse_cdf(v, beta):
    """Exact inverse CDF of a Bernoulli feature: 0 where v <= beta, else 1."""
    return np.where(np.asarray(v) <= beta, 0.0, 1.0)


def _sech2(u):
    # sech^2(u) = 4 e^{-2|u|} / (1 + e^{-2|u|})^2; underflows to exactly 0
    # for |u| >~ 372 instead of overflowing like 1/cosh^2.
    e = np.exp(-2.0 * np.abs(u))
    return 4.0 * e / (1.0 + e) ** 2


def smooth_step(v, alpha, beta):
    """Smoothed step t(v, alpha, beta) = (tanh(alpha (v - beta)) + 1) / 2.

    Output is clamped into the open interval (0,1) so downstream logs stay
    finite even when tanh saturates in float64.
    """
    t = 0.5 * (np.tanh(alpha * (np.asarray(v, dtype=float) - beta)) + 1.0)
    return np.clip(t, _T_LO, _T_HI)


def smooth_step_derivs(v, alpha, beta):
    """First and second partials of smooth_step w.r.t. alpha and beta.

    With u = alpha (v - beta) and s = sech^2(u):

        dt/dalpha        =  (v - beta) s / 2
        dt/dbeta         =  -alpha s / 2
        d2t/dalpha2      =  -(v - beta)^2 s tanh(u)
        d2t/dbeta2       =  -alpha^2 s tanh(u)
        d2t/dalpha dbeta =  (u tanh(u) - 1/2) s

    Saturated inputs (|u| large) give s = 0 exactly, so every partial
    vanishes there rather than over- or underflowing.

    Returns a dict with keys dt_dalpha, dt_dbeta, d2t_dalpha2, d2t_dbeta2,
    d2t_dalphadbeta; each value broadcasts over the inputs.
    """
    v = np.asarray(v, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    d = v - beta
    u = alpha * d
    s = _sech2(u)
    th = np.tanh(u)
    s_th = s * th
    return {
        "dt_dalpha": 0.5 * d * s,
        "dt_dbeta": -0.5 * alpha * s,
        "d2t_dalpha2": -(d**2) * s_th,
        "d2t_dbeta2": -(alpha**2) * s_th,
        "d2t_dalphadbeta": (u * th - 0.5) * s,
    }


def generate_row(z_row: np.ndarray, params: GeneratorParams) -> np.ndarray:
    """One generated sample: component j is smooth_step(z_j, alpha_j, beta_j)."""
    z_row = np.asarray(z_row, dtype=float)
    if z_row.shape != (params.q,):
        raise ValueError(f"noise row has shape {z_row.shape}, expected ({params.q},)")
    return smooth_step(z_row, params.alpha, params.beta)


def generate_matrix(z: NoiseMatrix, params: GeneratorParams) -> np.ndarray:
    """Full m x q matrix of generated samples, row k from noise row k."""
    if z.q != params.q:
        raise ValueError(f"noise has {z.q} columns, parameters expect {params.q}")
    if z.m == 0:
        return np.empty((0, params.q))
    return smooth_step(z.z, params.alpha[None, :], params.beta[None, :])
