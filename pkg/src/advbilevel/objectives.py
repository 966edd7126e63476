"""Losses and derivative blocks for the learner/generator game.

The learner fits weights w by logistic loss on static rows X (labels y) plus
generated rows G(z, theta) (labels gamma); the generator is scored by the
same loss with flipped labels 1 - gamma, so it is rewarded for samples the
classifier gets wrong.  Regularisation mu ||w||^2 is added once per sample,
matching the printed per-sample loss, so the leader objective carries
(n + m) mu ||w||^2 and the follower objective m mu ||w||^2.

Gradients and Hessians follow the stacked parameter convention
theta = (alpha_1..alpha_q, beta_1..beta_q); all second-derivative blocks are
assembled analytically and are validated against finite differences in the
test suite.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.special import expit

from .generator import GeneratorParams, NoiseMatrix, generate_matrix, smooth_step_derivs

# Clamp for sigma before logs; raw sigma is used inside derivative products.
_SIGMA_EPS = 1e-12


@dataclass(frozen=True)
class BowDataset:
    """Binary bag-of-words design matrix with labels and optional timestamps."""

    X: np.ndarray
    y: np.ndarray
    timestamps: Optional[Sequence] = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if X.ndim != 2:
            raise ValueError(f"X must be 2-d, got shape {X.shape}")
        if X.size and not np.all((X == 0.0) | (X == 1.0)):
            raise ValueError("X entries must be 0 or 1")
        if y.shape != (X.shape[0],):
            raise ValueError(f"y has shape {y.shape}, expected ({X.shape[0]},)")
        if y.size and not np.all((y == 0.0) | (y == 1.0)):
            raise ValueError("y entries must be 0 or 1")
        if self.timestamps is not None and len(self.timestamps) != X.shape[0]:
            raise ValueError("timestamps length must match number of rows")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def q(self) -> int:
        return self.X.shape[1]


class Gradients(NamedTuple):
    g_w: np.ndarray      # (q,)
    g_theta: np.ndarray  # (2q,) stacked (d/dalpha, d/dbeta)


class Hessians(NamedTuple):
    h_ww: np.ndarray          # (q, q)
    h_wtheta: np.ndarray      # (q, 2q)
    h_thetatheta: np.ndarray  # (2q, 2q)


def predict(w: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Class-1 probability sigma(w.x) = 1 / (1 + exp(-w.x)), overflow safe.

    x may be a single feature vector or a matrix of rows.
    """
    w = np.asarray(w, dtype=float)
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != w.shape[0]:
        raise ValueError(f"feature dimension {x.shape[-1]} does not match weights {w.shape[0]}")
    return expit(x @ w)


def _xent(sigma: np.ndarray, labels: np.ndarray) -> np.ndarray:
    s = np.clip(sigma, _SIGMA_EPS, 1.0 - _SIGMA_EPS)
    return -labels * np.log(s) - (1.0 - labels) * np.log1p(-s)


def logistic_loss(w: np.ndarray, x: np.ndarray, label: float, mu: float) -> float:
    """Per-sample logistic loss -y log s - (1-y) log(1-s) + mu ||w||^2."""
    if label not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {label!r}")
    w = np.asarray(w, dtype=float)
    return float(_xent(predict(w, x), float(label)) + mu * w @ w)


def _theta_partials(z: NoiseMatrix, params: GeneratorParams):
    return smooth_step_derivs(z.z, params.alpha[None, :], params.beta[None, :])


def _check_dims(w, z: NoiseMatrix, params: GeneratorParams, gamma):
    if w.shape != (params.q,):
        raise ValueError(f"w has shape {w.shape}, expected ({params.q},)")
    if z.q != params.q:
        raise ValueError(f"noise has {z.q} columns, parameters expect {params.q}")
    if gamma.shape != (z.m,):
        raise ValueError(f"gamma has shape {gamma.shape}, expected ({z.m},)")
    if gamma.size and not np.all((gamma == 0.0) | (gamma == 1.0)):
        raise ValueError("gamma entries must be 0 or 1")


def upper_objective(w, data: BowDataset, z: NoiseMatrix, params: GeneratorParams,
                    gamma, mu: float) -> float:
    """Leader objective: loss on static rows plus loss on generated rows."""
    w = np.asarray(w, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    _check_dims(w, z, params, gamma)
    if data.q != params.q:
        raise ValueError(f"data has {data.q} features, parameters expect {params.q}")
    G = generate_matrix(z, params)
    total = _xent(predict(w, data.X), data.y).sum() if data.n else 0.0
    total += _xent(predict(w, G), gamma).sum() if z.m else 0.0
    return float(total + (data.n + z.m) * mu * (w @ w))


def lower_objective(w, z: NoiseMatrix, params: GeneratorParams, gamma, mu: float) -> float:
    """Follower objective: loss on generated rows with labels flipped to 1 - gamma."""
    w = np.asarray(w, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    _check_dims(w, z, params, gamma)
    G = generate_matrix(z, params)
    total = _xent(predict(w, G), 1.0 - gamma).sum() if z.m else 0.0
    return float(total + z.m * mu * (w @ w))


def _generated_grad_theta(w, z, params, labels, derivs) -> np.ndarray:
    # d/dtheta_j of sum_k loss_k = w_j sum_k (sigma_k - label_k) dt_j(k)
    G = generate_matrix(z, params)
    resid = predict(w, G) - labels
    g_alpha = w * (resid @ derivs["dt_dalpha"])
    g_beta = w * (resid @ derivs["dt_dbeta"])
    return np.concatenate([g_alpha, g_beta])


def upper_gradients(w, data: BowDataset, z: NoiseMatrix, params: GeneratorParams,
                    gamma, mu: float) -> Gradients:
    """Gradient of the leader objective w.r.t. w and theta.

    g_w = X'(sigma(Xw) - y) + G'(sigma(Gw) - gamma) + 2 mu (n + m) w;
    g_theta chains the loss through the generator's theta-partials.
    """
    w = np.asarray(w, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    _check_dims(w, z, params, gamma)
    g_w = 2.0 * mu * (data.n + z.m) * w
    if data.n:
        g_w = g_w + data.X.T @ (predict(w, data.X) - data.y)
    if z.m:
        G = generate_matrix(z, params)
        g_w = g_w + G.T @ (predict(w, G) - gamma)
        g_theta = _generated_grad_theta(w, z, params, gamma, _theta_partials(z, params))
    else:
        g_theta = np.zeros(2 * params.q)
    return Gradients(g_w, g_theta)


def lower_gradients(w, z: NoiseMatrix, params: GeneratorParams, gamma, mu: float) -> Gradients:
    """Gradient of the follower objective (flipped labels, no static term)."""
    w = np.asarray(w, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    _check_dims(w, z, params, gamma)
    labels = 1.0 - gamma
    g_w = 2.0 * mu * z.m * w
    if z.m:
        G = generate_matrix(z, params)
        g_w = g_w + G.T @ (predict(w, G) - labels)
        g_theta = _generated_grad_theta(w, z, params, labels, _theta_partials(z, params))
    else:
        g_theta = np.zeros(2 * params.q)
    return Gradients(g_w, g_theta)


def _data_hess_ww(w, X) -> np.ndarray:
    s = predict(w, X)
    return (X.T * (s * (1.0 - s))) @ X


def _generated_hessians(w, z, params, labels):
    """Hessian blocks of the generated-row loss sum (no static, no reg).

    Per sample k with sigma_k = sigma(w.G_k), varsig_k = sigma_k(1 - sigma_k)
    and first partials D_j(k) of feature j w.r.t. its own alpha or beta:

      d2/dw dw      : G' diag(varsig) G
      d2/dw_l dth_j : [l==j](sigma_k - label_k) D_j + w_j varsig_k G_kl D_j
      d2/dth_i dth_j: w_i w_j varsig_k D_i D_j  (+ own-feature second partial
                      term w_i (sigma_k - label_k) d2t_i when i == j)
    """
    q = params.q
    G = generate_matrix(z, params)
    s = predict(w, G)
    resid = s - labels
    varsig = s * (1.0 - s)
    derivs = _theta_partials(z, params)
    da, db = derivs["dt_dalpha"], derivs["dt_dbeta"]

    h_ww = (G.T * varsig) @ G

    def wtheta_block(D):
        return np.diag(resid @ D) + (G.T @ (varsig[:, None] * D)) * w[None, :]

    h_wtheta = np.hstack([wtheta_block(da), wtheta_block(db)])

    ww = np.outer(w, w)

    def thetatheta_block(Di, Dj, d2_key):
        block = ww * (Di.T @ (varsig[:, None] * Dj))
        block[np.diag_indices(q)] += w * (resid @ derivs[d2_key])
        return block

    h_aa = thetatheta_block(da, da, "d2t_dalpha2")
    h_bb = thetatheta_block(db, db, "d2t_dbeta2")
    h_ab = thetatheta_block(da, db, "d2t_dalphadbeta")
    h_thetatheta = np.block([[h_aa, h_ab], [h_ab.T, h_bb]])
    return h_ww, h_wtheta, h_thetatheta


def upper_hessians(w, data: BowDataset, z: NoiseMatrix, params: GeneratorParams,
                   gamma, mu: float) -> Hessians:
    """Second-derivative blocks of the leader objective."""
    w = np.asarray(w, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    _check_dims(w, z, params, gamma)
    q = params.q
    h_ww = 2.0 * mu * (data.n + z.m) * np.eye(q)
    if data.n:
        h_ww = h_ww + _data_hess_ww(w, data.X)
    if z.m:
        g_ww, h_wtheta, h_thetatheta = _generated_hessians(w, z, params, gamma)
        h_ww = h_ww + g_ww
    else:
        h_wtheta = np.zeros((q, 2 * q))
        h_thetatheta = np.zeros((2 * q, 2 * q))
    return Hessians(h_ww, h_wtheta, h_thetatheta)


def lower_hessians(w, z: NoiseMatrix, params: GeneratorParams, gamma, mu: float) -> Hessians:
    """Second-derivative blocks of the follower objective."""
    w = np.asarray(w, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    _check_dims(w, z, params, gamma)
    q = params.q
    h_ww = 2.0 * mu * z.m * np.eye(q)
    if z.m:
        g_ww, h_wtheta, h_thetatheta = _generated_hessians(w, z, params, 1.0 - gamma)
        h_ww = h_ww + g_ww
    else:
        h_wtheta = np.zeros((q, 2 * q))
        h_thetatheta = np.zeros((2 * q, 2 * q))
    return Hessians(h_ww, h_wtheta, h_thetatheta)
