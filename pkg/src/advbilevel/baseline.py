"""Plain regularised logistic regression on the static data: the no-adversary control."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .objectives import BowDataset, _xent, predict


@dataclass(frozen=True)
class BaselineConfig:
    mu: float = 0.01
    max_iter: int = 5000
    grad_tol: float = 1e-6
    armijo_c: float = 1e-4   # sufficient-decrease fraction
    shrink: float = 0.5      # backtracking factor
    step_min: float = 1e-16

    def __post_init__(self):
        if self.mu < 0 or min(self.grad_tol, self.armijo_c, self.step_min) <= 0:
            raise ValueError("mu must be nonnegative, tolerances positive")
        if not (0 < self.shrink < 1):
            raise ValueError("shrink must lie in (0, 1)")


@dataclass
class BaselineResult:
    weights: np.ndarray
    converged: bool
    iterations: int
    grad_norm: float


def _objective(w, X, y, mu) -> float:
    return float(_xent(predict(w, X), y).sum() + len(y) * mu * (w @ w))


def _gradient(w, X, y, mu) -> np.ndarray:
    return X.T @ (predict(w, X) - y) + 2.0 * mu * len(y) * w


def train_baseline(data: BowDataset, cfg: BaselineConfig = BaselineConfig()) -> BaselineResult:
    """Gradient descent with Armijo backtracking from w = 0.

    Per-sample regularisation matches the game objectives: the trained
    objective is sum_i loss(w, X_i, y_i) with mu ||w||^2 inside each term.
    Stops at gradient norm <= grad_tol; if max_iter runs out or the
    backtracking step underflows, the best iterate is returned with
    converged=False.
    """
    if data.n < 1:
        raise ValueError("need at least one training row")
    X, y, mu = data.X, data.y, cfg.mu
    w = np.zeros(data.q)
    f = _objective(w, X, y, mu)
    iterations = 0
    for iterations in range(cfg.max_iter + 1):
        g = _gradient(w, X, y, mu)
        gnorm = float(np.linalg.norm(g))
        if gnorm <= cfg.grad_tol:
            return BaselineResult(w, True, iterations, gnorm)
        if iterations == cfg.max_iter:
            break
        slope = -float(g @ g)
        step = 1.0
        while step >= cfg.step_min:
            w_new = w - step * g
            f_new = _objective(w_new, X, y, mu)
            if f_new <= f + cfg.armijo_c * step * slope:
                break
            step *= cfg.shrink
        else:
            # no step gives sufficient decrease; give up at the best iterate
            return BaselineResult(w, False, iterations, gnorm)
        w, f = w_new, f_new
    return BaselineResult(w, False, iterations, float(np.linalg.norm(_gradient(w, X, y, mu))))


def classify(w: np.ndarray, X: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Hard labels: 1 where the class-1 probability is at least threshold."""
    return (predict(w, X) >= threshold).astype(int)


def save_weights(w: np.ndarray, path) -> None:
    """One real per line."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for v in np.asarray(w, dtype=float):
            fh.write(f"{v!r}\n")


def load_weights(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        return np.array([float(line) for line in fh if line.strip()])
