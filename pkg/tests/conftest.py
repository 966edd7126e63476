"""Shared finite-difference oracles and random-instance builders.

The finite-difference helpers here are the independent check against the
analytic derivative code: they only ever call objective/residual functions,
never the gradient/Hessian/Jacobian paths they validate.
"""

import numpy as np
import pytest

from advbilevel.generator import GeneratorParams, NoiseMatrix
from advbilevel.objectives import BowDataset

FD_STEP = 1e-6
FD_TOL = 1e-5


def rel_err(a, b) -> float:
    """Norm of the difference over max(1, norms).

    The unit floor keeps the comparison meaningful when both sides are
    numerically zero (saturated tanh regions) where central differences of
    an O(10) objective carry ~1e-9 of cancellation noise.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(1.0, np.linalg.norm(a), np.linalg.norm(b)))


def fd_gradient(f, x, step=FD_STEP):
    """Central-difference gradient of a scalar function of a flat vector."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        hi, lo = x.copy(), x.copy()
        hi[i] += step
        lo[i] -= step
        g[i] = (f(hi) - f(lo)) / (2.0 * step)
    return g


def fd_jacobian(f, x, step=FD_STEP):
    """Central-difference Jacobian of a vector function of a flat vector."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        hi, lo = x.copy(), x.copy()
        hi[i] += step
        lo[i] -= step
        cols.append((np.asarray(f(hi)) - np.asarray(f(lo))) / (2.0 * step))
    return np.column_stack(cols)


def random_instance(rng, q=None, n=None, m=None, alpha_scale=None, mixed_gamma=True):
    """Small random problem: binary data, noise, parameters, weights."""
    q = int(rng.integers(1, 6)) if q is None else q
    n = int(rng.integers(0, 21)) if n is None else n
    m = int(rng.integers(1, 6)) if m is None else m
    if alpha_scale is None:
        alpha_scale = float(rng.choice([2.0, 30.0, 1000.0]))
    X = rng.integers(0, 2, (n, q)).astype(float)
    y = rng.integers(0, 2, n).astype(float)
    data = BowDataset(X, y)
    z = NoiseMatrix(rng.uniform(0.01, 0.99, (m, q)))
    gamma = rng.integers(0, 2, m).astype(float) if mixed_gamma else np.ones(m)
    mu = float(rng.uniform(0.0, 0.5))
    w = rng.uniform(-5.0, 5.0, q)
    theta = np.concatenate([rng.uniform(-alpha_scale, alpha_scale, q),
                            rng.uniform(-0.2, 1.2, q)])
    return data, z, gamma, mu, w, theta


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
