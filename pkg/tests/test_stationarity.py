import numpy as np
import pytest

from advbilevel.generator import GeneratorParams, NoiseMatrix
from advbilevel.objectives import (
    BowDataset,
    lower_gradients,
    lower_hessians,
    upper_gradients,
    upper_hessians,
)
from advbilevel.stationarity import (
    BilevelProblem,
    assemble_jacobian,
    assemble_residual,
    finite_difference_jacobian,
    pack_point,
    unpack_point,
)

from conftest import FD_TOL, random_instance, rel_err


def _problem(rng, **kwargs):
    data, z, gamma, mu, w, theta = random_instance(rng, **kwargs)
    return BilevelProblem(data, z, gamma, mu), w, theta


class TestResidual:
    def test_zero_zeta_reduces_middle_block_to_leader_gradient(self, rng):
        problem, w, theta = _problem(rng, q=2)
        params = GeneratorParams.from_theta(theta)
        up = upper_gradients(w, problem.data, problem.z, params, problem.gamma, problem.mu)
        res = assemble_residual(w, theta, 0.0, problem)
        assert np.array_equal(res[2:6], up.g_theta)

    def test_zero_weights_zero_mu_leaves_only_leader_w_block(self, rng):
        data, z, gamma, _, _, theta = random_instance(rng, q=3)
        problem = BilevelProblem(data, z, gamma, 0.0)
        res = assemble_residual(np.zeros(3), theta, 0.7, problem)
        assert np.all(res[3:] == 0.0)
        params = GeneratorParams.from_theta(theta)
        up = upper_gradients(np.zeros(3), data, z, params, gamma, 0.0)
        assert np.array_equal(res[:3], up.g_w)

    def test_matches_direct_concatenation(self, rng):
        problem, w, theta = _problem(rng)
        params = GeneratorParams.from_theta(theta)
        zeta = 1.3
        up = upper_gradients(w, problem.data, problem.z, params, problem.gamma, problem.mu)
        lo = lower_gradients(w, problem.z, params, problem.gamma, problem.mu)
        expected = np.concatenate([up.g_w, up.g_theta - zeta**2 * lo.g_theta, lo.g_theta])
        assert np.array_equal(assemble_residual(w, theta, zeta, problem), expected)

    def test_even_in_zeta(self, rng):
        problem, w, theta = _problem(rng)
        r_pos = assemble_residual(w, theta, 0.9, problem)
        r_neg = assemble_residual(w, theta, -0.9, problem)
        assert np.array_equal(r_pos, r_neg)


class TestJacobian:
    def test_zero_zeta_kills_last_column(self, rng):
        problem, w, theta = _problem(rng)
        jac = assemble_jacobian(w, theta, 0.0, problem)
        assert np.all(jac[:, -1] == 0.0)

    def test_shape_and_structural_zeros(self, rng):
        problem, w, theta = _problem(rng, q=2)
        jac = assemble_jacobian(w, theta, 0.4, problem)
        assert jac.shape == (10, 7)
        assert np.all(jac[:2, -1] == 0.0)
        assert np.all(jac[6:, -1] == 0.0)

    def test_last_column_sign_flips_with_zeta(self, rng):
        problem, w, theta = _problem(rng)
        j_pos = assemble_jacobian(w, theta, 0.8, problem)
        j_neg = assemble_jacobian(w, theta, -0.8, problem)
        assert np.array_equal(j_pos[:, :-1], j_neg[:, :-1])
        assert np.array_equal(j_pos[:, -1], -j_neg[:, -1])

    def test_hand_assembled_blocks_single_feature(self, rng):
        data = BowDataset(np.array([[1.0]]), np.array([1.0]))
        z = NoiseMatrix(np.array([[0.35]]))
        gamma = np.ones(1)
        mu = 0.05
        problem = BilevelProblem(data, z, gamma, mu)
        w = np.array([1.5])
        theta = np.array([4.0, 0.6])
        zeta = 0.7
        params = GeneratorParams.from_theta(theta)
        uh = upper_hessians(w, data, z, params, gamma, mu)
        lh = lower_hessians(w, z, params, gamma, mu)
        lg = lower_gradients(w, z, params, gamma, mu)
        expected = np.zeros((5, 4))
        expected[:1, :1] = uh.h_ww
        expected[:1, 1:3] = uh.h_wtheta
        expected[1:3, :1] = uh.h_wtheta.T - zeta**2 * lh.h_wtheta.T
        expected[1:3, 1:3] = uh.h_thetatheta - zeta**2 * lh.h_thetatheta
        expected[1:3, 3] = -2.0 * zeta * lg.g_theta
        expected[3:, :1] = lh.h_wtheta.T
        expected[3:, 1:3] = lh.h_thetatheta
        assert np.array_equal(assemble_jacobian(w, theta, zeta, problem), expected)

    def test_matches_finite_differences(self, rng):
        for _ in range(50):
            problem, w, theta = _problem(rng)
            zeta = float(rng.uniform(-2, 2))
            jac = assemble_jacobian(w, theta, zeta, problem)
            fd = finite_difference_jacobian(w, theta, zeta, problem, step=1e-6)
            assert rel_err(jac, fd) < FD_TOL


class TestFiniteDifferenceJacobian:
    def test_rejects_nonpositive_step(self, rng):
        problem, w, theta = _problem(rng)
        with pytest.raises(ValueError):
            finite_difference_jacobian(w, theta, 0.1, problem, step=0.0)

    def test_middle_block_is_linear_in_zeta_squared(self, rng):
        problem, w, theta = _problem(rng)
        q = problem.q
        zeta = 1.7
        params = GeneratorParams.from_theta(theta)
        lo = lower_gradients(w, problem.z, params, problem.gamma, problem.mu)
        delta = (assemble_residual(w, theta, zeta, problem)
                 - assemble_residual(w, theta, 0.0, problem))
        assert np.allclose(delta[q:3 * q], -zeta**2 * lo.g_theta, rtol=0, atol=1e-12)
        assert np.all(delta[:q] == 0.0)
        assert np.all(delta[3 * q:] == 0.0)

    def test_step_halving_reduces_error_quadratically(self, rng):
        # smooth, mild-scale point so truncation dominates roundoff
        problem, w, theta = _problem(rng, q=2, n=5, m=2, alpha_scale=3.0)
        zeta = 0.6
        exact = assemble_jacobian(w, theta, zeta, problem)
        e1 = np.linalg.norm(finite_difference_jacobian(w, theta, zeta, problem, 1e-3) - exact)
        e2 = np.linalg.norm(finite_difference_jacobian(w, theta, zeta, problem, 5e-4) - exact)
        assert e2 < e1 / 3.0  # ~4x for an O(h^2) scheme


class TestPacking:
    def test_round_trip(self, rng):
        w = rng.normal(size=3)
        theta = rng.normal(size=6)
        x = pack_point(w, theta, 0.25)
        w2, theta2, zeta2 = unpack_point(x, 3)
        assert np.array_equal(w, w2) and np.array_equal(theta, theta2) and zeta2 == 0.25

    def test_unpack_rejects_bad_length(self):
        with pytest.raises(ValueError):
            unpack_point(np.zeros(9), 3)

    def test_problem_validates_dimensions(self, rng):
        data = BowDataset(np.zeros((2, 3)), np.zeros(2))
        z = NoiseMatrix(np.full((2, 4), 0.5))
        with pytest.raises(ValueError):
            BilevelProblem(data, z, np.ones(2), 0.1)
