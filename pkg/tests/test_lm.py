import numpy as np
import pytest

from advbilevel.generator import NoiseMatrix, draw_noise
from advbilevel.lm import (
    LmConfig,
    SingularSystemError,
    SolveStatus,
    line_search,
    lm_direction,
    solve,
    solve_stationarity,
)
from advbilevel.objectives import BowDataset
from advbilevel.stationarity import BilevelProblem

from conftest import fd_gradient


class TestLmDirection:
    def test_zero_residual_gives_zero_direction(self, rng):
        jac = rng.normal(size=(5, 3))
        d = lm_direction(jac, np.zeros(5), 1.0)
        assert np.allclose(d, 0.0, atol=1e-15)

    def test_identity_toy(self):
        r = np.array([2.0, -4.0, 6.0])
        d = lm_direction(np.eye(3), r, 1.0)
        assert np.allclose(d, -r / 2.0, atol=1e-14)

    def test_matches_direct_normal_equations_solve(self, rng):
        jac = rng.normal(size=(5, 4))
        res = rng.normal(size=5)
        eta = 0.37
        d = lm_direction(jac, res, eta)
        expected = np.linalg.solve(jac.T @ jac + eta * np.eye(4), -jac.T @ res)
        assert np.linalg.norm(d - expected) < 1e-10

    def test_gauss_newton_limit(self, rng):
        # tiny frozen damping on a well-conditioned full-rank system matches
        # an independently computed least-squares direction
        jac = rng.normal(size=(8, 4)) + 2.0 * np.eye(8, 4)
        res = rng.normal(size=8)
        d = lm_direction(jac, res, 1e-12)
        gn = np.linalg.lstsq(jac, -res, rcond=None)[0]
        assert np.linalg.norm(d - gn) / np.linalg.norm(gn) < 1e-8

    def test_rejects_nonpositive_eta(self):
        with pytest.raises(ValueError):
            lm_direction(np.eye(2), np.ones(2), 0.0)

    def test_defective_jacobian_raises_singular(self):
        jac = np.full((4, 3), np.nan)
        with pytest.raises(SingularSystemError):
            lm_direction(jac, np.ones(4), 1e-3)


class TestLineSearch:
    @staticmethod
    def _quadratic_residual(x):
        return x.copy()

    def test_full_step_accepted_on_steep_descent(self):
        x = np.array([4.0])
        d = np.array([-3.9])  # lands close to the root of ||x||^2
        phi_sq = 16.0
        slope = float(x @ d)
        res = line_search(x, d, self._quadratic_residual, phi_sq, slope, 1e-100)
        assert res.accepted and res.omega == 1.0
        assert res.residual_sq < 0.25

    def test_zero_direction_accepted_in_place(self):
        x = np.array([1.0, 2.0])
        res = line_search(x, np.zeros(2), self._quadratic_residual, 5.0, 0.0, 1e-100)
        assert res.accepted and res.omega == 1.0
        assert np.array_equal(res.point, x)

    def test_ascent_direction_exhausts(self):
        x = np.array([1.0])
        d = np.array([1.0])  # uphill for ||x||^2
        res = line_search(x, d, self._quadratic_residual, 1.0, 1.0, 1e-100)
        assert not res.accepted
        assert res.omega < 1e-100

    def test_backtracks_overlong_step(self):
        x = np.array([1.0])
        d = np.array([-1.9999])  # near-reflection: full step barely decreases
        slope = float(x @ d)
        res = line_search(x, d, self._quadratic_residual, 1.0, slope, 1e-100)
        assert res.accepted and res.omega < 1.0
        assert res.residual_sq < 1.0


class TestSolveGeneric:
    def test_converges_on_linear_system(self):
        A = np.array([[2.0, 0.0], [0.0, 3.0], [1.0, 1.0]])
        b = np.array([2.0, 3.0, 2.0])
        state = solve(np.zeros(2), lambda x: A @ x - b, lambda x: A, LmConfig())
        assert state.status == SolveStatus.CONVERGED
        assert np.allclose(state.point, [1.0, 1.0], atol=1e-4)

    def test_zero_iterations_at_solution(self):
        state = solve(np.ones(2), lambda x: x - 1.0, lambda x: np.eye(2), LmConfig())
        assert state.status == SolveStatus.CONVERGED
        assert state.iterations == 0

    def test_nan_residual_stalls(self):
        state = solve(np.zeros(1), lambda x: np.array([np.nan]), lambda x: np.eye(1), LmConfig())
        assert state.status == SolveStatus.STALLED

    def test_stalls_after_two_failed_searches(self):
        # residual with a kink at the start point: every direction increases it
        def residual(x):
            return np.array([1.0 + abs(x[0])])

        def jacobian(x):
            return np.array([[1.0 if x[0] >= 0 else -1.0]])

        state = solve(np.zeros(1), residual, jacobian, LmConfig(max_iter=50))
        assert state.status == SolveStatus.STALLED
        assert len(state.residual_sq_history) == 1

    def test_max_iter_reached_on_slow_problem(self):
        state = solve(np.array([10.0]), lambda x: np.array([np.sign(x[0]) * np.sqrt(abs(x[0])) + 1e-3]),
                      lambda x: np.array([[0.5 / np.sqrt(abs(x[0]) + 1e-12)]]),
                      LmConfig(max_iter=3))
        assert state.status in (SolveStatus.MAX_ITER, SolveStatus.CONVERGED)
        assert state.iterations <= 3

    def test_history_nonincreasing_and_trace_consistent(self, rng):
        A = rng.normal(size=(6, 3))
        b = rng.normal(size=6)
        state = solve(np.zeros(3), lambda x: A @ (x + 0.1 * x**2) - b,
                      lambda x: A @ (np.eye(3) + 0.2 * np.diag(x)), LmConfig())
        hist = np.array(state.residual_sq_history)
        assert np.all(np.diff(hist) <= 0.0)
        accepted = [t for t in state.trace if t.accepted]
        assert len(accepted) == len(hist) - 1

    def test_config_validation(self):
        with pytest.raises(ValueError):
            LmConfig(tau=1.5)
        with pytest.raises(ValueError):
            LmConfig(kappa=0)
        with pytest.raises(ValueError):
            LmConfig(eta0=0.0)


def _synthetic_problem(seed, q, n, m, mu):
    rng = np.random.default_rng(seed)
    r0 = rng.uniform(0.1, 0.4, q)
    r1 = np.minimum(r0 + rng.uniform(0.2, 0.5, q), 0.9)
    y = rng.integers(0, 2, n).astype(float)
    X = np.where(y[:, None] == 1, rng.random((n, q)) < r1, rng.random((n, q)) < r0).astype(float)
    data = BowDataset(X, y)
    z = draw_noise(rng, m, q)
    gamma = np.ones(m)
    adv = X[y == 1]
    beta0 = adv[rng.choice(len(adv), size=min(50, len(adv)), replace=False)].mean(axis=0)
    theta0 = np.concatenate([np.full(q, 1000.0), beta0])
    return BilevelProblem(data, z, gamma, mu), theta0


class TestSolveStationarity:
    def test_exact_stationary_start(self):
        # mirrored rows with opposite labels at w = 0, mu = 0: every block vanishes
        data = BowDataset(np.array([[1.0], [1.0]]), np.array([0.0, 1.0]))
        z = NoiseMatrix(np.array([[0.5], [0.5]]))
        gamma = np.array([0.0, 1.0])
        problem = BilevelProblem(data, z, gamma, 0.0)
        theta0 = np.array([3.0, 0.2])
        state = solve_stationarity(problem, np.zeros(1), theta0, 0.5, LmConfig())
        assert state.status == SolveStatus.CONVERGED
        assert state.iterations == 0

    def test_small_instance_converges_and_is_follower_stationary(self):
        problem, theta0 = _synthetic_problem(3, q=1, n=4, m=1, mu=0.01)
        state = solve_stationarity(problem, np.zeros(1), theta0, 0.1, LmConfig())
        assert state.status == SolveStatus.CONVERGED
        assert state.residual_sq <= 1e-8
        # follower stationarity by finite differences of the follower objective
        from advbilevel.generator import GeneratorParams
        from advbilevel.objectives import lower_objective
        from advbilevel.stationarity import unpack_point

        w, theta, _ = unpack_point(state.point, 1)
        fd = fd_gradient(
            lambda t: lower_objective(w, problem.z, GeneratorParams.from_theta(t),
                                      problem.gamma, problem.mu), theta)
        assert np.linalg.norm(fd) < 1e-3

    def test_desk_scale_instances_converge(self):
        converged = 0
        for seed in range(10):
            problem, theta0 = _synthetic_problem(seed, q=5, n=200, m=20, mu=0.01)
            state = solve_stationarity(problem, np.zeros(5), theta0, 0.1, LmConfig())
            hist = np.array(state.residual_sq_history)
            assert np.all(np.diff(hist) <= 0.0)
            converged += state.status == SolveStatus.CONVERGED
        assert converged >= 8

    def test_deterministic_given_inputs(self):
        problem, theta0 = _synthetic_problem(5, q=3, n=30, m=4, mu=0.05)
        s1 = solve_stationarity(problem, np.zeros(3), theta0, 0.1, LmConfig())
        s2 = solve_stationarity(problem, np.zeros(3), theta0, 0.1, LmConfig())
        assert np.array_equal(s1.point, s2.point)
        assert s1.residual_sq_history == s2.residual_sq_history

    def test_converged_point_satisfies_block_tolerances(self):
        problem, theta0 = _synthetic_problem(7, q=4, n=60, m=6, mu=0.01)
        cfg = LmConfig()
        state = solve_stationarity(problem, np.zeros(4), theta0, 0.1, cfg)
        assert state.status == SolveStatus.CONVERGED
        from advbilevel.stationarity import assemble_residual, unpack_point

        w, theta, zeta = unpack_point(state.point, 4)
        res = assemble_residual(w, theta, zeta, problem)
        bound = np.sqrt(cfg.epsilon)
        q = 4
        assert np.linalg.norm(res[:q]) <= bound
        assert np.linalg.norm(res[q:3 * q]) <= bound
        assert np.linalg.norm(res[3 * q:]) <= bound
