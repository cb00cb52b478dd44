import math

import numpy as np
import pytest

from kpzlab.basis import TrigBasis
from kpzlab.errors import DimensionMismatchError, UnsupportedOperatorError
from kpzlab.noise import NoiseRealization, RngStream, draw_gaussian_matrix
from kpzlab.spectral import (
    FdEulerMaruyama,
    MultiplicativeDiffusion,
    PointwiseDiffusion,
    SemilinearProblem,
    SpectralOperator,
    heat_problem,
    integrate,
    mc_error_norm,
    refinement_study,
    step_euler_galerkin,
    step_lord_rougemont,
    step_milstein,
)


def deterministic_problem(basis, nu=1.0):
    return SemilinearProblem(SpectralOperator(basis.eigenvalues, nu))


class TestBasisRoundTrip:
    @pytest.mark.parametrize("j", [1, 2, 5, 16, 33])
    def test_band_limited_round_trip(self, j):
        rng = np.random.default_rng(j)
        coeffs = rng.normal(size=j)
        basis = TrigBasis(j)
        back = basis.to_coeffs(basis.to_grid(coeffs))
        assert np.allclose(back, coeffs, atol=1e-12)

    def test_grid_round_trip(self):
        basis = TrigBasis(9, grid_points=9)  # square transform
        rng = np.random.default_rng(1)
        vals = rng.normal(size=9)
        assert np.allclose(basis.to_grid(basis.to_coeffs(vals)), vals, atol=1e-12)


class TestEulerGalerkin:
    def test_single_mode_closed_form(self):
        basis = TrigBasis(2)
        prob = deterministic_problem(basis)
        y = np.array([0.0, 1.0])  # the cos(2 pi x) mode, lambda = (2 pi)^2
        out = step_euler_galerkin(prob, basis, y, np.zeros(2), dt=0.01)
        expected = 1.0 / (1.0 + 0.01 * (2 * math.pi) ** 2)
        assert out[1] == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(0.7170, abs=5e-5)

    def test_constant_mode_unchanged(self):
        basis = TrigBasis(3)
        prob = deterministic_problem(basis)
        out = step_euler_galerkin(prob, basis, np.array([2.5, 0, 0]), np.zeros(3), 0.1)
        assert out[0] == pytest.approx(2.5, rel=1e-14)

    def test_zero_state_absorbing(self):
        basis = TrigBasis(4)
        prob = heat_problem(basis, nu=1.0, lam=3.0)
        dw = draw_gaussian_matrix(RngStream(0), 1, 4, 0.01).increments[0]
        out = step_euler_galerkin(prob, basis, np.zeros(4), dw, 0.01)
        assert np.all(out == 0.0)


class TestLordRougemont:
    def test_single_mode_exponential(self):
        basis = TrigBasis(2)
        prob = deterministic_problem(basis)
        out = step_lord_rougemont(prob, basis, np.array([0.0, 1.0]), np.zeros(2), 0.01)
        expected = math.exp(-0.01 * (2 * math.pi) ** 2)
        assert out[1] == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(0.6738, abs=5e-5)

    def test_zero_dt_identity(self):
        basis = TrigBasis(5)
        prob = deterministic_problem(basis)
        y = np.linspace(1, 5, 5)
        out = step_lord_rougemont(prob, basis, y, np.zeros(5), 0.0)
        assert np.allclose(out, y, atol=1e-14)

    def test_constant_mode_gets_exact_noise_increment(self):
        # lambda_0 = 0: no damping, the projected noise term adds exactly.
        basis = TrigBasis(3)
        prob = heat_problem(basis, nu=1.0, lam=2.0)
        y = np.array([1.0, 0.0, 0.0])  # X = 1 on the grid
        dw = np.array([0.25, 0.0, 0.0])  # dW = 0.25 constant in x
        out = step_lord_rougemont(prob, basis, y, dw, dt=0.01)
        # G(X) dW = 2 * 1 * 0.25 = 0.5, all in the constant mode
        assert out[0] == pytest.approx(1.5, rel=1e-12)

    def test_semigroup_two_half_steps(self):
        basis = TrigBasis(8)
        prob = deterministic_problem(basis, nu=0.7)
        rng = np.random.default_rng(2)
        y = rng.normal(size=8)
        one = step_lord_rougemont(prob, basis, y, np.zeros(8), 0.2)
        two = step_lord_rougemont(
            prob, basis, step_lord_rougemont(prob, basis, y, np.zeros(8), 0.1),
            np.zeros(8), 0.1,
        )
        assert np.allclose(one, two, atol=1e-12)

    def test_diagonal_decoupling(self):
        # F = G = 0: a one-mode state never leaks into other modes.
        basis = TrigBasis(6)
        prob = deterministic_problem(basis)
        y = np.zeros(6)
        y[3] = 1.0
        out = step_lord_rougemont(prob, basis, y, np.zeros(6), 0.05)
        assert np.all(out[np.arange(6) != 3] == 0.0)


class TestMilstein:
    def test_no_noise_matches_lord_rougemont(self):
        basis = TrigBasis(6)
        prob = heat_problem(basis, nu=1.0, lam=0.0)
        rng = np.random.default_rng(3)
        y = rng.normal(size=6)
        dw = rng.normal(size=6) * 0.1
        a = step_milstein(prob, basis, y, dw, 0.01)
        b = step_lord_rougemont(prob, basis, y, dw, 0.01)
        assert np.allclose(a, b, atol=1e-14)

    def test_non_multiplicative_diffusion_rejected(self):
        basis = TrigBasis(4)
        prob = SemilinearProblem(
            SpectralOperator(basis.eigenvalues, 1.0),
            diffusion=PointwiseDiffusion(lambda u: np.sin(u)),
        )
        with pytest.raises(UnsupportedOperatorError):
            step_milstein(prob, basis, np.ones(4), np.zeros(4), 0.01)

    def test_iterated_integral_against_ito_sum(self):
        # Fine-grained Ito-sum oracle on the same Brownian path; this is the
        # check that fixes the sign and the unit mode weights.
        dt, n_sub, j = 0.01, 100_000, 5
        basis = TrigBasis(j, grid_points=16)
        chi = basis.to_grid(np.eye(j))
        q = basis.squared_sum_on_grid()
        real = draw_gaussian_matrix(RngStream(77, 0), n_sub, j, dt / n_sub)
        dw_grid = real.increments.sum(axis=0) @ chi
        sub = real.increments @ chi
        w = np.cumsum(sub, axis=0)
        w_before = np.vstack([np.zeros(sub.shape[1]), w[:-1]])
        ito = np.sum(w_before * sub, axis=0)
        closed = 0.5 * (dw_grid**2 - dt * q)
        tol = 6.0 * dt * q / math.sqrt(2.0 * n_sub)
        assert np.all(np.abs(ito - closed) <= tol)
        # The printed alternative (eigenvalue weights, no 1/2, plus sign) is
        # wildly off; keep a tripwire so nobody "fixes" the sign back.
        printed = dw_grid**2 + dt * (basis.eigenvalues[:, None] * chi**2).sum(axis=0)
        assert np.min(np.abs(ito - printed)) > 100 * np.max(tol)

    def test_deterministic_noise_limit(self):
        # dW = 0: only the -dt * sum chi_j^2 part of the correction remains.
        basis = TrigBasis(3)
        prob = heat_problem(basis, nu=1.0, lam=1.0)
        y = np.array([1.0, 0.0, 0.0])
        dt = 0.01
        out = step_milstein(prob, basis, y, np.zeros(3), dt)
        q = basis.squared_sum_on_grid()
        expected_grid = 1.0 - 0.5 * dt * q  # exp(0) on the constant mode
        expected = np.exp(-dt * basis.eigenvalues) * basis.to_coeffs(expected_grid)
        assert np.allclose(out, expected, atol=1e-12)

    def test_single_step_strong_accuracy_vs_fine_solution(self):
        # One Milstein macro step vs the Euler-Maruyama limit on 10^4
        # substeps of the same path, heat instance on the constant mode.
        dt, n_sub = 0.01, 10_000
        basis = TrigBasis(1, grid_points=4)
        prob = heat_problem(basis, nu=1.0, lam=1.0)
        real = draw_gaussian_matrix(RngStream(5, 1), n_sub, 1, dt / n_sub)
        y_fine = np.array([1.0])
        for n in range(n_sub):
            y_fine = step_lord_rougemont(
                prob, basis, y_fine, real.increments[n], dt / n_sub
            )
        dw = real.increments.sum(axis=0)
        y_mil = step_milstein(prob, basis, np.array([1.0]), dw, dt)
        y_lr = step_lord_rougemont(prob, basis, np.array([1.0]), dw, dt)
        # lambda_0 = 0 so the exact solution is the geometric product; the
        # Milstein one-step value 1 + dW + (dW^2 - dt)/2 matches it to O(dt^{3/2}).
        assert abs(y_mil[0] - y_fine[0]) < abs(y_lr[0] - y_fine[0])
        assert abs(y_mil[0] - y_fine[0]) < 5 * dt**1.5


class TestFdEulerMaruyama:
    def test_constant_preserved_periodic(self):
        fd = FdEulerMaruyama(16, nu=1.0, dt=0.1, bc="periodic")
        prob = SemilinearProblem(SpectralOperator(TrigBasis(2).eigenvalues, 1.0))
        y = np.full(16, 4.0)
        out = fd.step(prob, y, np.zeros(16))
        assert np.allclose(out, 4.0, atol=1e-13)

    def test_zero_state_forever_multiplicative(self):
        basis = TrigBasis(4)
        prob = heat_problem(basis, nu=1.0, lam=2.0)
        fd = FdEulerMaruyama(8, nu=1.0, dt=0.05)
        y = np.zeros(8)
        rng = np.random.default_rng(0)
        for _ in range(5):
            y = fd.step(prob, y, rng.normal(size=8))
        assert np.all(y == 0.0)

    def test_matches_spectral_to_spatial_order(self):
        # Smooth deterministic decay; FD error shrinks ~4x per grid doubling.
        nu, dt, n_steps = 1.0, 1e-4, 100
        basis = TrigBasis(4)
        prob = deterministic_problem(basis, nu)
        y0 = np.array([0.0, 1.0, 0.0, 0.0])
        y = y0.copy()
        for _ in range(n_steps):
            y = step_euler_galerkin(prob, basis, y, np.zeros(4), dt)
        errors = {}
        for m in (16, 32):
            fd = FdEulerMaruyama(m, nu, dt)
            grid = fd.grid
            yg = basis.evaluate(y0, grid)
            for _ in range(n_steps):
                yg = fd.step(prob, yg, np.zeros(m))
            errors[m] = np.max(np.abs(yg - basis.evaluate(y, grid)))
        assert errors[32] < errors[16] / 3.0
        assert errors[16] < 5e-3


class TestIntegrate:
    def test_zero_steps_not_allowed_but_initial_returned(self):
        basis = TrigBasis(3)
        prob = deterministic_problem(basis)
        noise = draw_gaussian_matrix(RngStream(1), 1, 3, 0.1)
        traj = integrate(prob, basis, "lord_rougemont", np.ones(3), noise)
        assert traj.coeffs.shape == (2, 3)
        assert np.allclose(traj.coeffs[0], 1.0)

    def test_deterministic_replay(self):
        basis = TrigBasis(4)
        prob = heat_problem(basis, nu=1.0, lam=1.0)
        noise = draw_gaussian_matrix(RngStream(3, 2), 20, 4, 0.01)
        y0 = np.array([1.0, 0, 0, 0])
        a = integrate(prob, basis, "milstein", y0, noise)
        b = integrate(prob, basis, "milstein", y0, noise)
        assert np.array_equal(a.coeffs, b.coeffs)

    def test_mode_count_mismatch(self):
        basis = TrigBasis(4)
        prob = heat_problem(basis)
        noise = draw_gaussian_matrix(RngStream(1), 5, 3, 0.1)
        with pytest.raises(DimensionMismatchError):
            integrate(prob, basis, "milstein", np.ones(4), noise)

    def test_martingale_mean(self):
        # X0 = 1, F = 0: E[mean_x X_T] = 1 because the Ito integral is centered.
        j, n_steps, m_real = 8, 64, 250
        basis = TrigBasis(j)
        prob = heat_problem(basis, nu=1.0, lam=1.0)
        dt = 1.0 / n_steps
        finals = np.empty(m_real)
        y0 = np.zeros(j)
        y0[0] = 1.0
        for r in range(m_real):
            noise = draw_gaussian_matrix(RngStream(17, r), n_steps, j, dt)
            traj = integrate(prob, basis, "euler_galerkin", y0, noise)
            finals[r] = traj.final()[0]  # constant-mode coefficient = mean
        stderr = finals.std(ddof=1) / math.sqrt(m_real)
        assert abs(finals.mean() - 1.0) < 3.0 * stderr


class TestMcErrorNorm:
    def test_identical_fields(self):
        a = np.random.default_rng(0).normal(size=(3, 8))
        assert mc_error_norm(a, a) == 0.0

    def test_constant_difference(self):
        a = np.zeros((2, 10))
        b = np.full((2, 10), -1.5)
        assert mc_error_norm(a, b) == pytest.approx(1.5, rel=1e-14)

    def test_two_realization_hand_value(self):
        a = np.zeros((2, 4))
        b = np.vstack([np.zeros(4), np.ones(4)])
        assert mc_error_norm(a, b) == pytest.approx(math.sqrt(0.5), rel=1e-14)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            mc_error_norm(np.empty((0, 4)), np.empty((0, 4)))


class TestRefinement:
    def test_deterministic_band_limited_exact(self):
        # G = F = 0 with data in the first two modes: all refinements agree.
        def factory(basis):
            return SemilinearProblem(SpectralOperator(basis.eigenvalues, 1.0))

        def initial(basis):
            y = np.zeros(basis.n_modes)
            y[0], y[1] = 1.0, 0.5
            return y

        rows = refinement_study(
            factory, "lord_rougemont", [2, 4, 8], realizations=2, seed=0,
            initial=initial, steps_per_pair=lambda j: 16,
        )
        assert all(row.error < 1e-13 for row in rows)

    def test_truncation_nesting_exact_linear(self):
        # Integrating at J then projecting equals integrating at J' < J when
        # the flow is linear and diagonal.
        basis8 = TrigBasis(8)
        basis4 = TrigBasis(4)
        prob8 = deterministic_problem(basis8)
        prob4 = deterministic_problem(basis4)
        rng = np.random.default_rng(5)
        y = rng.normal(size=8)
        z = y[:4].copy()
        for _ in range(10):
            y = step_lord_rougemont(prob8, basis8, y, np.zeros(8), 0.01)
            z = step_lord_rougemont(prob4, basis4, z, np.zeros(4), 0.01)
        assert np.array_equal(y[:4], z)
