import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kpzlab.basis import TrigBasis, evaluation_matrix, wavenumbers
from kpzlab.errors import DimensionMismatchError
from kpzlab.noise import (
    Mollifier,
    NoiseRealization,
    RngStream,
    draw_gaussian_matrix,
    gaussian_c0,
    gaussian_c0_quadrature,
    load_noise,
    mollify_convolution,
    mollify_spectral,
    save_noise,
    white_noise_field,
)


class TestDrawGaussianMatrix:
    def test_identical_stream_bitwise_identical(self):
        a = draw_gaussian_matrix(RngStream(1, 0), 2, 2, 0.5)
        b = draw_gaussian_matrix(RngStream(1, 0), 2, 2, 0.5)
        assert np.array_equal(a.increments, b.increments)

    def test_distinct_streams_differ(self):
        a = draw_gaussian_matrix(RngStream(1, 0), 4, 4, 0.5)
        b = draw_gaussian_matrix(RngStream(1, 1), 4, 4, 0.5)
        assert not np.array_equal(a.increments, b.increments)

    def test_variance_matches_dt(self):
        # Monte Carlo estimate of the column variance over many realizations.
        dt, m = 0.25, 100_000
        draws = np.array(
            [
                draw_gaussian_matrix(RngStream(7, r), 1, 1, dt).increments[0, 0]
                for r in range(m)
            ]
        )
        var = draws.var()
        stderr = dt * math.sqrt(2.0 / m)
        assert abs(var - dt) < 3.0 * stderr

    @pytest.mark.parametrize("bad", [0.0, -1.0])
    def test_nonpositive_dt_rejected(self, bad):
        with pytest.raises(ValueError):
            draw_gaussian_matrix(RngStream(1), 2, 2, bad)

    def test_zero_dimensions_rejected(self):
        with pytest.raises(ValueError):
            draw_gaussian_matrix(RngStream(1), 0, 2, 0.1)
        with pytest.raises(ValueError):
            draw_gaussian_matrix(RngStream(1), 2, 0, 0.1)


class TestWhiteNoiseField:
    def test_zero_increments_zero_field(self):
        real = NoiseRealization(np.zeros((3, 5)), 0.1)
        field = white_noise_field(real, TrigBasis(5))
        assert np.all(field == 0.0)

    def test_single_constant_mode(self):
        c, dt = 0.7, 0.2
        real = NoiseRealization(np.full((4, 1), c), dt)
        field = white_noise_field(real, TrigBasis(1, grid_points=6))
        assert np.allclose(field, c / dt)

    def test_matches_direct_summation(self):
        # Oracle: evaluate the truncated expansion by an explicit double loop.
        rng = np.random.default_rng(3)
        inc = rng.normal(size=(2, 2))
        dt = 0.3
        real = NoiseRealization(inc, dt)
        basis = TrigBasis(2, grid_points=3)
        field = white_noise_field(real, basis)
        chi = evaluation_matrix(2, basis.grid)
        for n in range(2):
            for i in range(3):
                expected = sum(inc[n, j] * chi[i, j] for j in range(2)) / dt
                assert field[n, i] == pytest.approx(expected, rel=1e-14)

    def test_mode_mismatch_rejected(self):
        real = NoiseRealization(np.zeros((2, 4)), 0.1)
        with pytest.raises(DimensionMismatchError):
            white_noise_field(real, TrigBasis(5))


class TestMollifier:
    def test_bump_profile_is_normalized(self):
        phi = Mollifier("bump", 0.5)
        assert phi.profile(0.0) == pytest.approx(1.0)
        assert phi(0.0) == pytest.approx(1.0)

    @pytest.mark.parametrize("kind", ["bump", "gaussian"])
    def test_even(self, kind):
        phi = Mollifier(kind, 0.7)
        u = np.linspace(-3, 3, 41)
        assert np.allclose(phi(u), phi(-u))

    def test_bump_support_edge(self):
        phi = Mollifier("bump", 0.5)
        assert phi(2.0) == 0.0  # |u| = 1/kappa exactly
        assert phi(2.5) == 0.0
        assert phi(1.9) > 0.0

    def test_bump_closed_form(self):
        # kappa * u = 0.5 -> exp(1 - 1/(1 - 0.25)) = exp(-1/3)
        phi = Mollifier("bump", 0.25)
        assert phi(2.0) == pytest.approx(math.exp(-1.0 / 3.0), rel=1e-12)

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            Mollifier("box", 1.0)
        with pytest.raises(ValueError):
            Mollifier("bump", 0.0)


class TestMollifySpectral:
    def test_small_kappa_is_identity(self):
        real = draw_gaussian_matrix(RngStream(5), 4, 7, 0.1)
        out = mollify_spectral(real, Mollifier("bump", 1e-9))
        assert np.allclose(out.increments, real.increments, rtol=0, atol=1e-12)

    def test_bump_kills_modes_beyond_support(self):
        real = NoiseRealization(np.ones((3, 6)), 0.1)
        out = mollify_spectral(real, Mollifier("bump", 1.0))
        # wavenumbers 0,1,1,2,2,3: every n >= 1 is at or past the support edge
        assert np.allclose(out.increments[:, 0], 1.0)
        assert np.all(out.increments[:, 1:] == 0.0)

    def test_mode_zero_unchanged(self):
        real = draw_gaussian_matrix(RngStream(6), 5, 5, 0.2)
        out = mollify_spectral(real, Mollifier("gaussian", 0.8))
        assert np.array_equal(out.increments[:, 0], real.increments[:, 0])

    @given(
        a=st.floats(-5, 5),
        b=st.floats(-5, 5),
        kind=st.sampled_from(["bump", "gaussian"]),
        kappa=st.floats(0.05, 2.0),
    )
    @settings(max_examples=40, deadline=None)
    def test_linearity(self, a, b, kind, kappa):
        phi = Mollifier(kind, kappa)
        x = draw_gaussian_matrix(RngStream(11, 0), 3, 5, 0.5)
        y = draw_gaussian_matrix(RngStream(11, 1), 3, 5, 0.5)
        combo = NoiseRealization(a * x.increments + b * y.increments, 0.5)
        lhs = mollify_spectral(combo, phi).increments
        rhs = (
            a * mollify_spectral(x, phi).increments
            + b * mollify_spectral(y, phi).increments
        )
        assert np.allclose(lhs, rhs, atol=1e-12)

    @given(
        kind=st.sampled_from(["bump", "gaussian"]),
        kappa=st.floats(0.01, 4.0),
        seed=st.integers(0, 1000),
    )
    @settings(max_examples=40, deadline=None)
    def test_never_amplifies(self, kind, kappa, seed):
        real = draw_gaussian_matrix(RngStream(seed), 3, 9, 0.1)
        out = mollify_spectral(real, Mollifier(kind, kappa))
        assert np.all(np.abs(out.increments) <= np.abs(real.increments) + 1e-15)


class TestMollifyConvolution:
    def test_constant_preserved(self):
        grid = np.arange(64) / 64.0
        field = np.full(64, 3.25)
        out = mollify_convolution(field, Mollifier("gaussian", 0.02), grid)
        assert np.allclose(out, 3.25, rtol=1e-12)

    def test_linearity_on_fields(self):
        grid = np.arange(32) / 32.0
        rng = np.random.default_rng(0)
        f, g = rng.normal(size=32), rng.normal(size=32)
        phi = Mollifier("bump", 0.1)
        lhs = mollify_convolution(2.0 * f - 3.0 * g, phi, grid)
        rhs = 2.0 * mollify_convolution(f, phi, grid) - 3.0 * mollify_convolution(
            g, phi, grid
        )
        assert np.allclose(lhs, rhs, atol=1e-12)

    def test_spike_reproduces_kernel(self):
        # Convolving a unit-mass grid spike must return the sampled kernel.
        m = 256
        grid = np.arange(m) / m
        dx = 1.0 / m
        spike = np.zeros(m)
        spike[0] = 1.0 / dx
        phi = Mollifier("bump", 0.08)
        out = mollify_convolution(spike, phi, grid)
        offsets = (grid + 0.5) % 1.0 - 0.5
        kernel = phi.kernel(offsets)
        kernel /= kernel.sum() * dx
        assert np.allclose(out, kernel, rtol=1e-10, atol=1e-10)

    def test_gaussian_damps_sine_mode(self):
        # Fourier multiplier of the unit-mass width-k Gaussian at frequency
        # omega = 2 pi n is exp(-k^2 omega^2 / 2).
        m, k, n = 512, 0.05, 2
        grid = np.arange(m) / m
        field = np.sin(2 * np.pi * n * grid)
        out = mollify_convolution(field, Mollifier("gaussian", k), grid)
        damping = math.exp(-0.5 * (k * 2 * math.pi * n) ** 2)
        assert np.allclose(out, damping * field, atol=5e-6)

    def test_wide_kernel_rejected(self):
        grid = np.arange(16) / 16.0
        with pytest.raises(ValueError):
            mollify_convolution(np.zeros(16), Mollifier("bump", 0.6), grid)


class TestGaussianC0:
    def test_reference_values(self):
        assert gaussian_c0(1.0) == pytest.approx(0.5 / math.sqrt(math.pi), rel=1e-12)
        assert gaussian_c0(0.5) == pytest.approx(1.0 / math.sqrt(math.pi), rel=1e-12)

    def test_quadrature_cross_check(self):
        assert abs(gaussian_c0_quadrature(1.0, 8.0) - gaussian_c0(1.0)) < 1e-8
        assert abs(gaussian_c0_quadrature(0.37) - gaussian_c0(0.37)) < 1e-8

    def test_invalid(self):
        with pytest.raises(ValueError):
            gaussian_c0(0.0)
        with pytest.raises(ValueError):
            gaussian_c0(-2.0)


class TestSerialization:
    @pytest.mark.parametrize("suffix", [".csv", ".bin"])
    def test_round_trip_bitwise(self, tmp_path, suffix):
        real = draw_gaussian_matrix(RngStream(42, 3), 6, 5, 0.125)
        path = tmp_path / f"noise{suffix}"
        save_noise(path, real)
        back = load_noise(path)
        assert back.dt == real.dt
        assert np.array_equal(back.increments, real.increments)

    def test_truncate_and_coarsen(self):
        real = draw_gaussian_matrix(RngStream(9), 8, 6, 0.25)
        tr = real.truncate(3)
        assert np.array_equal(tr.increments, real.increments[:, :3])
        co = real.coarsen_time(4)
        assert co.n_time == 2 and co.dt == 1.0
        assert np.allclose(co.increments[0], real.increments[:4].sum(axis=0))


def test_wavenumber_ordering():
    assert list(wavenumbers(7)) == [0, 1, 1, 2, 2, 3, 3]
