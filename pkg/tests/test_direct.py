import numpy as np
import pytest

from lisim.channel import GeometricChannelSpec, gen_geometric_channel, upa_geometry
from lisim.direct import rmmse_estimate, simulate_stage1, stage2_error_variance
from lisim.training import dft_training


def draw_direct_map(rng, m, n, paths=8):
    """Uplink direct map (M x N) from the geometric model (stored transpose)."""
    z = gen_geometric_channel(rng, upa_geometry(n), upa_geometry(m), GeometricChannelSpec(paths))
    return z.T


class TestSimulateStage1:
    def test_noiseless_is_exact_product(self):
        rng = np.random.default_rng(40)
        z_up = draw_direct_map(rng, 6, 4)
        x_a = dft_training(4, 8, 1.0).X
        obs = simulate_stage1(rng, z_up, x_a, 0.0)
        assert np.array_equal(obs.Y, z_up @ x_a)

    def test_noise_sample_variance(self):
        rng = np.random.default_rng(41)
        z_up = np.zeros((20, 4), dtype=complex)
        x_a = dft_training(4, 500, 1.0).X
        obs = simulate_stage1(rng, z_up, x_a, 0.3)
        var = np.mean(np.abs(obs.Y) ** 2)
        assert abs(var - 0.3) < 0.05 * 0.3

    def test_deterministic_given_seed(self):
        z_up = np.ones((3, 2), dtype=complex)
        x_a = dft_training(2, 4, 1.0).X
        a = simulate_stage1(np.random.default_rng(7), z_up, x_a, 0.5)
        b = simulate_stage1(np.random.default_rng(7), z_up, x_a, 0.5)
        assert np.array_equal(a.Y, b.Y)

    def test_shape_mismatch_rejected(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            simulate_stage1(rng, np.ones((3, 5), dtype=complex), np.ones((4, 8)), 0.0)


class TestRmmseEstimate:
    def test_noiseless_square_dft_recovers_exactly(self):
        rng = np.random.default_rng(42)
        z_up = draw_direct_map(rng, 8, 8)
        x_a = dft_training(8, 8, 1.0).X
        obs = simulate_stage1(rng, z_up, x_a, 0.0)
        z_hat = rmmse_estimate(obs.Y, x_a, 0.0)
        nmse = np.linalg.norm(z_hat - z_up) ** 2 / np.linalg.norm(z_up) ** 2
        assert nmse < 1e-20

    def test_scalar_halving(self):
        # Scalar case: unit pilot, unit noise -> estimate is y/2; with y = z
        # that is z/2.
        z = np.array([[1.6 + 0.4j]])
        x = np.array([[1.0 + 0.0j]])
        z_hat = rmmse_estimate(z @ x, x, 1.0)
        assert np.allclose(z_hat, z / 2.0, atol=1e-14)

    def test_linearity_in_observation(self):
        rng = np.random.default_rng(43)
        x_a = dft_training(4, 8, 1.0).X
        y1 = rng.standard_normal((6, 8)) + 1j * rng.standard_normal((6, 8))
        y2 = rng.standard_normal((6, 8)) + 1j * rng.standard_normal((6, 8))
        lhs = rmmse_estimate(y1 + 2.0 * y2, x_a, 0.2)
        rhs = rmmse_estimate(y1, x_a, 0.2) + 2.0 * rmmse_estimate(y2, x_a, 0.2)
        assert np.allclose(lhs, rhs, rtol=1e-10, atol=1e-12)

    def test_closed_form_mse_oracle(self):
        # With row-orthogonal pilots X Xᴴ = (p/N) I, the estimator shrinks Z by
        # b = p/(p + N s) and adds filtered noise; the expected squared error
        # divided by E||Z||^2 = N M reduces to N s / (p + N s) for any channel
        # distribution with that second moment.
        n = m = t_d = 8
        p_u, s2 = 1.0, 0.1
        expected = n * s2 / (p_u + n * s2)
        x_a = dft_training(n, t_d, p_u).X
        rng = np.random.default_rng(44)
        err_energy = 0.0
        ref_energy = 0.0
        for _ in range(500):
            z_up = draw_direct_map(rng, m, n)
            obs = simulate_stage1(rng, z_up, x_a, s2)
            z_hat = rmmse_estimate(obs.Y, x_a, s2)
            err_energy += np.linalg.norm(z_hat - z_up) ** 2
            ref_energy += np.linalg.norm(z_up) ** 2
        assert abs(err_energy / ref_energy - expected) < 0.05 * expected

    def test_nmse_monotone_in_noise(self):
        n = m = t_d = 8
        x_a = dft_training(n, t_d, 1.0).X
        levels = [1.0, 0.1, 0.01]
        nmse = []
        for s2 in levels:
            rng = np.random.default_rng(45)
            err, ref = 0.0, 0.0
            for _ in range(200):
                z_up = draw_direct_map(rng, m, n)
                obs = simulate_stage1(rng, z_up, x_a, s2)
                z_hat = rmmse_estimate(obs.Y, x_a, s2)
                err += np.linalg.norm(z_hat - z_up) ** 2
                ref += np.linalg.norm(z_up) ** 2
            nmse.append(err / ref)
        assert nmse[0] > nmse[1] > nmse[2]

    def test_singular_system_rejected(self):
        # Rank-deficient pilots at zero noise have a singular Gram system.
        x_a = np.ones((3, 6), dtype=complex)
        y = np.ones((2, 6), dtype=complex)
        with pytest.raises(ValueError):
            rmmse_estimate(y, x_a, 0.0)


class TestStage2ErrorVariance:
    def test_values(self):
        assert stage2_error_variance(0.0, 64, 1.0) == 0.0
        assert abs(stage2_error_variance(0.1, 64, 1.0) - 6.4 / 7.4) < 1e-15
        # s M = p -> exactly 1/2.
        assert abs(stage2_error_variance(0.25, 4, 1.0) - 0.5) < 1e-15

    def test_bounds_and_monotonicity(self):
        prev = -1.0
        for s2 in (0.0, 0.01, 0.1, 1.0, 10.0):
            v = stage2_error_variance(s2, 16, 1.0)
            assert 0.0 <= v < 1.0
            assert v > prev or (v == prev == 0.0)
            prev = v

    def test_validation(self):
        with pytest.raises(ValueError):
            stage2_error_variance(-0.1, 4, 1.0)
        with pytest.raises(ValueError):
            stage2_error_variance(0.1, 4, 0.0)
