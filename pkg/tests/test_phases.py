import numpy as np
import pytest

from lisim.phases import (
    EigenmodeLink,
    PhaseConfig,
    achievable_rate,
    channel_gain,
    composite_channel,
    eigenmode,
    grid_search_phases,
    optimal_phases,
)


def random_link(rng, n, l, m):
    g_dl = rng.standard_normal((n, l)) + 1j * rng.standard_normal((n, l))
    h_dl = rng.standard_normal((l, m)) + 1j * rng.standard_normal((l, m))
    z_dl = rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))
    return g_dl, h_dl, z_dl


class TestPhaseConfig:
    def test_rejects_out_of_interval_phases(self):
        with pytest.raises(ValueError):
            PhaseConfig(phases=np.array([0.0]), amplitudes=np.array([1.0]))
        with pytest.raises(ValueError):
            PhaseConfig(phases=np.array([7.0]), amplitudes=np.array([1.0]))

    def test_rejects_fractional_amplitudes(self):
        with pytest.raises(ValueError):
            PhaseConfig(phases=np.array([1.0]), amplitudes=np.array([0.5]))

    def test_coefficients_unit_modulus_when_on(self):
        cfg = PhaseConfig.random(np.random.default_rng(0), 16)
        assert np.allclose(np.abs(cfg.coefficients()), 1.0, atol=1e-12)

    def test_all_off_matrix_is_zero(self):
        assert np.count_nonzero(PhaseConfig.all_off(4).matrix()) == 0

    def test_random_phases_in_interval(self):
        cfg = PhaseConfig.random(np.random.default_rng(1), 1000)
        assert ((cfg.phases > 0) & (cfg.phases <= 2 * np.pi)).all()


class TestCompositeChannel:
    def test_all_off_leaves_direct_term(self):
        rng = np.random.default_rng(2)
        g_dl, h_dl, z_dl = random_link(rng, 3, 5, 4)
        assert np.array_equal(composite_channel(g_dl, PhaseConfig.all_off(5), h_dl, z_dl), z_dl)

    def test_scalar_example(self):
        cfg = PhaseConfig(phases=np.array([2 * np.pi]), amplitudes=np.array([1.0]))
        out = composite_channel(np.ones((1, 1)), cfg, np.ones((1, 1)), np.ones((1, 1)))
        assert abs(out[0, 0] - 2.0) < 1e-12

    def test_matches_naive_triple_loop(self):
        rng = np.random.default_rng(3)
        g_dl, h_dl, z_dl = random_link(rng, 3, 4, 2)
        cfg = PhaseConfig.random(rng, 4)
        want = z_dl.astype(complex).copy()
        for i in range(3):
            for j in range(2):
                for el in range(4):
                    want[i, j] += g_dl[i, el] * np.exp(1j * cfg.phases[el]) * h_dl[el, j]
        assert np.allclose(composite_channel(g_dl, cfg, h_dl, z_dl), want, atol=1e-12)

    def test_accepts_explicit_diagonal_matrix(self):
        rng = np.random.default_rng(4)
        g_dl, h_dl, z_dl = random_link(rng, 3, 4, 2)
        cfg = PhaseConfig.random(rng, 4)
        a = composite_channel(g_dl, cfg, h_dl, z_dl)
        b = composite_channel(g_dl, cfg.matrix(), h_dl, z_dl)
        assert np.allclose(a, b, atol=1e-14)
        with pytest.raises(ValueError):
            composite_channel(g_dl, np.ones((4, 4)), h_dl, z_dl)

    def test_rejects_shape_mismatch(self):
        rng = np.random.default_rng(5)
        g_dl, h_dl, z_dl = random_link(rng, 3, 4, 2)
        with pytest.raises(ValueError):
            composite_channel(g_dl, PhaseConfig.random(rng, 5), h_dl, z_dl)
        with pytest.raises(ValueError):
            composite_channel(g_dl, PhaseConfig.random(rng, 4), h_dl, z_dl.T)


class TestOptimalPhases:
    def test_unit_scalars_give_full_turn(self):
        cfg = optimal_phases(np.ones((1, 1)), np.ones((1, 1)), np.ones((1, 1)))
        assert abs(cfg.phases[0] - 2 * np.pi) < 1e-12
        assert not cfg.no_preference[0]

    def test_quarter_turn_example(self):
        cfg = optimal_phases(np.ones((1, 1)), np.ones((1, 1)), 1j * np.ones((1, 1)))
        assert abs(cfg.phases[0] - np.pi / 2) < 1e-12

    def test_matches_per_element_grid(self):
        rng = np.random.default_rng(6)
        grid = 2 * np.pi * np.arange(1, 4097) / 4096
        for _ in range(20):
            g_dl, h_dl, z_dl = random_link(rng, 2, 4, 2)
            cfg = optimal_phases(g_dl, h_dl, z_dl)
            coupling = ((g_dl.T @ z_dl.conj()) * h_dl).sum(axis=1)
            for el in range(4):
                vals = np.real(coupling[el] * np.exp(1j * grid))
                best = grid[np.argmax(vals)]
                gap = abs(np.angle(np.exp(1j * (cfg.phases[el] - best))))
                assert gap <= 2 * np.pi / 4096 + 1e-12

    def test_vanishing_coupling_flagged(self):
        g_dl = np.zeros((2, 3), dtype=complex)
        g_dl[:, 0] = 1.0
        h_dl = np.ones((3, 2), dtype=complex)
        z_dl = np.ones((2, 2), dtype=complex)
        cfg = optimal_phases(g_dl, h_dl, z_dl)
        assert not cfg.no_preference[0]
        assert cfg.no_preference[1] and cfg.no_preference[2]
        assert cfg.phases[1] == 2 * np.pi

    def test_rejects_non_finite(self):
        g = np.ones((2, 2))
        g[0, 0] = np.nan
        with pytest.raises(ValueError):
            optimal_phases(g, np.ones((2, 2)), np.ones((2, 2)))


class TestGridSearchPhases:
    def test_single_element_matches_exhaustive_scan(self):
        rng = np.random.default_rng(7)
        g_dl, h_dl, z_dl = random_link(rng, 3, 1, 2)
        cfg = grid_search_phases(g_dl, h_dl, z_dl, points_per_element=256, passes=1)
        grid = 2 * np.pi * np.arange(1, 257) / 256
        gains = [
            channel_gain(g_dl, PhaseConfig(np.array([p]), np.ones(1)), h_dl, z_dl) for p in grid
        ]
        assert channel_gain(g_dl, cfg, h_dl, z_dl) >= max(gains) - 1e-10

    def test_never_below_closed_form_start(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            g_dl, h_dl, z_dl = random_link(rng, 3, 6, 3)
            closed = channel_gain(g_dl, optimal_phases(g_dl, h_dl, z_dl), h_dl, z_dl)
            refined = channel_gain(
                g_dl, grid_search_phases(g_dl, h_dl, z_dl, 64, 2), h_dl, z_dl
            )
            assert refined >= closed - 1e-10

    def test_incremental_gain_bookkeeping_is_exact(self):
        rng = np.random.default_rng(9)
        g_dl, h_dl, z_dl = random_link(rng, 4, 8, 4)
        cfg = grid_search_phases(g_dl, h_dl, z_dl, 32, 3)
        direct = channel_gain(g_dl, cfg, h_dl, z_dl)
        assert np.isfinite(direct)
        assert ((cfg.phases > 0) & (cfg.phases <= 2 * np.pi)).all()

    def test_guard_on_large_arrays(self):
        rng = np.random.default_rng(10)
        g_dl, h_dl, z_dl = random_link(rng, 2, 17, 2)
        with pytest.raises(ValueError):
            grid_search_phases(g_dl, h_dl, z_dl)

    def test_rejects_empty_grid_or_passes(self):
        rng = np.random.default_rng(11)
        g_dl, h_dl, z_dl = random_link(rng, 2, 2, 2)
        with pytest.raises(ValueError):
            grid_search_phases(g_dl, h_dl, z_dl, points_per_element=0)
        with pytest.raises(ValueError):
            grid_search_phases(g_dl, h_dl, z_dl, passes=0)


class TestEigenmode:
    def test_diagonal_channel_selects_leading_axis(self):
        link = eigenmode(np.diag([2.0, 1.0]).astype(complex), 1)
        assert np.allclose(np.abs(link.W[:, 0]), [1.0, 0.0], atol=1e-12)
        assert np.allclose(np.abs(link.V[:, 0]), [1.0, 0.0], atol=1e-12)

    def test_frames_orthonormal_and_norm(self):
        rng = np.random.default_rng(12)
        delta = rng.standard_normal((5, 4)) + 1j * rng.standard_normal((5, 4))
        link = eigenmode(delta, 3)
        assert abs(np.linalg.norm(link.W) ** 2 - 3.0) < 1e-10
        assert abs(np.linalg.norm(link.V) ** 2 - 3.0) < 1e-10
        assert np.allclose(link.W.conj().T @ link.W, np.eye(3), atol=1e-10)

    def test_diagonalizes_channel_with_positive_gains(self):
        rng = np.random.default_rng(13)
        delta = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        link = eigenmode(delta, 2)
        sv = np.linalg.svd(delta, compute_uv=False)
        got = link.V.conj().T @ delta @ link.W
        assert np.allclose(got, np.diag(sv[:2]), atol=1e-10)

    def test_anchor_entry_real_positive(self):
        rng = np.random.default_rng(14)
        delta = rng.standard_normal((6, 5)) + 1j * rng.standard_normal((6, 5))
        link = eigenmode(delta, 2)
        for k in range(2):
            anchor = link.W[np.argmax(np.abs(link.W[:, k])), k]
            assert abs(anchor.imag) < 1e-12 and anchor.real > 0

    def test_rank_deficient_flagged_but_orthonormal(self):
        delta = np.outer([1.0, 2.0, 0.5], [1.0, 1j]).astype(complex)
        link = eigenmode(delta, 2)
        assert link.rank_deficient
        assert np.allclose(link.W.conj().T @ link.W, np.eye(2), atol=1e-10)

    def test_rejects_bad_stream_count(self):
        with pytest.raises(ValueError):
            eigenmode(np.eye(3, dtype=complex), 4)
        with pytest.raises(ValueError):
            eigenmode(np.eye(3, dtype=complex), 0)


class TestAchievableRate:
    def test_identity_channel(self):
        eye = np.eye(2, dtype=complex)
        assert abs(achievable_rate(eye, eye, eye, 1.0) - 2.0) < 1e-12

    def test_single_stream_diagonal(self):
        delta = np.diag([2.0, 1.0]).astype(complex)
        link = eigenmode(delta, 1)
        got = achievable_rate(delta, link.W, link.V, 1.0)
        assert abs(got - np.log2(5.0)) < 1e-10

    def test_matches_eigenvalue_form(self):
        rng = np.random.default_rng(15)
        delta = rng.standard_normal((5, 6)) + 1j * rng.standard_normal((5, 6))
        link = eigenmode(delta, 3)
        rho = 2.5
        lam = np.linalg.eigvalsh(
            (link.V.conj().T @ delta @ link.W).conj().T @ (link.V.conj().T @ delta @ link.W)
        )
        want = float(np.sum(np.log2(1.0 + rho * np.clip(lam, 0.0, None))))
        assert abs(achievable_rate(delta, link.W, link.V, rho) - want) < 1e-9

    def test_monotone_in_power(self):
        rng = np.random.default_rng(16)
        delta = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        link = eigenmode(delta, 2)
        rates = [achievable_rate(delta, link.W, link.V, rho) for rho in (0.1, 1.0, 10.0, 100.0)]
        assert all(b > a for a, b in zip(rates, rates[1:]))

    def test_rejects_nonpositive_power(self):
        eye = np.eye(2, dtype=complex)
        with pytest.raises(ValueError):
            achievable_rate(eye, eye, eye, 0.0)


class TestAmbiguityInvariance:
    def test_composite_unchanged_by_per_element_scalar_pairs(self):
        rng = np.random.default_rng(17)
        h_up = rng.standard_normal((4, 6)) + 1j * rng.standard_normal((4, 6))
        g_up = rng.standard_normal((6, 3)) + 1j * rng.standard_normal((6, 3))
        z_dl = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
        scales = rng.uniform(0.5, 2.0, 6) * np.exp(2j * np.pi * rng.uniform(size=6))
        cfg = PhaseConfig.random(rng, 6)
        base = composite_channel(g_up.T, cfg, h_up.T, z_dl)
        scaled = composite_channel((scales[:, None] * g_up).T, cfg, (h_up * (1.0 / scales)).T, z_dl)
        assert np.allclose(base, scaled, rtol=1e-12, atol=1e-12)

    def test_designed_gain_beats_random_phases_on_average(self):
        rng = np.random.default_rng(18)
        wins = 0
        trials = 500
        for _ in range(trials):
            g_dl, h_dl, z_dl = random_link(rng, 4, 8, 4)
            designed = channel_gain(g_dl, optimal_phases(g_dl, h_dl, z_dl), h_dl, z_dl)
            random_gain = channel_gain(g_dl, PhaseConfig.random(rng, 8), h_dl, z_dl)
            wins += designed >= random_gain
        assert wins >= int(0.95 * trials)
