import numpy as np
import pytest

from lisim.completion import CompletionProblem, hard_threshold_rank, niht


def balanced_mask(rng, l, t_r, total):
    """Random 0/1 mask with exactly ``total`` ones spread evenly over columns.

    Column-regular sampling mirrors the on/off schedules the pipeline
    produces and keeps every column identifiable; a fully independent mask
    routinely leaves some column with fewer observations than the rank,
    which no completion method can resolve.
    """
    base, extra = divmod(total, t_r)
    counts = np.full(t_r, base)
    counts[rng.choice(t_r, extra, replace=False)] += 1
    mask = np.zeros((l, t_r))
    for t in range(t_r):
        mask[rng.choice(l, counts[t], replace=False), t] = 1.0
    return mask


def planted_problem(rng, l=16, t_r=120, n=8, rank=2, density=0.4, max_iter=500):
    """Noiseless masked observation of a planted rank-r coefficient matrix."""
    g_true = (
        rng.standard_normal((l, rank)) + 1j * rng.standard_normal((l, rank))
    ) @ (rng.standard_normal((rank, n)) + 1j * rng.standard_normal((rank, n)))
    x_b = rng.standard_normal((n, t_r)) + 1j * rng.standard_normal((n, t_r))
    mask = balanced_mask(rng, l, t_r, round(density * l * t_r))
    d_check = mask * (g_true @ x_b)
    problem = CompletionProblem(D_check=d_check, mask=mask, X_b=x_b, rank=rank, max_iter=max_iter)
    return problem, g_true


class TestCompletionProblem:
    def test_rejects_bad_instances(self):
        rng = np.random.default_rng(0)
        d = rng.standard_normal((4, 10)) + 0j
        mask = np.ones((4, 10))
        x_b = rng.standard_normal((3, 10)) + 0j
        with pytest.raises(ValueError):
            CompletionProblem(D_check=d, mask=np.ones((4, 9)), X_b=x_b, rank=2)
        with pytest.raises(ValueError):
            CompletionProblem(D_check=d, mask=2 * mask, X_b=x_b, rank=2)
        with pytest.raises(ValueError):
            CompletionProblem(D_check=d, mask=mask, X_b=x_b, rank=5)
        with pytest.raises(ValueError):
            CompletionProblem(D_check=d, mask=mask, X_b=x_b, rank=0)
        with pytest.raises(ValueError):
            CompletionProblem(D_check=d, mask=mask, X_b=x_b, rank=2, max_iter=0)
        with pytest.raises(ValueError):
            CompletionProblem(D_check=d, mask=mask, X_b=np.ones((3, 10)) + 0j, rank=2)

    def test_degrees_of_freedom_count(self):
        problem, _ = planted_problem(np.random.default_rng(1))
        assert problem.degrees_of_freedom() == 2 * (16 + 120 - 2)
        assert problem.observed_entries == int(problem.mask.sum())


class TestHardThresholdRank:
    def test_low_rank_input_unchanged(self):
        rng = np.random.default_rng(2)
        q = (rng.standard_normal((8, 3)) + 0j) @ (rng.standard_normal((3, 6)) + 0j)
        assert np.linalg.norm(hard_threshold_rank(q, 3) - q) < 1e-10
        assert np.linalg.norm(hard_threshold_rank(q, 6) - q) < 1e-30

    def test_diagonal_truncation(self):
        q = np.diag([3.0, 2.0, 1.0])
        assert np.allclose(hard_threshold_rank(q, 2), np.diag([3.0, 2.0, 0.0]), atol=1e-12)

    def test_eckart_young_error(self):
        rng = np.random.default_rng(3)
        q = rng.standard_normal((8, 6)) + 1j * rng.standard_normal((8, 6))
        sv = np.linalg.svd(q, compute_uv=False)
        err = np.linalg.norm(q - hard_threshold_rank(q, 3))
        assert abs(err - np.sqrt(np.sum(sv[3:] ** 2))) < 1e-10

    def test_output_rank_bounded(self):
        rng = np.random.default_rng(4)
        q = rng.standard_normal((10, 10)) + 1j * rng.standard_normal((10, 10))
        assert np.linalg.matrix_rank(hard_threshold_rank(q, 4)) <= 4

    def test_rejects_nonpositive_rank(self):
        with pytest.raises(ValueError):
            hard_threshold_rank(np.ones((2, 2)), 0)


class TestNiht:
    def test_full_mask_exact_data(self):
        rng = np.random.default_rng(5)
        problem, g_true = planted_problem(rng, density=1.0)
        g_check, residuals = niht(problem, track_residuals=True)
        assert np.linalg.norm(g_check - g_true) <= 1e-8 * np.linalg.norm(g_true)
        # Spectral init already fits full-mask exact data.
        assert residuals[0] < 1e-10 * np.linalg.norm(problem.D_check)

    def test_zero_data_gives_zero(self):
        rng = np.random.default_rng(6)
        x_b = rng.standard_normal((4, 30)) + 1j * rng.standard_normal((4, 30))
        problem = CompletionProblem(
            D_check=np.zeros((8, 30), dtype=complex), mask=np.ones((8, 30)), X_b=x_b, rank=2
        )
        assert np.linalg.norm(niht(problem)) == 0.0

    def test_masked_planted_recovery(self):
        for seed in range(10):
            problem, g_true = planted_problem(np.random.default_rng(100 + seed))
            g_check = niht(problem)
            rel = np.linalg.norm(g_check - g_true) / np.linalg.norm(g_true)
            assert rel < 1e-6, f"seed {seed}: relative error {rel:.3e}"

    def test_masked_residual_non_increasing(self):
        for seed in range(5):
            problem, _ = planted_problem(np.random.default_rng(200 + seed))
            _, residuals = niht(problem, track_residuals=True)
            assert np.all(np.diff(residuals) <= 1e-12)

    def test_output_rank_bounded_by_target(self):
        problem, _ = planted_problem(np.random.default_rng(7), rank=3)
        g_check = niht(problem)
        sv = np.linalg.svd(g_check, compute_uv=False)
        assert (sv[3:] <= 1e-6 * sv[0]).all()

    def test_respects_iteration_budget(self):
        problem, _ = planted_problem(np.random.default_rng(8), max_iter=3)
        _, residuals = niht(problem, track_residuals=True)
        assert len(residuals) <= 4

    def test_deterministic(self):
        a = niht(planted_problem(np.random.default_rng(9))[0])
        b = niht(planted_problem(np.random.default_rng(9))[0])
        assert np.array_equal(a, b)
