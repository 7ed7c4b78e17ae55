"""Numerical cross-checks of closed forms against direct evaluation.

Each check recomputes an analytic quantity the pipeline relies on (denoiser
divergence, linear-stage stationarity, array-response normalization,
conditioning surgery, rank truncation optimality) by brute force and
reports the worst deviation against a fixed bound.  The suite backs the
``validate`` CLI command and runs in a few seconds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .badvamp import BgPrior, bg_denoise, bg_denoise_divergence, lmmse_column
from .channel import array_response, recondition, upa_geometry
from .completion import hard_threshold_rank

__all__ = ["CheckResult", "run_all_checks", "CHECKS"]


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one numerical check: worst deviation against its bound."""

    name: str
    passed: bool
    value: float
    bound: float
    detail: str

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.value:.3e} <= {self.bound:.0e} ({self.detail})"


def check_denoiser_divergence(seed: int = 0) -> CheckResult:
    """Analytic denoiser divergence versus central finite differences.

    The denoiser acts entrywise, so perturbing every entry at once in the
    real and imaginary directions yields all per-entry derivatives in four
    evaluations; their mean Wirtinger derivative must match the closed
    form gamma times the average posterior variance.
    """
    rng = np.random.default_rng(seed)
    bound = 1e-4
    delta = 1e-5
    worst = 0.0
    cases = []
    for sparsity, variance, gamma in ((0.25, 3.0, 2.0), (0.1, 16.0, 0.5), (0.9, 1.0, 8.0)):
        prior = BgPrior(sparsity=sparsity, mean=0.0, variance=variance)
        r = (rng.standard_normal(256) + 1j * rng.standard_normal(256)) * np.sqrt(variance / 2)
        d_re = (bg_denoise(r + delta, gamma, prior) - bg_denoise(r - delta, gamma, prior)) / (
            2 * delta
        )
        d_im = (
            bg_denoise(r + 1j * delta, gamma, prior) - bg_denoise(r - 1j * delta, gamma, prior)
        ) / (2 * delta)
        numeric = float(np.mean(0.5 * (d_re - 1j * d_im)).real)
        analytic = bg_denoise_divergence(r, gamma, prior)
        gap = abs(analytic - numeric)
        worst = max(worst, gap)
        cases.append(gap)
    return CheckResult(
        name="denoiser-divergence",
        passed=worst <= bound,
        value=worst,
        bound=bound,
        detail=f"max |analytic - finite difference| over {len(cases)} priors",
    )


def check_lmmse_stationarity(seed: int = 1) -> CheckResult:
    """The linear-stage output must solve its normal equations exactly."""
    rng = np.random.default_rng(seed)
    bound = 1e-8
    worst = 0.0
    for m, l, gamma2 in ((16, 8, 0.7), (12, 12, 3.0), (8, 16, 0.05)):
        h = rng.standard_normal((m, l)) + 1j * rng.standard_normal((m, l))
        y = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        r2 = rng.standard_normal(l) + 1j * rng.standard_normal(l)
        _, d2 = lmmse_column(h, y, r2, gamma2)
        lhs = (gamma2 * np.eye(l) + h.conj().T @ h) @ d2
        rhs = gamma2 * r2 + h.conj().T @ y
        worst = max(worst, float(np.linalg.norm(lhs - rhs) / np.linalg.norm(rhs)))
    return CheckResult(
        name="linear-stage-stationarity",
        passed=worst <= bound,
        value=worst,
        bound=bound,
        detail="max relative normal-equation residual over 3 shapes",
    )


def check_array_response_norms(seed: int = 2) -> CheckResult:
    """Every steering vector must have unit Euclidean norm."""
    rng = np.random.default_rng(seed)
    bound = 1e-10
    worst = 0.0
    for size in (4, 12, 13, 16, 36):
        for spacing in (0.5, 4.0):
            geom = upa_geometry(size, spacing)
            for _ in range(20):
                az = rng.uniform(-np.pi, np.pi)
                el = rng.uniform(0.0, np.pi)
                a = array_response(geom, az, el)
                worst = max(worst, abs(float(np.linalg.norm(a)) - 1.0))
    return CheckResult(
        name="array-response-norm",
        passed=worst <= bound,
        value=worst,
        bound=bound,
        detail="max | ||a|| - 1 | over 200 geometry/angle draws",
    )


def check_recondition(seed: int = 3) -> CheckResult:
    """Conditioning surgery must hit the target condition number while
    holding the squared Frobenius norm at rows * cols."""
    rng = np.random.default_rng(seed)
    bound = 1e-8
    worst = 0.0
    for rows, cols in ((16, 16), (24, 16)):
        for target in (1.0, 10.0, 100.0, 1000.0):
            a = rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))
            out = recondition(a, target)
            norm_gap = abs(float(np.linalg.norm(out) ** 2) - rows * cols) / (rows * cols)
            cond_gap = abs(float(np.linalg.cond(out)) - target) / target
            worst = max(worst, norm_gap, cond_gap)
    return CheckResult(
        name="recondition-constraints",
        passed=worst <= bound,
        value=worst,
        bound=bound,
        detail="max relative error in Frobenius norm and condition number",
    )


def check_rank_truncation(seed: int = 4) -> CheckResult:
    """Rank truncation must achieve the tail-singular-value error exactly
    and never lose to a random projection of the same rank."""
    rng = np.random.default_rng(seed)
    bound = 1e-10
    worst = 0.0
    q = rng.standard_normal((20, 30)) + 1j * rng.standard_normal((20, 30))
    s = np.linalg.svd(q, compute_uv=False)
    for rank in (1, 3, 5):
        t = hard_threshold_rank(q, rank)
        err_sq = float(np.linalg.norm(q - t) ** 2)
        tail_sq = float(np.sum(s[rank:] ** 2))
        worst = max(worst, abs(err_sq - tail_sq) / tail_sq)
        for _ in range(5):
            gauss = rng.standard_normal((20, rank)) + 1j * rng.standard_normal((20, rank))
            u, _ = np.linalg.qr(gauss)
            competitor = float(np.linalg.norm(q - u @ (u.conj().T @ q)) ** 2)
            if competitor < err_sq * (1.0 - 1e-12):
                worst = max(worst, (err_sq - competitor) / tail_sq)
    return CheckResult(
        name="rank-truncation-optimality",
        passed=worst <= bound,
        value=worst,
        bound=bound,
        detail="tail-energy identity and random-projection dominance",
    )


CHECKS = (
    check_denoiser_divergence,
    check_lmmse_stationarity,
    check_array_response_norms,
    check_recondition,
    check_rank_truncation,
)


def run_all_checks(seed: int = 0) -> list:
    """Run every check with seeds offset from ``seed``; returns all results."""
    return [check(seed + idx) for idx, check in enumerate(CHECKS)]
