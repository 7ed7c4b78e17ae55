"""Permutation-ambiguity removal via the known phase schedule, plus NMSE metrics.

A bilinear factorization Y = H D fixes H and D only up to an invertible
mixing; with a sparse D the residual ambiguity is a generalized permutation.
The known on/off schedule S identifies the row order: each recovered row of
D is matched to the schedule row whose support it overlaps most.  Scalar and
phase ambiguities are left in place and absorbed per column by the metric.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "PermutationMap",
    "state_matrix",
    "recover_permutation",
    "apply_permutation",
    "nmse_ambiguity_aware",
]

NMSE_FLOOR_DB = -300.0


@dataclass(frozen=True)
class PermutationMap:
    """Bijection between recovered row order and schedule row order.

    ``perm[n] = n'`` maps recovered row ``n`` to schedule row ``n'``, so the
    corrected matrices satisfy ``D_check[perm] = D_hat`` and
    ``H_check[:, perm] = H_hat``.  ``degenerate`` marks maps recovered from
    all-zero score rows, where the assignment is arbitrary.
    """

    perm: np.ndarray
    source: str = "recovered"
    degenerate: bool = False

    def __post_init__(self):
        perm = np.asarray(self.perm, dtype=int)
        object.__setattr__(self, "perm", perm)
        if self.source not in ("recovered", "ground_truth"):
            raise ValueError("source must be 'recovered' or 'ground_truth'")
        if perm.ndim != 1 or not np.array_equal(np.sort(perm), np.arange(perm.size)):
            raise ValueError("perm must be a bijection on [0, L)")

    @property
    def size(self) -> int:
        return int(self.perm.size)

    def matrix(self) -> np.ndarray:
        """Permutation matrix G with G[n, perm[n]] = 1, so D_check = Gᵀ D_hat."""
        gamma = np.zeros((self.size, self.size))
        gamma[np.arange(self.size), self.perm] = 1.0
        return gamma


def state_matrix(d_hat: np.ndarray, tau_rel: float = 0.1) -> np.ndarray:
    """0/1 support indicator with a columnwise relative threshold.

    Entry (l, t) is 1 iff |D_hat[l, t]| exceeds ``tau_rel`` times the largest
    magnitude in column t.  An all-zero column yields an all-zero state
    column.
    """
    if not 0.0 < tau_rel < 1.0:
        raise ValueError("tau_rel must lie in (0, 1)")
    mag = np.abs(np.asarray(d_hat))
    col_max = mag.max(axis=0, keepdims=True)
    return (mag > tau_rel * col_max).astype(np.int8)


def recover_permutation(s: np.ndarray, s_bar: np.ndarray) -> PermutationMap:
    """Match rows of the recovered state matrix to rows of the schedule.

    Scores every pair by the inner product of schedule row and recovered row,
    then assigns greedily in decreasing-score order with exclusion of rows
    already used, so the result is always a bijection even when the raw
    per-row argmax would collide.  Ties break toward the lowest index pair.
    """
    s = np.asarray(s, dtype=float)
    s_bar = np.asarray(s_bar, dtype=float)
    if s.shape != s_bar.shape:
        raise ValueError("schedule and state matrix must have the same shape")
    l = s.shape[0]
    scores = s_bar @ s.T
    perm = np.full(l, -1, dtype=int)
    work = scores.copy()
    degenerate = False
    for _ in range(l):
        flat = int(np.argmax(work))
        n, n_prime = divmod(flat, l)
        if work[n, n_prime] <= 0.0:
            degenerate = True
        perm[n] = n_prime
        work[n, :] = -np.inf
        work[:, n_prime] = -np.inf
    return PermutationMap(perm=perm, source="recovered", degenerate=degenerate)


def apply_permutation(
    h_hat: np.ndarray, d_hat: np.ndarray, pmap: PermutationMap
) -> tuple[np.ndarray, np.ndarray]:
    """Reorder the factors into schedule order without touching the product.

    Returns (H_check, D_check) with ``D_check = Γᵀ D_hat`` and
    ``H_check = H_hat Γ``; the product H_check @ D_check equals
    H_hat @ D_hat exactly because this is a pure reindexing.
    """
    if h_hat.shape[1] != pmap.size or d_hat.shape[0] != pmap.size:
        raise ValueError("permutation size must match the shared factor dimension")
    h_check = np.empty_like(h_hat)
    d_check = np.empty_like(d_hat)
    h_check[:, pmap.perm] = h_hat
    d_check[pmap.perm, :] = d_hat
    return h_check, d_check


def nmse_ambiguity_aware(
    h_true: np.ndarray, h_hat: np.ndarray, pmap: PermutationMap | None = None
) -> float:
    """Column-matched NMSE in dB after absorbing scalar and phase ambiguities.

    Permutes the estimate by ``pmap`` (identity when None), scales each
    column by the least-squares complex scalar c_l = (h_hat_lᴴ h_l) / ‖h_hat_l‖²,
    and reports 10 log10 of the relative squared error.  Exact matches are
    floored at -300 dB; a zero estimated column gets scalar 0.
    """
    h_true = np.asarray(h_true)
    h_hat = np.asarray(h_hat)
    if h_true.shape != h_hat.shape:
        raise ValueError("estimate and truth must have the same shape")
    if pmap is not None:
        aligned = np.empty_like(h_hat)
        aligned[:, pmap.perm] = h_hat
    else:
        aligned = h_hat
    num = 0.0
    den = 0.0
    for col in range(h_true.shape[1]):
        h_col = h_true[:, col]
        e_col = aligned[:, col]
        e_energy = float(np.vdot(e_col, e_col).real)
        scale = np.vdot(e_col, h_col) / e_energy if e_energy > 0.0 else 0.0
        num += float(np.linalg.norm(scale * e_col - h_col) ** 2)
        den += float(np.linalg.norm(h_col) ** 2)
    if den == 0.0:
        raise ValueError("true matrix must be nonzero")
    return max(10.0 * np.log10(max(num / den, 0.0) + 1e-300), NMSE_FLOOR_DB)
