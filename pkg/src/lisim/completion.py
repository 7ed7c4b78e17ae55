"""Low-rank matrix completion of the reflected channel via normalized IHT.

Once the permutation is removed, the masked coefficient matrix observes
S ∘ (G X_b) where F = G X_b has rank bounded by the reflected channel's
path count.  Normalized iterative hard thresholding fills in the unobserved
entries of F, and the user-side channel is read off with a right
pseudoinverse of the training block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

__all__ = ["CompletionProblem", "hard_threshold_rank", "niht"]

RESIDUAL_TOL = 1e-10
STAGNATION_RTOL = 1e-8
STAGNATION_WINDOW = 10


@dataclass(frozen=True)
class CompletionProblem:
    """Masked completion instance: recover G from S ∘ (G X_b) entries.

    ``D_check`` is the permutation-corrected coefficient estimate (L x T_r),
    ``mask`` the 0/1 observation schedule of the same shape, ``X_b`` the
    known training block (N x T_r) with full row rank, and ``rank`` the
    target rank of F = G X_b.
    """

    D_check: np.ndarray
    mask: np.ndarray
    X_b: np.ndarray
    rank: int
    max_iter: int = 500

    def __post_init__(self):
        d = np.asarray(self.D_check)
        mask = np.asarray(self.mask)
        x_b = np.asarray(self.X_b)
        if d.ndim != 2 or mask.shape != d.shape:
            raise ValueError("mask must match the coefficient matrix shape")
        if not np.isin(mask, (0, 1)).all():
            raise ValueError("mask entries must be 0 or 1")
        if x_b.ndim != 2 or x_b.shape[1] != d.shape[1]:
            raise ValueError("training block must share the time dimension")
        if not 1 <= self.rank <= min(d.shape):
            raise ValueError("rank must lie in [1, min(L, T_r)]")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if np.linalg.matrix_rank(x_b) < x_b.shape[0]:
            raise ValueError("training block must have full row rank")

    @property
    def observed_entries(self) -> int:
        return int(np.count_nonzero(self.mask))

    def degrees_of_freedom(self) -> int:
        """Parameter count r(L + T_r - r) of a rank-r L x T_r matrix."""
        l, t_r = self.D_check.shape
        return self.rank * (l + t_r - self.rank)


def hard_threshold_rank(q: np.ndarray, r: int) -> np.ndarray:
    """Best rank-r approximation of q in Frobenius norm (truncated SVD)."""
    if r < 1:
        raise ValueError("rank must be >= 1")
    if r >= min(q.shape):
        return np.asarray(q).copy()
    u, sv, vh = np.linalg.svd(q, full_matrices=False)
    return (u[:, :r] * sv[:r]) @ vh[:r]


def _top_left_subspace(q: np.ndarray, r: int) -> np.ndarray:
    """Orthonormal basis of the top-r left singular subspace of q.

    Computed from a Hermitian eigendecomposition of the smaller Gram
    factor, which only touches the short side of the matrix.  Matches the
    SVD subspace whenever the r-th singular value is well separated from
    machine noise, which holds for every iterate this solver produces.
    """
    rows, cols = q.shape
    if rows <= cols:
        _, vecs = np.linalg.eigh(q @ q.conj().T)
        return vecs[:, rows - r :]
    _, vecs = np.linalg.eigh(q.conj().T @ q)
    u = q @ vecs[:, cols - r :]
    norms = np.linalg.norm(u, axis=0)
    return u / np.where(norms > 0, norms, 1.0)


def niht(
    problem: CompletionProblem, *, track_residuals: bool = False
) -> np.ndarray | tuple[np.ndarray, np.ndarray]:
    """Run normalized IHT and extract the user-side channel (L x N).

    Starts from the rank-truncated masked data, then repeats: step along
    the masked residual with the adaptive size
    alpha = ‖P_U(S ∘ (D - F))‖² / ‖S ∘ P_U(S ∘ (D - F))‖², where P_U
    projects onto the current column space, and truncate back to the
    target rank.  Stepping along the full residual (rather than its
    projection) is what lets the column space move; the projected
    quantity appears only in the step size, where it is an exact line
    search over the current subspace.  Stops at ``max_iter``, a
    near-zero masked residual, or residual stagnation; a zero step
    denominator signals an exact fit on the observed entries.  Returns
    F X_bᴴ (X_b X_bᴴ)⁻¹, optionally with the masked residual trajectory.
    """
    d = np.asarray(problem.D_check, dtype=np.complex128)
    mask = np.asarray(problem.mask, dtype=float)
    seed = mask * d
    u = _top_left_subspace(seed, problem.rank)
    f = u @ (u.conj().T @ seed)
    residuals = [float(np.linalg.norm(mask * (d - f)))]
    for it in range(problem.max_iter):
        res = residuals[-1]
        if res < RESIDUAL_TOL:
            break
        if it >= STAGNATION_WINDOW:
            past = residuals[-1 - STAGNATION_WINDOW]
            if abs(past - res) <= STAGNATION_RTOL * max(past, 1e-300):
                break
        u = _top_left_subspace(f, problem.rank)
        masked_gap = mask * (d - f)
        proj = u @ (u.conj().T @ masked_gap)
        denom = float(np.linalg.norm(mask * proj) ** 2)
        if denom == 0.0:
            break
        alpha = float(np.linalg.norm(proj) ** 2) / denom
        step = f + alpha * masked_gap
        u = _top_left_subspace(step, problem.rank)
        f = u @ (u.conj().T @ step)
        residuals.append(float(np.linalg.norm(mask * (d - f))))
    g_check = _extract_channel(f, np.asarray(problem.X_b, dtype=np.complex128))
    if track_residuals:
        return g_check, np.asarray(residuals)
    return g_check


def _extract_channel(f: np.ndarray, x_b: np.ndarray) -> np.ndarray:
    """Right pseudoinverse read-off G = F X_bᴴ (X_b X_bᴴ)⁻¹."""
    gram = x_b @ x_b.conj().T
    try:
        return scipy.linalg.solve(gram, (f @ x_b.conj().T).conj().T, assume_a="her").conj().T
    except np.linalg.LinAlgError as exc:
        raise ValueError("rank-deficient training Gram matrix") from exc
