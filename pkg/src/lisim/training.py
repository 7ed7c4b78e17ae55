"""Training signal construction: pilot matrices and sparse reflection schedules."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "TrainingMatrix",
    "PhaseSchedule",
    "dft_training",
    "random_training",
    "sparse_schedule",
]

_RANK_RETRIES = 16


@dataclass(frozen=True)
class TrainingMatrix:
    """Pilot block X (N x T) with total energy ||X||_F^2 = power."""

    X: np.ndarray
    power: float

    def __post_init__(self):
        if self.power <= 0:
            raise ValueError("power must be positive")

    @property
    def num_streams(self) -> int:
        return self.X.shape[0]

    @property
    def num_uses(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class PhaseSchedule:
    """Binary ON/OFF reflection schedule S (L x T_r), K ones per column."""

    S: np.ndarray
    sparsity_rate: float
    per_column_support: tuple = field(repr=False, default=())

    @property
    def num_elements(self) -> int:
        return self.S.shape[0]

    @property
    def num_uses(self) -> int:
        return self.S.shape[1]

    @property
    def ones_per_column(self) -> int:
        return int(np.ceil(self.sparsity_rate * self.S.shape[0]))


def dft_training(n: int, t_d: int, power: float) -> TrainingMatrix:
    """Row-orthogonal DFT pilots: entry (m, t) = sqrt(power/(t_d n)) e^{j 2 pi m t / t_d}.

    Requires t_d >= n so that X Xᴴ = (power/n) I_n.
    """
    if n < 1 or t_d < n:
        raise ValueError("need t_d >= n >= 1 for row-orthogonal pilots")
    if power <= 0:
        raise ValueError("power must be positive")
    m = np.arange(n)[:, None]
    t = np.arange(t_d)[None, :]
    x = np.sqrt(power / (t_d * n)) * np.exp(2j * np.pi * m * t / t_d)
    return TrainingMatrix(X=x, power=float(power))


def random_training(rng: np.random.Generator, n: int, t_r: int, power: float) -> TrainingMatrix:
    """I.i.d. circular Gaussian pilots rescaled to ||X||_F^2 = power, full row rank."""
    if n < 1 or t_r < n:
        raise ValueError("need t_r >= n >= 1 for a full-row-rank pilot block")
    if power <= 0:
        raise ValueError("power must be positive")
    for _ in range(_RANK_RETRIES):
        x = (rng.standard_normal((n, t_r)) + 1j * rng.standard_normal((n, t_r))) / np.sqrt(2.0)
        if np.linalg.matrix_rank(x) == n:
            x *= np.sqrt(power) / np.linalg.norm(x)
            return TrainingMatrix(X=x, power=float(power))
    raise RuntimeError("failed to draw a full-row-rank pilot block")


def sparse_schedule(rng: np.random.Generator, l: int, t_r: int, rho: float) -> PhaseSchedule:
    """K-sparse ON/OFF columns, K = ceil(rho l), with pairwise-distinct rows.

    Column supports are drawn uniformly without replacement; the whole draw is
    repeated if any two rows coincide (vanishing probability at working sizes).
    """
    if l < 1 or t_r < 1:
        raise ValueError("dimensions must be >= 1")
    if not (0.0 < rho <= 1.0):
        raise ValueError("rho must lie in (0, 1]")
    k = int(np.ceil(rho * l))
    for _ in range(_RANK_RETRIES):
        s = np.zeros((l, t_r), dtype=np.float64)
        supports = []
        for t in range(t_r):
            idx = rng.choice(l, size=k, replace=False)
            idx.sort()
            s[idx, t] = 1.0
            supports.append(tuple(int(i) for i in idx))
        # Row distinctness is only meaningful below full density; at K = L
        # every row is all ones by construction.
        if k == l or len({row.tobytes() for row in s}) == l:
            return PhaseSchedule(S=s, sparsity_rate=float(rho), per_column_support=tuple(supports))
    raise RuntimeError("failed to draw a schedule with distinct rows")
