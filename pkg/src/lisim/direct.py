"""Stage-1 direct-link estimation: pilot observation and regularized MMSE."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

__all__ = [
    "Stage1Observation",
    "simulate_stage1",
    "rmmse_estimate",
    "stage2_error_variance",
]


@dataclass(frozen=True)
class Stage1Observation:
    """AP-side pilot observation Y (M x T_d) and the per-entry noise variance."""

    Y: np.ndarray
    noise_var: float

    def __post_init__(self):
        if self.noise_var < 0:
            raise ValueError("noise_var must be >= 0")


def complex_noise(rng: np.random.Generator, shape, var: float) -> np.ndarray:
    """Circularly symmetric Gaussian noise with per-entry variance ``var``."""
    if var < 0:
        raise ValueError("variance must be >= 0")
    if var == 0:
        return np.zeros(shape, dtype=np.complex128)
    draw = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return draw * np.sqrt(var / 2.0)


def simulate_stage1(
    rng: np.random.Generator, z_up: np.ndarray, x_a: np.ndarray, noise_var: float
) -> Stage1Observation:
    """Observe Y = Z_up X_a + noise for the uplink direct map Z_up (M x N)."""
    if z_up.shape[1] != x_a.shape[0]:
        raise ValueError("pilot streams must match transmit antennas")
    y = z_up @ x_a + complex_noise(rng, (z_up.shape[0], x_a.shape[1]), noise_var)
    return Stage1Observation(Y=y, noise_var=float(noise_var))


def rmmse_estimate(y: np.ndarray, x_a: np.ndarray, noise_var: float) -> np.ndarray:
    """Regularized MMSE estimate of the uplink direct map (M x N).

    Computes Y (X_aᴴ X_a + s I)⁻¹ X_aᴴ through the push-through identity
    Y X_aᴴ (X_a X_aᴴ + s I_N)⁻¹, an N x N Hermitian solve that stays
    well-posed at s = 0 whenever X_a has full row rank.
    """
    if noise_var < 0:
        raise ValueError("noise_var must be >= 0")
    n = x_a.shape[0]
    gram = x_a @ x_a.conj().T + noise_var * np.eye(n)
    try:
        # Right-multiplication by the Hermitian inverse via one solve.
        return scipy.linalg.solve(gram, (y @ x_a.conj().T).conj().T, assume_a="her").conj().T
    except np.linalg.LinAlgError as exc:
        raise ValueError("singular pilot Gram system (rank-deficient X_a at zero noise)") from exc


def stage2_error_variance(noise_var: float, m: int, power: float) -> float:
    """Residual direct-link error folded into stage-2 noise: s M / (p + s M)."""
    if noise_var < 0 or power <= 0 or m < 1:
        raise ValueError("need noise_var >= 0, power > 0, m >= 1")
    return noise_var * m / (power + noise_var * m)
