"""Reflector phase design, eigenmode precoding, and achievable-rate evaluation.

The reflected downlink channel is G_dl Φ H_dl with a diagonal Φ of
unit-modulus entries.  Aligning each element's phase against the direct
link maximizes an approximate total channel gain and admits a closed form;
a guarded coordinate search over the exact gain serves as the reference.
Precoders and combiners come from the dominant singular subspace of the
composite channel estimate, and the rate is always scored on the true
composite channel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "PhaseConfig",
    "EigenmodeLink",
    "composite_channel",
    "optimal_phases",
    "grid_search_phases",
    "eigenmode",
    "achievable_rate",
    "channel_gain",
]

GRID_SEARCH_MAX_ELEMENTS = 16


@dataclass(frozen=True)
class PhaseConfig:
    """Per-element reflection coefficients: phases in (0, 2pi], on/off amplitudes.

    ``no_preference`` marks elements whose objective coefficient vanished,
    where the phase is an arbitrary default rather than a maximizer.
    """

    phases: np.ndarray
    amplitudes: np.ndarray
    no_preference: np.ndarray | None = None

    def __post_init__(self):
        phases = np.asarray(self.phases, dtype=float)
        amplitudes = np.asarray(self.amplitudes, dtype=float)
        object.__setattr__(self, "phases", phases)
        object.__setattr__(self, "amplitudes", amplitudes)
        if phases.ndim != 1 or amplitudes.shape != phases.shape:
            raise ValueError("phases and amplitudes must be vectors of equal length")
        if ((phases <= 0) | (phases > 2 * np.pi + 1e-12)).any():
            raise ValueError("phases must lie in (0, 2pi]")
        if not np.isin(amplitudes, (0.0, 1.0)).all():
            raise ValueError("amplitudes must be 0 or 1")
        flag = self.no_preference
        flag = np.zeros(phases.size, dtype=bool) if flag is None else np.asarray(flag, bool)
        if flag.shape != phases.shape:
            raise ValueError("no_preference mask must match the phase vector")
        object.__setattr__(self, "no_preference", flag)

    @property
    def size(self) -> int:
        return int(self.phases.size)

    def coefficients(self) -> np.ndarray:
        """Diagonal entries of Φ: amplitude times unit-modulus phase factor."""
        return self.amplitudes * np.exp(1j * self.phases)

    def matrix(self) -> np.ndarray:
        return np.diag(self.coefficients())

    @classmethod
    def all_off(cls, size: int) -> "PhaseConfig":
        """Reflector disabled: every amplitude zero (phase value immaterial)."""
        return cls(phases=np.full(size, 2 * np.pi), amplitudes=np.zeros(size))

    @classmethod
    def random(cls, rng: np.random.Generator, size: int) -> "PhaseConfig":
        """Independent uniform phases on (0, 2pi], all elements on."""
        phases = 2 * np.pi * (1.0 - rng.uniform(size=size))
        return cls(phases=phases, amplitudes=np.ones(size))


@dataclass(frozen=True)
class EigenmodeLink:
    """Orthonormal precoder W (M x N_s) and combiner V (N x N_s).

    ``rank_deficient`` flags links whose stream count exceeds the numerical
    rank of the channel estimate, where the trailing singular vectors carry
    no signal but keep the frames orthonormal.
    """

    W: np.ndarray
    V: np.ndarray
    N_s: int
    rank_deficient: bool = False

    def __post_init__(self):
        for name, mat in (("W", self.W), ("V", self.V)):
            if mat.ndim != 2 or mat.shape[1] != self.N_s:
                raise ValueError(f"{name} must have N_s columns")
            gram = mat.conj().T @ mat
            if not np.allclose(gram, np.eye(self.N_s), atol=1e-10):
                raise ValueError(f"{name} columns must be orthonormal")


def _phase_into_interval(phi: np.ndarray) -> np.ndarray:
    """Wrap angles into (0, 2pi], mapping 0 to 2pi."""
    wrapped = np.mod(phi, 2 * np.pi)
    return np.where(wrapped <= 0.0, wrapped + 2 * np.pi, wrapped)


def composite_channel(
    g_dl: np.ndarray, phi: PhaseConfig | np.ndarray, h_dl: np.ndarray, z_dl: np.ndarray
) -> np.ndarray:
    """Downlink composite Δ = G_dl Φ H_dl + Z_dl (N x M)."""
    if isinstance(phi, PhaseConfig):
        coeff = phi.coefficients()
    else:
        phi = np.asarray(phi)
        if phi.ndim != 2 or phi.shape[0] != phi.shape[1]:
            raise ValueError("phase matrix must be square")
        if np.count_nonzero(phi - np.diag(np.diag(phi))):
            raise ValueError("phase matrix must be diagonal")
        coeff = np.diag(phi)
    if g_dl.shape[1] != coeff.size or h_dl.shape[0] != coeff.size:
        raise ValueError("reflector dimension mismatch")
    if z_dl.shape != (g_dl.shape[0], h_dl.shape[1]):
        raise ValueError("direct term shape mismatch")
    return (g_dl * coeff[np.newaxis, :]) @ h_dl + z_dl


def channel_gain(
    g_dl: np.ndarray, phi: PhaseConfig | np.ndarray, h_dl: np.ndarray, z_dl: np.ndarray
) -> float:
    """Exact total gain ‖G_dl Φ H_dl + Z_dl‖²_F."""
    return float(np.linalg.norm(composite_channel(g_dl, phi, h_dl, z_dl)) ** 2)


def optimal_phases(g_dl: np.ndarray, h_dl: np.ndarray, z_dl: np.ndarray) -> PhaseConfig:
    """Closed-form per-element phases maximizing the approximate total gain.

    Element l couples to the direct link through
    c_l = Σ_{i,j} conj(z_{i,j}) g_{i,l} h_{l,j}; the gain term
    2 Re{c_l e^{j φ_l}} is maximized by φ_l = -arg(c_l), extracted with the
    four-quadrant angle.  A vanishing c_l gives no preference; the phase
    defaults to 2pi and is flagged.
    """
    for mat in (g_dl, h_dl, z_dl):
        if not np.isfinite(mat).all():
            raise ValueError("channel estimates must be finite")
    coupling = (g_dl.T @ z_dl.conj()) * h_dl
    c = coupling.sum(axis=1)
    no_pref = c == 0
    phases = _phase_into_interval(-np.angle(c))
    phases[no_pref] = 2 * np.pi
    return PhaseConfig(phases=phases, amplitudes=np.ones(c.size), no_preference=no_pref)


def grid_search_phases(
    g_dl: np.ndarray,
    h_dl: np.ndarray,
    z_dl: np.ndarray,
    points_per_element: int = 64,
    passes: int = 2,
) -> PhaseConfig:
    """Coordinate ascent of the exact gain over per-element phase grids.

    Starts from the closed-form phases and sweeps the elements in order,
    rescanning each on a uniform grid of ``points_per_element`` angles with
    the current phase kept in the candidate set, so the exact objective
    never decreases.  Exhaustive per-element scanning is quadratic in the
    element count, hence the small-array guard.
    """
    l = g_dl.shape[1]
    if l > GRID_SEARCH_MAX_ELEMENTS:
        raise ValueError(f"grid search is guarded to at most {GRID_SEARCH_MAX_ELEMENTS} elements")
    if points_per_element < 1 or passes < 1:
        raise ValueError("need at least one grid point and one pass")
    start = optimal_phases(g_dl, h_dl, z_dl)
    phases = start.phases.copy()
    grid = 2 * np.pi * (np.arange(1, points_per_element + 1)) / points_per_element
    outer = [np.outer(g_dl[:, el], h_dl[el, :]) for el in range(l)]
    delta = composite_channel(g_dl, PhaseConfig(phases, np.ones(l)), h_dl, z_dl)
    for _ in range(passes):
        for el in range(l):
            # Gain as a function of this element's phase alone:
            # const + 2 Re{e^{j theta} s}, evaluated on grid plus current.
            s = np.vdot(delta, outer[el]) - np.exp(-1j * phases[el]) * (
                np.linalg.norm(outer[el]) ** 2
            )
            candidates = np.append(grid, phases[el])
            best = candidates[np.argmax(np.real(np.exp(1j * candidates) * s))]
            if best != phases[el]:
                delta += (np.exp(1j * best) - np.exp(1j * phases[el])) * outer[el]
                phases[el] = best
    return PhaseConfig(phases=phases, amplitudes=np.ones(l))


def eigenmode(delta_hat: np.ndarray, n_s: int) -> EigenmodeLink:
    """Dominant-subspace precoder/combiner pair from the composite estimate.

    W collects the top right singular vectors, V the matching left ones, so
    Vᴴ Δ̂ W is the leading singular-value diagonal.  Each precoder column is
    rotated to make its largest-magnitude entry real and positive, and the
    matching combiner column gets the same rotation, which fixes a
    deterministic convention without disturbing Vᴴ Δ̂ W.
    """
    n, m = delta_hat.shape
    if not 1 <= n_s <= min(n, m):
        raise ValueError("stream count must lie in [1, min(N, M)]")
    u, sv, vh = np.linalg.svd(delta_hat, full_matrices=False)
    w = vh[:n_s].conj().T.copy()
    v = u[:, :n_s].copy()
    for k in range(n_s):
        anchor = np.argmax(np.abs(w[:, k]))
        rot = np.exp(-1j * np.angle(w[anchor, k]))
        w[:, k] *= rot
        v[:, k] *= rot
    deficient = bool(np.count_nonzero(sv > sv[0] * 1e-12) < n_s) if sv.size else True
    return EigenmodeLink(W=w, V=v, N_s=n_s, rank_deficient=deficient)


def achievable_rate(delta_true: np.ndarray, w: np.ndarray, v: np.ndarray, rho: float) -> float:
    """Rate log2 det(I + ρ Wᴴ Δᴴ V Vᴴ Δ W) in bits/s/Hz on the true channel."""
    if rho <= 0:
        raise ValueError("rho must be > 0")
    projected = v.conj().T @ delta_true @ w
    quad = projected.conj().T @ projected
    quad = (quad + quad.conj().T) / 2.0
    sign, logdet = np.linalg.slogdet(np.eye(w.shape[1]) + rho * quad)
    if sign.real <= 0:
        raise ValueError("rate determinant must be positive for a PSD argument")
    return float(logdet / np.log(2.0))
